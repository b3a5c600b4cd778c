//! Reciprocal moments `θ_k(t) = E[λ_t^{-k}]` of the intensity.
//!
//! With `λ₀ = 1`, `m_k^S = E[e^{kX}] − 1`, `m_k^E = E[e^{kY}] − 1` and
//! `ψ_k = kβ − ρ m_k^E`, the moments solve the linear cascade
//!
//! ```text
//! θ_k' + ψ_k θ_k = m_k^S θ_{k−1},   θ_k(0) = 1,   θ_0 ≡ 1
//! ```
//!
//! Orders one and two have closed forms; higher orders are obtained from
//! the integrating-factor representation
//! `θ_k(t) = e^{−ψ_k t} + m_k^S ∫₀ᵗ e^{−ψ_k (t−s)} θ_{k−1}(s) ds`
//! by adaptive quadrature. Every `ψ_k` must be positive.

use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::{integrate, Tolerance};

/// One failed existence or stability condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    DivergentSelfMoment { k: u32 },
    DivergentExternalMoment { k: u32 },
    Unstable { k: u32, psi: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::DivergentSelfMoment { k } => write!(f, "order {k}: self jump moment m_{k}^S diverges"),
            Self::DivergentExternalMoment { k } => {
                write!(f, "order {k}: external jump moment m_{k}^E diverges")
            }
            Self::Unstable { k, psi } => {
                write!(f, "order {k}: psi_{k} = {k}*beta - rho*m_{k}^E = {psi} is not positive")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("reciprocal-moment formulas require lambda0 = 1 (got {0})")]
    InitialIntensity(f64),
    #[error("reciprocal moments unavailable: {}", join(.0))]
    Violations(Vec<Violation>),
    #[error("order {requested} requested but only {prepared} prepared")]
    OrderNotPrepared { requested: u32, prepared: u32 },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(Violation::to_string).collect::<Vec<_>>().join("; ")
}

/// Jump moments and relaxation rates for orders `1..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentParams {
    m_self: Vec<f64>,
    m_ext: Vec<f64>,
    psi: Vec<f64>,
}

/// Relative gap `|ψ₂ − ψ₁|` below which the coincident-rate limit is used.
const DEGENERACY: f64 = 1e-8;

impl MomentParams {
    /// Computes the moments and checks every condition up to `max_order`,
    /// reporting all failures together.
    pub fn new(params: &ModelParams, max_order: u32) -> Result<Self, MomentError> {
        if params.lambda0 != 1.0 {
            return Err(MomentError::InitialIntensity(params.lambda0));
        }
        let mut violations = Vec::new();
        let mut m_self = Vec::new();
        let mut m_ext = Vec::new();
        for k in 1..=max_order {
            match params.jump_self.exp_moment(k) {
                Ok(m) => m_self.push(m),
                Err(_) => {
                    violations.push(Violation::DivergentSelfMoment { k });
                    m_self.push(f64::INFINITY);
                }
            }
            match params.jump_ext.exp_moment(k) {
                Ok(m) => m_ext.push(m),
                // without an external stream the moment never enters
                Err(_) if params.rho == 0.0 => m_ext.push(f64::INFINITY),
                Err(_) => {
                    violations.push(Violation::DivergentExternalMoment { k });
                    m_ext.push(f64::INFINITY);
                }
            }
        }
        Self::assemble(params.beta, params.rho, m_self, m_ext, violations)
    }

    /// Builds from explicit moment values, `m_self[k-1] = m_k^S`.
    pub fn from_raw(beta: f64, rho: f64, m_self: Vec<f64>, m_ext: Vec<f64>) -> Result<Self, MomentError> {
        assert_eq!(m_self.len(), m_ext.len(), "moment sequences differ in length");
        Self::assemble(beta, rho, m_self, m_ext, Vec::new())
    }

    fn assemble(
        beta: f64,
        rho: f64,
        m_self: Vec<f64>,
        m_ext: Vec<f64>,
        mut violations: Vec<Violation>,
    ) -> Result<Self, MomentError> {
        let psi: Vec<f64> = m_ext
            .iter()
            .enumerate()
            .map(|(i, &me)| {
                let k = (i + 1) as f64;
                if rho == 0.0 {
                    k * beta
                } else {
                    k * beta - rho * me
                }
            })
            .collect();
        for (i, &p) in psi.iter().enumerate() {
            let k = i as u32 + 1;
            let divergent = violations.contains(&Violation::DivergentExternalMoment { k });
            if !divergent && !(p > 0.0) {
                violations.push(Violation::Unstable { k, psi: p });
            }
        }
        if !violations.is_empty() {
            violations.sort_by_key(|v| match *v {
                Violation::DivergentSelfMoment { k }
                | Violation::DivergentExternalMoment { k }
                | Violation::Unstable { k, .. } => k,
            });
            return Err(MomentError::Violations(violations));
        }
        Ok(Self { m_self, m_ext, psi })
    }

    pub fn max_order(&self) -> u32 {
        self.psi.len() as u32
    }

    /// `m_k^S`.
    pub fn m_self(&self, k: u32) -> f64 {
        self.m_self[k as usize - 1]
    }

    /// `m_k^E`.
    pub fn m_ext(&self, k: u32) -> f64 {
        self.m_ext[k as usize - 1]
    }

    /// `ψ_k`.
    pub fn psi(&self, k: u32) -> f64 {
        self.psi[k as usize - 1]
    }

    fn require(&self, k: u32) -> Result<(), MomentError> {
        if k == 0 || k > self.max_order() {
            return Err(MomentError::OrderNotPrepared {
                requested: k,
                prepared: self.max_order(),
            });
        }
        Ok(())
    }

    /// Stationary level `m_1^S / ψ_1`.
    pub fn theta1_limit(&self) -> f64 {
        self.m_self(1) / self.psi(1)
    }

    /// `E[λ_t^{-1}] = e^{−ψ₁t} + (m₁^S/ψ₁)(1 − e^{−ψ₁t})`.
    pub fn theta1(&self, t: f64) -> f64 {
        let psi = self.psi(1);
        let decay = (-psi * t).exp();
        decay - self.theta1_limit() * (-psi * t).exp_m1()
    }

    /// `E[λ_t^{-2}]`.
    ///
    /// Written through `D(t) = (e^{−ψ₁t} − e^{−ψ₂t}) / (ψ₂ − ψ₁)` as
    /// `e^{−ψ₂t} + m₂^S [D + (m₁^S/ψ₁)((1 − e^{−ψ₂t})/ψ₂ − D)]`, which
    /// rearranges the usual closed form so that the coincident-rate limit
    /// `D → t e^{−ψ₁t}` can be substituted directly.
    pub fn theta2(&self, t: f64) -> f64 {
        let (p1, p2) = (self.psi(1), self.psi(2));
        let gap = p2 - p1;
        let d = if gap.abs() < DEGENERACY * p1.max(p2) {
            t * (-p1 * t).exp()
        } else {
            -(-p1 * t).exp() * (-gap * t).exp_m1() / gap
        };
        let relax2 = -(-p2 * t).exp_m1() / p2;
        (-p2 * t).exp() + self.m_self(2) * (d + self.theta1_limit() * (relax2 - d))
    }

    /// Stationary level of `θ₂`, `m₂^S θ₁(∞) / ψ₂`.
    pub fn theta2_limit(&self) -> f64 {
        self.m_self(2) * self.theta1_limit() / self.psi(2)
    }

    /// `E[λ_t^{-1} λ_s^{-1}]` for `s ≤ t`.
    pub fn product_moment(&self, s: f64, t: f64) -> f64 {
        let decay = (-self.psi(1) * (t - s)).exp();
        let relax = -(-self.psi(1) * (t - s)).exp_m1();
        decay * self.theta2(s) + self.theta1_limit() * relax * self.theta1(s)
    }

    /// `Cov(λ_s^{-1}, λ_t^{-1})` for `s ≤ t`.
    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        self.product_moment(s, t) - self.theta1(t) * self.theta1(s)
    }

    /// `θ_k` at one time by nested quadrature.
    fn theta_quadrature(&self, k: u32, t: f64, tol: Tolerance) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let psi = self.psi(k);
        let inner = Tolerance {
            abs: tol.abs * 1e-2,
            rel: tol.rel * 1e-2,
            ..tol
        };
        let integral = integrate(
            |s| (-psi * (t - s)).exp() * self.theta_quadrature(k - 1, s, inner),
            0.0,
            t,
            tol,
        );
        (-psi * t).exp() + self.m_self(k) * integral.value
    }

    /// `θ_k` on an ascending grid, stepping panel by panel:
    /// `θ_k(b) = e^{−ψ_k(b−a)} θ_k(a) + m_k^S ∫ₐᵇ e^{−ψ_k(b−s)} θ_{k−1}(s) ds`.
    pub fn theta_k_recursive(&self, k: u32, grid: &[f64]) -> Result<MomentCurve> {
        self.require(k)?;
        check_grid(grid)?;
        let tol = Tolerance {
            abs: 1e-12,
            rel: 1e-10,
            max_panels: 4000,
        };
        let inner = Tolerance {
            abs: 1e-14,
            rel: 1e-12,
            max_panels: 4000,
        };
        let psi = self.psi(k);
        let mut values = Vec::with_capacity(grid.len());
        let (mut a, mut theta) = (0.0, 1.0);
        for &b in grid {
            if b > a {
                let panel = integrate(
                    |s| (-psi * (b - s)).exp() * self.theta_quadrature(k - 1, s, inner),
                    a,
                    b,
                    tol,
                );
                theta = (-psi * (b - a)).exp() * theta + self.m_self(k) * panel.value;
                a = b;
            }
            values.push(theta);
        }
        Ok(MomentCurve {
            times: grid.to_vec(),
            values,
            order: k,
            source: CurveSource::Theory,
            ci_half_width: None,
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("time grid must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("time grid must be ascending".into()));
    }
    Ok(())
}

fn check_time(name: &'static str, t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: t,
            range: "[0, inf)",
        })
    }
}

fn check_pair(s: f64, t: f64) -> Result<()> {
    check_time("s", s)?;
    check_time("t", t)?;
    if s > t {
        return Err(Error::InvalidInput(format!("need s <= t, got s = {s}, t = {t}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    Theory,
    MonteCarlo,
}

/// `θ_k` over a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub order: u32,
    pub source: CurveSource,
    /// 95% half-widths, Monte Carlo curves only.
    pub ci_half_width: Option<Vec<f64>>,
}

pub fn theta1(params: &ModelParams, t: f64) -> Result<f64> {
    check_time("t", t)?;
    Ok(MomentParams::new(params, 1)?.theta1(t))
}

pub fn theta2(params: &ModelParams, t: f64) -> Result<f64> {
    check_time("t", t)?;
    Ok(MomentParams::new(params, 2)?.theta2(t))
}

pub fn theta_k_recursive(params: &ModelParams, k: u32, grid: &[f64]) -> Result<MomentCurve> {
    if k == 0 {
        return Err(Error::InvalidInput("moment order must be at least 1".into()));
    }
    MomentParams::new(params, k)?.theta_k_recursive(k, grid)
}

pub fn product_moment(params: &ModelParams, s: f64, t: f64) -> Result<f64> {
    check_pair(s, t)?;
    Ok(MomentParams::new(params, 2)?.product_moment(s, t))
}

pub fn covariance(params: &ModelParams, s: f64, t: f64) -> Result<f64> {
    check_pair(s, t)?;
    Ok(MomentParams::new(params, 2)?.covariance(s, t))
}

/// Theory curve of order `k`: closed forms for `k ≤ 2`, quadrature above.
pub fn theory_curve(params: &ModelParams, k: u32, grid: &[f64]) -> Result<MomentCurve> {
    match k {
        0 => Err(Error::InvalidInput("moment order must be at least 1".into())),
        1 | 2 => {
            check_grid(grid)?;
            let mp = MomentParams::new(params, k)?;
            let values = grid
                .iter()
                .map(|&t| if k == 1 { mp.theta1(t) } else { mp.theta2(t) })
                .collect();
            Ok(MomentCurve {
                times: grid.to_vec(),
                values,
                order: k,
                source: CurveSource::Theory,
                ci_half_width: None,
            })
        }
        _ => theta_k_recursive(params, k, grid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;

    fn fig4() -> ModelParams {
        ModelParams::new(1.0, 0.25, 1.25, JumpDist::exponential(3.0), JumpDist::exponential(10.0)).unwrap()
    }

    #[test]
    fn reference_constants() {
        let mp = MomentParams::new(&fig4(), 2).unwrap();
        assert!((mp.m_self(1) - 0.5).abs() < 1e-15);
        assert!((mp.m_ext(1) - 1.0 / 9.0).abs() < 1e-15);
        assert!((mp.psi(1) - 1.0 / 9.0).abs() < 1e-15);
        assert!((mp.m_self(2) - 2.0).abs() < 1e-15);
        assert!((mp.m_ext(2) - 0.25).abs() < 1e-15);
        assert!((mp.psi(2) - 0.1875).abs() < 1e-15);
        assert!((mp.theta1_limit() - 4.5).abs() < 1e-13);
        assert!((mp.theta2_limit() - 48.0).abs() < 1e-11);
    }

    #[test]
    fn theta1_values() {
        let p = fig4();
        assert_eq!(theta1(&p, 0.0).unwrap(), 1.0);
        let want = 4.5 - 3.5 * (-1f64).exp();
        assert!((theta1(&p, 9.0).unwrap() - want).abs() < 1e-13);
        assert!((theta1(&p, 9.0).unwrap() - 3.2124).abs() < 1e-4);
        assert!((theta1(&p, 1e4).unwrap() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn theta2_values() {
        let p = fig4();
        assert!((theta2(&p, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((theta2(&p, 1e4).unwrap() - 48.0).abs() < 1e-9);
    }

    /// The closed form as usually printed, with explicit `1/(ψ₂ − ψ₁)` factors.
    fn theta2_textbook(mp: &MomentParams, t: f64) -> f64 {
        let (p1, p2) = (mp.psi(1), mp.psi(2));
        let (e1, e2) = ((-p1 * t).exp(), (-p2 * t).exp());
        let a = mp.m_self(1) / p1;
        e2 + mp.m_self(2)
            * ((e1 - e2) / (p2 - p1) + a * ((1.0 / p2 - e1 / (p2 - p1)) - e2 * (1.0 / p2 - 1.0 / (p2 - p1))))
    }

    #[test]
    fn theta2_matches_textbook_form() {
        let mp = MomentParams::new(&fig4(), 2).unwrap();
        for i in 0..=50 {
            let t = i as f64;
            assert!((mp.theta2(t) - theta2_textbook(&mp, t)).abs() < 1e-11 * mp.theta2(t).max(1.0));
        }
    }

    #[test]
    fn ode_residuals_vanish() {
        let mp = MomentParams::new(&fig4(), 2).unwrap();
        let h = 1e-5;
        let mut t = 0.1;
        while t <= 50.0 {
            let d1 = (mp.theta1(t + h) - mp.theta1(t - h)) / (2.0 * h);
            let r1 = d1 + mp.psi(1) * mp.theta1(t) - mp.m_self(1);
            let d2 = (mp.theta2(t + h) - mp.theta2(t - h)) / (2.0 * h);
            let r2 = d2 + mp.psi(2) * mp.theta2(t) - mp.m_self(2) * mp.theta1(t);
            assert!(r1.abs() < 1e-6 && r2.abs() < 1e-6, "t={t}: {r1} {r2}");
            t += 0.1;
        }
    }

    #[test]
    fn theta1_relaxes_monotonically() {
        let up = MomentParams::new(&fig4(), 1).unwrap();
        let mut down_params = fig4();
        down_params.jump_self = JumpDist::exponential(30.0);
        let down = MomentParams::new(&down_params, 1).unwrap();
        assert!(down.theta1_limit() < 1.0);
        for i in 0..500 {
            let (a, b) = (i as f64 * 0.1, (i + 1) as f64 * 0.1);
            assert!(up.theta1(b) > up.theta1(a));
            assert!(down.theta1(b) < down.theta1(a));
        }
    }

    #[test]
    fn recursion_matches_closed_forms() {
        let p = fig4();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.5).collect();
        let c1 = theta_k_recursive(&p, 1, &grid).unwrap();
        let c2 = theta_k_recursive(&p, 2, &grid).unwrap();
        let mp = MomentParams::new(&p, 2).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((c1.values[i] - mp.theta1(t)).abs() < 1e-7);
            assert!((c2.values[i] - mp.theta2(t)).abs() < 1e-6);
        }
        assert_eq!(c1.values[0], 1.0);
    }

    #[test]
    fn third_order_with_exp3_marks_diverges() {
        let err = theta_k_recursive(&fig4(), 3, &[0.0, 1.0]).unwrap_err();
        match err {
            Error::Moments(MomentError::Violations(v)) => {
                assert!(v.contains(&Violation::DivergentSelfMoment { k: 3 }));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string(3).contains("order 3"));
    }

    fn err_string(k: u32) -> String {
        MomentParams::new(&fig4(), k).unwrap_err().to_string()
    }

    #[test]
    fn third_order_recursion_has_the_cascade_limit() {
        let mut p = fig4();
        p.jump_self = JumpDist::exponential(6.0);
        let mp = MomentParams::new(&p, 3).unwrap();
        let c = mp.theta_k_recursive(3, &[0.0, 400.0]).unwrap();
        let limit = mp.m_self(3) * mp.theta2_limit() / mp.psi(3);
        assert!((c.values[1] / limit - 1.0).abs() < 1e-8);
        assert_eq!(c.values[0], 1.0);
    }

    #[test]
    fn stability_violations_are_collected() {
        let p = ModelParams::new(1.0, 0.1, 5.0, JumpDist::exponential(3.0), JumpDist::exponential(2.5)).unwrap();
        match MomentParams::new(&p, 3).unwrap_err() {
            MomentError::Violations(v) => {
                assert!(v.iter().any(|x| matches!(x, Violation::Unstable { k: 1, .. })));
                assert!(v.iter().any(|x| matches!(x, Violation::Unstable { k: 2, .. })));
                assert!(v.contains(&Violation::DivergentSelfMoment { k: 3 }));
                assert!(v.contains(&Violation::DivergentExternalMoment { k: 3 }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_unit_initial_intensity() {
        let mut p = fig4();
        p.lambda0 = 2.0;
        assert!(matches!(
            theta1(&p, 1.0),
            Err(Error::Moments(MomentError::InitialIntensity(_)))
        ));
    }

    #[test]
    fn product_moment_limits() {
        let p = fig4();
        let mp = MomentParams::new(&p, 2).unwrap();
        assert!((product_moment(&p, 7.0, 7.0).unwrap() - mp.theta2(7.0)).abs() < 1e-13);
        let far = product_moment(&p, 7.0, 7.0 + 1e4).unwrap();
        assert!((far - 4.5 * mp.theta1(7.0)).abs() < 1e-9);
        assert!(product_moment(&p, 3.0, 2.0).is_err());
        assert!(covariance(&p, -1.0, 2.0).is_err());
    }

    #[test]
    fn covariance_limits() {
        let p = fig4();
        for t in [0.0, 1.0, 10.0, 50.0] {
            let var = covariance(&p, t, t).unwrap();
            assert!(var >= 0.0);
            let mp = MomentParams::new(&p, 2).unwrap();
            assert!((var - (mp.theta2(t) - mp.theta1(t).powi(2))).abs() < 1e-12);
        }
        assert!(covariance(&p, 500.0, 500.0 + 1e4).unwrap().abs() < 1e-9);
    }

    #[test]
    fn no_external_stream_equals_zeroed_external_moments() {
        let mut p = fig4();
        p.rho = 0.0;
        let mp = MomentParams::new(&p, 2).unwrap();
        let raw = MomentParams::from_raw(p.beta, 1.25, vec![mp.m_self(1), mp.m_self(2)], vec![0.0, 0.0]).unwrap();
        for (s, t) in [(0.0, 0.0), (1.0, 2.0), (3.0, 30.0), (10.0, 10.5)] {
            assert_eq!(mp.covariance(s, t), raw.covariance(s, t));
        }
    }

    #[test]
    fn coincident_rates_stay_continuous() {
        for eps in [0.0, 1e-14, 1e-10, 1e-8, 1e-7, 1e-5, 1e-3] {
            let psi1 = 0.05;
            let psi2 = psi1 * (1.0 + eps);
            let (beta, rho) = (0.25, 1.0);
            let raw = MomentParams::from_raw(beta, rho, vec![0.5, 2.0], vec![beta - psi1, 2.0 * beta - psi2]).unwrap();
            let grid: Vec<f64> = (0..=25).map(|i| i as f64 * 2.0).collect();
            let rec = raw.theta_k_recursive(2, &grid).unwrap();
            for (i, &t) in grid.iter().enumerate() {
                assert!(raw.theta2(t).is_finite());
                assert!((raw.theta2(t) - rec.values[i]).abs() < 1e-6, "eps={eps} t={t}");
            }
        }
    }
}
