//! Exact path generation by composition.
//!
//! After an arrival at `T°_k` with post-jump intensity `λ⁺`, the time to the
//! next arrival of the merged stream has survival function
//!
//! ```text
//! P(τ > t) = exp(−(λ⁺/β)(e^{βt} − 1)) · e^{−ρt}
//! ```
//!
//! which is the product of two independent survival functions: a self
//! clock `τ⁽¹⁾` with an explicit inverse and an exponential external clock
//! `τ⁽²⁾`. Drawing both and keeping the smaller one yields the next arrival
//! time and its attribution in a single step.

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lambert::lambert_w0_of_exp;
use crate::model::{Event, EventKind, EventLog, IntensityState, ModelParams};
use crate::rng::StreamSeed;

/// `P(τ ≤ t)` for the joint interarrival time after an arrival that left
/// the intensity at `lambda_post`.
pub fn interarrival_cdf(lambda_post: f64, params: &ModelParams, t: f64) -> f64 {
    debug_assert!(lambda_post > 0.0 && t >= 0.0);
    let hazard = lambda_post / params.beta * (params.beta * t).exp_m1() + params.rho * t;
    -(-hazard).exp_m1()
}

/// The two competing clocks of one composition step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionDraw {
    /// Candidate time to the next self-arrival.
    pub tau_self: f64,
    /// Candidate time to the next external arrival; `+inf` when `ρ = 0`.
    pub tau_external: f64,
    pub winner: EventKind,
}

impl CompositionDraw {
    /// Time to the next arrival of the merged stream.
    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau_self.min(self.tau_external)
    }
}

/// One composition step from the post-jump state, driven by two uniforms in `(0, 1)`.
///
/// Ties go to the self clock.
#[inline]
pub fn sample_composition(state: &IntensityState, params: &ModelParams, u1: f64, u2: f64) -> CompositionDraw {
    let beta = params.beta;
    // (1/β) ln(1 − (β/λ⁺) ln u₁), with β/λ⁺ formed in the log domain
    let tau_self = (beta * (-u1.ln()) * (-state.log_lambda).exp()).ln_1p() / beta;
    let tau_external = if params.rho > 0.0 {
        -u2.ln() / params.rho
    } else {
        f64::INFINITY
    };
    let winner = if tau_self <= tau_external {
        EventKind::SelfArrival
    } else {
        EventKind::External
    };
    CompositionDraw {
        tau_self,
        tau_external,
        winner,
    }
}

/// Inverse of [`interarrival_cdf`] through the Lambert W function.
///
/// With `a = λ⁺/β` and `c = a − ln(1 − u)`,
/// `t = c/ρ − W₀((λ⁺/ρ) e^{βc/ρ}) / β`. The Lambert argument is handled in
/// the log domain and the result gets two Newton polishing steps on the
/// cumulative hazard, which removes the cancellation between the two terms
/// when `ρ` is small. For `ρ = 0` the self-clock inverse is returned.
pub fn inverse_interarrival_cdf(lambda_post: f64, params: &ModelParams, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::OutOfRange {
            name: "u",
            value: u,
            range: "(0, 1)",
        });
    }
    if !(lambda_post > 0.0 && lambda_post.is_finite()) {
        return Err(Error::OutOfRange {
            name: "lambda_post",
            value: lambda_post,
            range: "(0, inf)",
        });
    }
    let beta = params.beta;
    let rho = params.rho;
    let target = -(-u).ln_1p();
    if rho == 0.0 {
        return Ok((beta * target / lambda_post).ln_1p() / beta);
    }

    let c = lambda_post / beta + target;
    let w = lambert_w0_of_exp((lambda_post / rho).ln() + beta * c / rho);
    let mut t = (c / rho - w / beta).max(0.0);
    for _ in 0..2 {
        let h = lambda_post / beta * (beta * t).exp_m1() + rho * t - target;
        let dh = lambda_post * (beta * t).exp() + rho;
        t = (t - h / dh).max(0.0);
    }
    Ok(t)
}

/// Simulates all self and external arrivals on `(0, end_time]`.
///
/// Deterministic in `seed`. Only the winning clock draws a mark.
pub fn simulate_path(params: &ModelParams, end_time: f64, seed: impl Into<StreamSeed>) -> Result<EventLog> {
    params.validate()?;
    if !(end_time > 0.0 && end_time.is_finite()) {
        return Err(Error::OutOfRange {
            name: "end_time",
            value: end_time,
            range: "(0, inf)",
        });
    }
    let mut rng = seed.into().rng();
    let mut state = IntensityState::initial(params);
    let mut events = Vec::new();
    loop {
        let u1: f64 = rng.sample(Open01);
        // u2 is irrelevant without an external stream; skip the draw
        let u2: f64 = if params.rho > 0.0 { rng.sample(Open01) } else { 0.5 };
        let draw = sample_composition(&state, params, u1, u2);
        let tau = draw.tau();
        if state.t + tau > end_time {
            break;
        }
        let log_intensity_before = state.advance(tau, params.beta);
        let mark = match draw.winner {
            EventKind::SelfArrival => params.jump_self.sample(&mut rng),
            EventKind::External => params.jump_ext.sample(&mut rng),
        };
        state.release(mark);
        events.push(Event {
            time: state.t,
            kind: draw.winner,
            mark,
            log_intensity_before,
        });
    }
    Ok(EventLog::from_sorted(events, end_time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;

    fn unit(rho: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, rho, JumpDist::exponential(1.0), JumpDist::exponential(1.0)).unwrap()
    }

    #[test]
    fn cdf_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(interarrival_cdf(1.0, &unit(0.0), 0.0), 0.0);
        assert!((interarrival_cdf(1.0, &unit(0.0), ln2) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((interarrival_cdf(1.0, &unit(1.0), ln2) - (1.0 - 0.5 * (-1f64).exp())).abs() < 1e-15);
        assert!((interarrival_cdf(1.0, &unit(1.0), ln2) - 0.816_060).abs() < 1e-6);
        assert!(interarrival_cdf(1.0, &unit(1.0), 50.0) == 1.0);
    }

    #[test]
    fn cdf_is_nondecreasing() {
        let p = unit(1.0);
        let mut prev = 0.0;
        for i in 0..2000 {
            let f = interarrival_cdf(0.3, &p, i as f64 * 0.005);
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn composition_inverts_the_self_survival() {
        let p = unit(2.0);
        let state = IntensityState::initial(&p);
        let u1 = (-(1f64.exp() - 1.0)).exp();
        let draw = sample_composition(&state, &p, u1, (-1f64).exp());
        assert!((draw.tau_self - 1.0).abs() < 1e-14);
        assert!((draw.tau_external - 0.5).abs() < 1e-15);
        assert_eq!(draw.winner, EventKind::External);

        let near_one = sample_composition(&state, &p, 1.0 - 1e-15, 0.5);
        assert!(near_one.tau_self > 0.0 && near_one.tau_self < 1e-14);
        assert_eq!(near_one.winner, EventKind::SelfArrival);
    }

    #[test]
    fn ties_and_no_external_stream_go_to_self() {
        let p = unit(0.0);
        let state = IntensityState::initial(&p);
        let draw = sample_composition(&state, &p, 1e-300, 1e-300);
        assert_eq!(draw.tau_external, f64::INFINITY);
        assert_eq!(draw.winner, EventKind::SelfArrival);
    }

    #[test]
    fn lambert_inverse_reference_and_round_trip() {
        let p = unit(1.0);
        let t = inverse_interarrival_cdf(1.0, &p, 1.0 - 0.5 * (-1f64).exp()).unwrap();
        assert!((t - std::f64::consts::LN_2).abs() < 1e-12);
        for lam in [0.01, 0.5, 1.0, 5.0, 1e3] {
            for rho in [0.0, 1e-6, 0.3, 1.0, 40.0] {
                let mut q = unit(rho);
                q.beta = 0.7;
                for u in [1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-9] {
                    let t = inverse_interarrival_cdf(lam, &q, u).unwrap();
                    let back = interarrival_cdf(lam, &q, t);
                    assert!((back - u).abs() <= 1e-10, "lam={lam} rho={rho} u={u} back={back}");
                }
            }
        }
        assert!(inverse_interarrival_cdf(1.0, &p, 0.0).is_err());
        assert!(inverse_interarrival_cdf(1.0, &p, 1.0).is_err());
    }

    #[test]
    fn seeded_paths_are_reproducible() {
        let p = ModelParams::new(1.0, 1.5, 2.0, JumpDist::exponential(1.0), JumpDist::exponential(2.0)).unwrap();
        let a = simulate_path(&p, 10.0, 42).unwrap();
        let b = simulate_path(&p, 10.0, 42).unwrap();
        let c = simulate_path(&p, 10.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(!a.is_empty());
    }

    #[test]
    fn stored_intensities_match_reconstruction() {
        let p = ModelParams::new(1.0, 1.5, 2.0, JumpDist::exponential(1.0), JumpDist::exponential(2.0)).unwrap();
        for seed in 0..20u64 {
            let log = simulate_path(&p, 10.0, seed).unwrap();
            let mut prev = 0.0;
            for e in log.events() {
                assert!(e.time > prev && e.time <= 10.0);
                prev = e.time;
                assert!(e.intensity_after() < e.intensity_before());
                let rebuilt = log.log_intensity_at(&p, e.time).unwrap().exp();
                assert!((rebuilt / e.intensity_before() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_horizon() {
        assert!(simulate_path(&unit(1.0), 0.0, 1).is_err());
        assert!(simulate_path(&unit(1.0), f64::INFINITY, 1).is_err());
    }
}
