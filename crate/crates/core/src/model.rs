//! Process definition: parameters, jump distributions, event logs and
//! pathwise intensity evaluation.
//!
//! The conditional intensity is
//!
//! ```text
//! λ_t = λ₀ exp(β t − S_t − S'_t),   S_t = Σ_{T_i < t} X_i,   S'_t = Σ_{T'_j < t} Y_j
//! ```
//!
//! with strict inequalities, so `λ` is left-continuous: evaluating it at an
//! event time returns the pre-jump value. Everything here works with
//! `ln λ` and only exponentiates at the API boundary.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::Open01;
use rand::{Rng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// User-supplied jump-size law.
///
/// The moment engine cannot integrate arbitrary distributions, so an
/// implementation must report its own `m_k = E[exp(kX)] - 1`.
pub trait JumpSampler: Send + Sync + fmt::Debug {
    /// Draws one jump size. Must be strictly positive.
    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    /// `E[exp(kX)] - 1`, or `None` when the integral diverges.
    fn exp_moment(&self, k: u32) -> Option<f64>;

    fn label(&self) -> String {
        "custom".to_string()
    }
}

/// Distribution of the (strictly positive) stress released by one arrival.
#[derive(Debug, Clone)]
pub enum JumpDist {
    /// Exponential with the given rate.
    Exponential {
        rate: f64,
    },
    /// Point mass at `value`.
    Deterministic {
        value: f64,
    },
    Custom(Arc<dyn JumpSampler>),
}

impl PartialEq for JumpDist {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Exponential { rate: a }, Self::Exponential { rate: b }) => a == b,
            (Self::Deterministic { value: a }, Self::Deterministic { value: b }) => a == b,
            (Self::Custom(a), Self::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl JumpDist {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        Self::Deterministic { value }
    }

    pub fn custom(sampler: impl JumpSampler + 'static) -> Self {
        Self::Custom(Arc::new(sampler))
    }

    fn check(&self, which: &str) -> Result<()> {
        match *self {
            Self::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => Err(Error::InvalidParams(format!(
                "{which} exponential rate must be positive and finite (got {rate})"
            ))),
            Self::Deterministic { value } if !(value > 0.0 && value.is_finite()) => Err(Error::InvalidParams(format!(
                "{which} deterministic jump must be positive and finite (got {value})"
            ))),
            _ => Ok(()),
        }
    }

    /// Draws a jump size.
    #[inline]
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                let u: f64 = rng.sample(Open01);
                -u.ln() / rate
            }
            Self::Deterministic { value } => value,
            Self::Custom(ref s) => s.sample(rng),
        }
    }

    /// Exponential moment `m_k = E[exp(kX)] - 1`.
    ///
    /// For `Exp(a)` this is `k / (a - k)` and exists only when `a > k`.
    pub fn exp_moment(&self, k: u32) -> Result<f64> {
        let kf = f64::from(k);
        let value = match *self {
            Self::Exponential { rate } if rate > kf => Some(kf / (rate - kf)),
            Self::Exponential { .. } => None,
            Self::Deterministic { value } => Some((kf * value).exp_m1()).filter(|m| m.is_finite()),
            Self::Custom(ref s) => s.exp_moment(k).filter(|m| m.is_finite()),
        };
        value.ok_or_else(|| Error::DivergentMoment {
            k,
            dist: self.to_string(),
        })
    }
}

impl fmt::Display for JumpDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exp:{rate}"),
            Self::Deterministic { value } => write!(f, "const:{value}"),
            Self::Custom(s) => write!(f, "{}", s.label()),
        }
    }
}

impl FromStr for JumpDist {
    type Err = Error;

    /// Parses `exp:<rate>` or `const:<x0>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| {
            Error::InvalidInput(format!(
                "jump distribution `{s}` must look like exp:<rate> or const:<x0>"
            ))
        })?;
        let value: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("jump distribution `{s}`: `{arg}` is not a number")))?;
        let dist = match kind.trim() {
            "exp" => Self::exponential(value),
            "const" => Self::deterministic(value),
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown jump distribution kind `{other}` (expected exp or const)"
                )))
            }
        };
        dist.check("jump")?;
        Ok(dist)
    }
}

impl Serialize for JumpDist {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for JumpDist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of an extrinsic stress-release process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Initial intensity.
    pub lambda0: f64,
    /// Stress accumulation rate.
    pub beta: f64,
    /// Rate of the external Poisson stream.
    pub rho: f64,
    /// Law of the self-arrival marks `X_i`.
    pub jump_self: JumpDist,
    /// Law of the external marks `Y_j`.
    pub jump_ext: JumpDist,
}

impl ModelParams {
    /// Builds and validates a parameter set.
    pub fn new(lambda0: f64, beta: f64, rho: f64, jump_self: JumpDist, jump_ext: JumpDist) -> Result<Self> {
        let params = Self {
            lambda0,
            beta,
            rho,
            jump_self,
            jump_ext,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "lambda0 must be positive (got {})",
                self.lambda0
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "beta must be positive (got {})",
                self.beta
            )));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "rho must be nonnegative (got {})",
                self.rho
            )));
        }
        self.jump_self.check("self")?;
        self.jump_ext.check("external")?;
        Ok(())
    }

    #[inline]
    pub fn log_lambda0(&self) -> f64 {
        self.lambda0.ln()
    }
}

/// Free-function form of [`ModelParams::validate`].
pub fn validate(params: &ModelParams) -> Result<()> {
    params.validate()
}

/// Free-function form of [`JumpDist::exp_moment`].
pub fn exp_moment(dist: &JumpDist, k: u32) -> Result<f64> {
    dist.exp_moment(k)
}

/// Which stream produced an arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// An arrival of the modelled process `N`.
    #[serde(rename = "self")]
    SelfArrival,
    /// An arrival of the independent external Poisson stream.
    External,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SelfArrival => "self",
            Self::External => "external",
        })
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" => Ok(Self::SelfArrival),
            "external" => Ok(Self::External),
            other => Err(Error::InvalidInput(format!("unknown event kind `{other}`"))),
        }
    }
}

/// One arrival together with the intensity just before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub mark: f64,
    /// `ln λ` at the left limit `t⁻`.
    pub log_intensity_before: f64,
}

impl Event {
    #[inline]
    pub fn log_intensity_after(&self) -> f64 {
        self.log_intensity_before - self.mark
    }

    #[inline]
    pub fn intensity_before(&self) -> f64 {
        self.log_intensity_before.exp()
    }

    #[inline]
    pub fn intensity_after(&self) -> f64 {
        self.log_intensity_after().exp()
    }
}

/// Single-owner cursor over the post-jump log-intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityState {
    pub log_lambda: f64,
    pub t: f64,
}

impl IntensityState {
    pub fn initial(params: &ModelParams) -> Self {
        Self {
            log_lambda: params.log_lambda0(),
            t: 0.0,
        }
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    /// Lets the intensity flow for `dt` and returns the pre-jump log-intensity.
    #[inline]
    pub fn advance(&mut self, dt: f64, beta: f64) -> f64 {
        self.t += dt;
        self.log_lambda += beta * dt;
        self.log_lambda
    }

    #[inline]
    pub fn release(&mut self, mark: f64) {
        self.log_lambda -= mark;
    }
}

/// Ordered record of all arrivals on `(0, end_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    end_time: f64,
}

impl EventLog {
    /// Wraps simulator output. Callers guarantee ordering.
    pub(crate) fn from_sorted(events: Vec<Event>, end_time: f64) -> Self {
        Self { events, end_time }
    }

    /// Checks the structural invariants and wraps the events.
    pub fn new(events: Vec<Event>, end_time: f64) -> Result<Self> {
        if !(end_time > 0.0 && end_time.is_finite()) {
            return Err(Error::OutOfRange {
                name: "end_time",
                value: end_time,
                range: "(0, inf)",
            });
        }
        let mut prev = 0.0;
        for e in &events {
            if !(e.time > prev && e.time <= end_time) {
                return Err(Error::InvalidInput(format!(
                    "event times must be strictly increasing in (0, {end_time}], found {} after {prev}",
                    e.time
                )));
            }
            if !(e.mark > 0.0 && e.mark.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "event at {} has non-positive mark {}",
                    e.time, e.mark
                )));
            }
            prev = e.time;
        }
        Ok(Self { events, end_time })
    }

    /// Builds a log from raw arrivals, filling in the intensities by
    /// replaying the flow from `λ₀`. The arrivals must be sorted by time.
    pub fn from_arrivals(
        params: &ModelParams,
        arrivals: impl IntoIterator<Item = (f64, EventKind, f64)>,
        end_time: f64,
    ) -> Result<Self> {
        let mut state = IntensityState::initial(params);
        let events = arrivals
            .into_iter()
            .map(|(time, kind, mark)| {
                let log_intensity_before = state.advance(time - state.t, params.beta);
                state.release(mark);
                Event {
                    time,
                    kind,
                    mark,
                    log_intensity_before,
                }
            })
            .collect();
        Self::new(events, end_time)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `N_T`: number of self-arrivals.
    pub fn self_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::SelfArrival).count()
    }

    /// `N'_T`: number of external arrivals.
    pub fn external_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::External).count()
    }

    pub fn self_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::SelfArrival)
            .map(|e| e.time)
    }

    /// `ln λ_t`, left limit at event times.
    pub fn log_intensity_at(&self, params: &ModelParams, t: f64) -> Result<f64> {
        if !(0.0..=self.end_time).contains(&t) {
            return Err(Error::OutOfRange {
                name: "t",
                value: t,
                range: "[0, end_time]",
            });
        }
        let released: f64 = self.events.iter().take_while(|e| e.time < t).map(|e| e.mark).sum();
        Ok(params.log_lambda0() + params.beta * t - released)
    }

    /// `ln λ_t` at each point of an ascending grid in one sweep.
    ///
    /// Grid points beyond `end_time` are extrapolated with the flow; callers
    /// that care check the range themselves.
    pub fn log_intensity_on_grid(&self, params: &ModelParams, grid: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        let mut released = 0.0;
        let mut next = 0;
        for &t in grid {
            while next < self.events.len() && self.events[next].time < t {
                released += self.events[next].mark;
                next += 1;
            }
            out.push(params.log_lambda0() + params.beta * t - released);
        }
        out
    }

    /// `∫₀^T λ_s ds`, exact on each inter-event segment.
    pub fn compensator(&self, params: &ModelParams) -> f64 {
        let beta = params.beta;
        let segment = |log_start: f64, dt: f64| log_start.exp() * (beta * dt).exp_m1() / beta;
        let mut total = 0.0;
        let mut log_post = params.log_lambda0();
        let mut t = 0.0;
        for e in &self.events {
            total += segment(log_post, e.time - t);
            log_post = e.log_intensity_after();
            t = e.time;
        }
        total + segment(log_post, self.end_time - t)
    }
}

/// `λ_t` for a recorded path (pre-jump value at event times).
pub fn intensity_at(log: &EventLog, params: &ModelParams, t: f64) -> Result<f64> {
    log.log_intensity_at(params, t).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 1.5, 2.0, JumpDist::exponential(1.0), JumpDist::exponential(2.0)).unwrap()
    }

    #[test]
    fn accepts_reference_parameters() {
        assert!(validate(&fig1()).is_ok());
        let mut p = fig1();
        p.rho = 0.0;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_each_constraint_by_name() {
        let mut p = fig1();
        p.beta = 0.0;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("beta must be positive"), "{msg}");

        let mut p = fig1();
        p.lambda0 = -1.0;
        assert!(p.validate().unwrap_err().to_string().contains("lambda0"));

        let mut p = fig1();
        p.rho = -0.5;
        assert!(p.validate().unwrap_err().to_string().contains("rho"));

        let mut p = fig1();
        p.beta = f64::NAN;
        assert!(p.validate().is_err());

        let mut p = fig1();
        p.jump_self = JumpDist::deterministic(0.0);
        assert!(p.validate().unwrap_err().to_string().contains("self"));

        let mut p = fig1();
        p.jump_ext = JumpDist::exponential(-2.0);
        assert!(p.validate().unwrap_err().to_string().contains("external"));
    }

    #[test]
    fn closed_form_exponential_moments() {
        assert!((exp_moment(&JumpDist::exponential(3.0), 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((exp_moment(&JumpDist::exponential(10.0), 2).unwrap() - 0.25).abs() < 1e-15);
        let m = exp_moment(&JumpDist::deterministic(0.1), 1).unwrap();
        assert!((m - 0.105_170_918_075_647_6).abs() < 1e-15);
    }

    #[test]
    fn divergent_moment_is_an_error() {
        let err = JumpDist::exponential(3.0).exp_moment(3).unwrap_err();
        assert!(matches!(err, Error::DivergentMoment { k: 3, .. }));
        assert!(JumpDist::exponential(2.0).exp_moment(5).is_err());
    }

    #[test]
    fn jump_grammar() {
        assert_eq!("exp:1.5".parse::<JumpDist>().unwrap(), JumpDist::exponential(1.5));
        assert_eq!("const:0.25".parse::<JumpDist>().unwrap(), JumpDist::deterministic(0.25));
        assert!("gamma:2".parse::<JumpDist>().is_err());
        assert!("exp".parse::<JumpDist>().is_err());
        assert!("exp:-1".parse::<JumpDist>().is_err());
        let d = JumpDist::exponential(0.1);
        assert_eq!(d.to_string().parse::<JumpDist>().unwrap(), d);
    }

    #[test]
    fn intensity_without_events_grows_exponentially() {
        let p = ModelParams::new(1.0, 0.25, 0.0, JumpDist::exponential(1.0), JumpDist::exponential(1.0)).unwrap();
        let log = EventLog::new(vec![], 5.0).unwrap();
        let v = intensity_at(&log, &p, 4.0).unwrap();
        assert!((v - std::f64::consts::E).abs() < 1e-14);
    }

    #[test]
    fn intensity_is_left_continuous() {
        let p = ModelParams::new(1.0, 1.0, 0.0, JumpDist::exponential(1.0), JumpDist::exponential(1.0)).unwrap();
        let log = EventLog::from_arrivals(&p, [(1.0, EventKind::SelfArrival, 0.5)], 3.0).unwrap();
        let at_jump = intensity_at(&log, &p, 1.0).unwrap();
        assert!((at_jump - 1f64.exp()).abs() < 1e-14);
        let later = intensity_at(&log, &p, 2.0).unwrap();
        assert!((later - 1.5f64.exp()).abs() < 1e-13);
        assert!(intensity_at(&log, &p, 3.5).is_err());
        assert!(intensity_at(&log, &p, -0.1).is_err());
        let e = log.events()[0];
        assert!((e.intensity_after() - e.intensity_before() * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn compensator_matches_hand_integral() {
        let p = ModelParams::new(1.0, 1.0, 0.0, JumpDist::exponential(1.0), JumpDist::exponential(1.0)).unwrap();
        let log = EventLog::from_arrivals(&p, [(1.0, EventKind::SelfArrival, 0.5)], 2.0).unwrap();
        // (e - 1) on (0,1], then e^0.5 (e - 1) on (1,2]
        let want = (1f64.exp() - 1.0) * (1.0 + 0.5f64.exp());
        assert!((log.compensator(&p) - want).abs() < 1e-13);
    }

    #[test]
    fn grid_sweep_matches_pointwise() {
        let p = fig1();
        let log = EventLog::from_arrivals(
            &p,
            [
                (0.3, EventKind::SelfArrival, 0.2),
                (0.7, EventKind::External, 0.4),
                (1.1, EventKind::SelfArrival, 1.3),
            ],
            2.0,
        )
        .unwrap();
        let grid = [0.0, 0.3, 0.5, 0.7, 1.1, 1.5, 2.0];
        let swept = log.log_intensity_on_grid(&p, &grid);
        for (t, v) in grid.iter().zip(swept) {
            assert!((log.log_intensity_at(&p, *t).unwrap() - v).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_malformed_logs() {
        let e = |time| Event {
            time,
            kind: EventKind::SelfArrival,
            mark: 1.0,
            log_intensity_before: 0.0,
        };
        assert!(EventLog::new(vec![e(1.0), e(1.0)], 2.0).is_err());
        assert!(EventLog::new(vec![e(3.0)], 2.0).is_err());
        assert!(EventLog::new(vec![e(0.0)], 2.0).is_err());
        assert!(EventLog::new(vec![], 0.0).is_err());
    }
}
