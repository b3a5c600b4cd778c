//! Baseline simulation by thinning against windowed upper bounds.
//!
//! The external stream is materialised on `(0, T]` first. Self-arrivals are
//! then proposed window by window. With `S` frozen at the window start `τ`,
//!
//! ```text
//! λ̄_{t|τ} = λ₀ exp(β t − S_{τ⁺} − S'_t)
//! ```
//!
//! dominates `λ_t` on `(τ, τ+Δ]` and coincides with it until the next
//! accepted self-arrival. Its maximum over the window is a left limit,
//! either at `τ+Δ` or at one of the external arrivals inside the window.

use std::time::Instant;

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{EventKind, EventLog, ModelParams};
use crate::rng::{PathRng, StreamSeed};

/// Dominating constant for the intensity on `(start, start + width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundWindow {
    pub start: f64,
    pub width: f64,
    pub bound: f64,
}

impl BoundWindow {
    pub fn end(&self) -> f64 {
        self.start + self.width
    }
}

/// External arrivals and marks, with prefix sums of the marks.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPath {
    times: Vec<f64>,
    marks: Vec<f64>,
    /// `released[j]` is the sum of the first `j` marks.
    released: Vec<f64>,
}

impl ExternalPath {
    /// `times` must be strictly increasing and `marks` positive.
    pub fn new(times: Vec<f64>, marks: Vec<f64>) -> Result<Self> {
        if times.len() != marks.len() {
            return Err(Error::InvalidInput("external times and marks differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times.first().is_some_and(|&t| !(t > 0.0)) {
            return Err(Error::InvalidInput(
                "external times must be strictly increasing and positive".into(),
            ));
        }
        if marks.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidInput("external marks must be positive".into()));
        }
        let mut released = Vec::with_capacity(marks.len() + 1);
        released.push(0.0);
        let mut acc = 0.0;
        for &m in &marks {
            acc += m;
            released.push(acc);
        }
        Ok(Self { times, marks, released })
    }

    /// Poisson(ρ) arrivals on `(0, end_time]` with marks from `F_Y`.
    pub fn simulate(params: &ModelParams, end_time: f64, rng: &mut PathRng) -> Self {
        let mut times = Vec::new();
        let mut marks = Vec::new();
        if params.rho > 0.0 {
            let mut t = 0.0;
            loop {
                let u: f64 = rng.sample(Open01);
                t += -u.ln() / params.rho;
                if t > end_time {
                    break;
                }
                times.push(t);
                marks.push(params.jump_ext.sample(rng));
            }
        }
        let mut released = Vec::with_capacity(marks.len() + 1);
        released.push(0.0);
        let mut acc = 0.0;
        for &m in &marks {
            acc += m;
            released.push(acc);
        }
        Self { times, marks, released }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of arrivals strictly before `t`.
    fn count_before(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// `S'_t` (strict inequality).
    pub fn released_before(&self, t: f64) -> f64 {
        self.released[self.count_before(t)]
    }
}

/// Exact maximum of `λ̄_{·|τ}` over `(τ, τ+Δ]`.
///
/// `self_released` is `S_{τ⁺}`, the total self mark released at or before `τ`.
pub fn upper_bound(
    self_released: f64,
    external: &ExternalPath,
    params: &ModelParams,
    tau: f64,
    delta: f64,
) -> BoundWindow {
    let first = external.times.partition_point(|&s| s <= tau);
    let log_bound = log_window_max(self_released, external, params, tau, delta, first);
    BoundWindow {
        start: tau,
        width: delta,
        bound: log_bound.exp(),
    }
}

/// `first` indexes the first external arrival after `tau`.
#[inline]
fn log_window_max(
    self_released: f64,
    external: &ExternalPath,
    params: &ModelParams,
    tau: f64,
    delta: f64,
    first: usize,
) -> f64 {
    let base = params.log_lambda0() - self_released;
    let end = tau + delta;
    let mut best = f64::NEG_INFINITY;
    let mut j = first;
    while j < external.times.len() && external.times[j] <= end {
        // left limit: arrival j has not released yet
        best = best.max(base + params.beta * external.times[j] - external.released[j]);
        j += 1;
    }
    let at_end = external.released[external.times.partition_point(|&s| s < end).max(first)];
    best.max(base + params.beta * end - at_end)
}

/// A thinning proposal, recorded for instrumentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub time: f64,
    /// `λ̄_{T*|t}` at the proposal.
    pub lambda_bar: f64,
    pub bound: f64,
    pub accepted: bool,
}

/// Counters collected while thinning one path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThinningStats {
    pub windows: usize,
    pub proposals: usize,
    pub accepted: usize,
    /// Acceptance tests where `λ̄ > M`. Always zero for a correct bound.
    pub bound_violations: usize,
}

/// Simulates a path by thinning with window width `delta`.
///
/// Deterministic in `seed`. The external path is drawn from the sibling
/// stream [`StreamSeed::external`], proposals from `seed` itself.
pub fn simulate_path_thinning(
    params: &ModelParams,
    end_time: f64,
    delta: f64,
    seed: impl Into<StreamSeed>,
) -> Result<EventLog> {
    thin(params, end_time, delta, seed.into(), None).map(|(log, _)| log)
}

/// As [`simulate_path_thinning`], also returning counters and, when
/// `trace` is given, every proposal.
pub fn simulate_path_thinning_traced(
    params: &ModelParams,
    end_time: f64,
    delta: f64,
    seed: impl Into<StreamSeed>,
    trace: Option<&mut Vec<Proposal>>,
) -> Result<(EventLog, ThinningStats)> {
    thin(params, end_time, delta, seed.into(), trace)
}

/// Thins against a caller-supplied external path.
pub fn simulate_self_given_external(
    params: &ModelParams,
    external: &ExternalPath,
    end_time: f64,
    delta: f64,
    seed: impl Into<StreamSeed>,
) -> Result<(EventLog, ThinningStats)> {
    check_inputs(params, end_time, delta)?;
    let mut rng = seed.into().rng();
    thin_self(params, external, end_time, delta, &mut rng, None)
}

fn check_inputs(params: &ModelParams, end_time: f64, delta: f64) -> Result<()> {
    params.validate()?;
    if !(end_time > 0.0 && end_time.is_finite()) {
        return Err(Error::OutOfRange {
            name: "end_time",
            value: end_time,
            range: "(0, inf)",
        });
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, inf)",
        });
    }
    Ok(())
}

fn thin(
    params: &ModelParams,
    end_time: f64,
    delta: f64,
    seed: StreamSeed,
    trace: Option<&mut Vec<Proposal>>,
) -> Result<(EventLog, ThinningStats)> {
    check_inputs(params, end_time, delta)?;
    let external = ExternalPath::simulate(params, end_time, &mut seed.external().rng());
    let mut rng = seed.rng();
    thin_self(params, &external, end_time, delta, &mut rng, trace)
}

fn thin_self(
    params: &ModelParams,
    external: &ExternalPath,
    end_time: f64,
    delta: f64,
    rng: &mut PathRng,
    mut trace: Option<&mut Vec<Proposal>>,
) -> Result<(EventLog, ThinningStats)> {
    let beta = params.beta;
    let log_lambda0 = params.log_lambda0();
    let mut stats = ThinningStats::default();
    let mut self_arrivals: Vec<(f64, f64)> = Vec::new();
    let mut self_released = 0.0;

    // external arrivals at or before the window start
    let mut ext_done = external.times.partition_point(|&s| s <= 0.0);
    let mut window_start = 0.0;
    let mut log_m = log_window_max(self_released, external, params, window_start, delta, ext_done);
    let mut bound = log_m.exp();
    stats.windows += 1;
    let mut clock = window_start;

    loop {
        let e: f64 = rng.sample(Open01);
        let proposal = clock - e.ln() / bound;
        let window_end = window_start + delta;
        // the window test comes first: a proposal past an interior window
        // end says nothing about (window_end, end_time]
        if proposal > window_end && window_end < end_time {
            // no proposal left in this window; restart at its end
            window_start = window_end;
            clock = window_start;
            while ext_done < external.len() && external.times[ext_done] <= window_start {
                ext_done += 1;
            }
            log_m = log_window_max(self_released, external, params, window_start, delta, ext_done);
            bound = log_m.exp();
            stats.windows += 1;
            continue;
        }
        if proposal > end_time {
            break;
        }

        stats.proposals += 1;
        let mut k = ext_done;
        while k < external.len() && external.times[k] < proposal {
            k += 1;
        }
        let log_bar = log_lambda0 + beta * proposal - self_released - external.released[k];
        if log_bar > log_m + 1e-12 * log_m.abs().max(1.0) {
            stats.bound_violations += 1;
        }
        let u: f64 = rng.sample(Open01);
        let accepted = u <= (log_bar - log_m).exp();
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(Proposal {
                time: proposal,
                lambda_bar: log_bar.exp(),
                bound,
                accepted,
            });
        }
        if accepted {
            stats.accepted += 1;
            let mark = params.jump_self.sample(rng);
            self_arrivals.push((proposal, mark));
            self_released += mark;
            window_start = proposal;
            clock = proposal;
            ext_done = k;
            while ext_done < external.len() && external.times[ext_done] <= window_start {
                ext_done += 1;
            }
            log_m = log_window_max(self_released, external, params, window_start, delta, ext_done);
            bound = log_m.exp();
            stats.windows += 1;
        } else {
            // the window and its bound stay valid from the rejected point on
            clock = proposal;
        }
    }

    let log = merge(params, external, &self_arrivals, end_time)?;
    Ok((log, stats))
}

fn merge(
    params: &ModelParams,
    external: &ExternalPath,
    self_arrivals: &[(f64, f64)],
    end_time: f64,
) -> Result<EventLog> {
    let mut arrivals = Vec::with_capacity(self_arrivals.len() + external.len());
    let (mut i, mut j) = (0, 0);
    while i < self_arrivals.len() || j < external.len() {
        let take_self = j == external.len() || (i < self_arrivals.len() && self_arrivals[i].0 <= external.times[j]);
        if take_self {
            arrivals.push((self_arrivals[i].0, EventKind::SelfArrival, self_arrivals[i].1));
            i += 1;
        } else {
            arrivals.push((external.times[j], EventKind::External, external.marks[j]));
            j += 1;
        }
    }
    EventLog::from_arrivals(params, arrivals, end_time)
}

/// Wall-time comparison of window widths.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSearch {
    pub best: f64,
    /// `(Δ, mean seconds per path)` for every candidate, in input order.
    pub timings: Vec<(f64, f64)>,
}

/// Picks the window width with the lowest mean wall time per path.
///
/// Each candidate simulates `trials` paths on seeds `0..trials`; the best of
/// three repetitions is kept.
pub fn grid_search_delta(
    params: &ModelParams,
    end_time: f64,
    candidates: &[f64],
    trials: usize,
) -> Result<DeltaSearch> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("candidate deltas must not be empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    for &d in candidates {
        check_inputs(params, end_time, d)?;
    }
    if candidates.len() == 1 {
        return Ok(DeltaSearch {
            best: candidates[0],
            timings: vec![(candidates[0], f64::NAN)],
        });
    }
    let mut timings = Vec::with_capacity(candidates.len());
    for &delta in candidates {
        let mut fastest = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            for seed in 0..trials as u64 {
                let log = simulate_path_thinning(params, end_time, delta, seed)?;
                std::hint::black_box(log);
            }
            fastest = fastest.min(start.elapsed().as_secs_f64());
        }
        timings.push((delta, fastest / trials as f64));
    }
    let best = timings
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(d, _)| d)
        .unwrap_or(candidates[0]);
    Ok(DeltaSearch { best, timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;

    fn params(rho: f64) -> ModelParams {
        ModelParams::new(1.0, 0.25, rho, JumpDist::exponential(3.0), JumpDist::exponential(10.0)).unwrap()
    }

    #[test]
    fn bound_without_external_arrivals_is_window_end() {
        let p = params(1.0);
        let ext = ExternalPath::new(vec![], vec![]).unwrap();
        let w = upper_bound(0.3, &ext, &p, 2.0, 0.5);
        let lambda_post = (p.beta * 2.0 - 0.3f64).exp();
        assert!((w.bound - lambda_post * (p.beta * 0.5).exp()).abs() < 1e-14);
        let tiny = upper_bound(0.3, &ext, &p, 2.0, 1e-12);
        assert!((tiny.bound / lambda_post - 1.0).abs() < 1e-11);
    }

    #[test]
    fn bound_with_one_external_arrival_enumerates_both_candidates() {
        let mut p = params(1.0);
        p.beta = 2.0;
        let (tau, delta, t_ext) = (1.0, 1.0, 1.4);
        let lambda_post = (p.beta * tau).exp();
        for y in [0.1, 2.0] {
            let ext = ExternalPath::new(vec![t_ext], vec![y]).unwrap();
            let w = upper_bound(0.0, &ext, &p, tau, delta);
            let at_ext = lambda_post * (p.beta * (t_ext - tau)).exp();
            let at_end = at_ext * (-y).exp() * (p.beta * (tau + delta - t_ext)).exp();
            let want = at_ext.max(at_end);
            assert!((w.bound / want - 1.0).abs() < 1e-13, "y={y}");
        }
    }

    #[test]
    fn external_arrival_before_window_counts_as_released() {
        let p = params(1.0);
        let ext = ExternalPath::new(vec![0.5], vec![1.0]).unwrap();
        let w = upper_bound(0.0, &ext, &p, 1.0, 1.0);
        assert!((w.bound - (p.beta * 2.0 - 1.0f64).exp()).abs() < 1e-14);
        assert_eq!(ext.released_before(0.5), 0.0);
        assert_eq!(ext.released_before(0.6), 1.0);
    }

    #[test]
    fn seeded_paths_are_reproducible() {
        let p = params(1.25);
        let a = simulate_path_thinning(&p, 30.0, 1.86, 9).unwrap();
        let b = simulate_path_thinning(&p, 30.0, 1.86, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_path_thinning(&p, 30.0, 1.86, 10).unwrap());
    }

    #[test]
    fn bound_holds_and_lambda_bar_is_the_true_intensity() {
        let p = params(1.25);
        for seed in 0..30u64 {
            let mut trace = Vec::new();
            let (log, stats) = simulate_path_thinning_traced(&p, 50.0, 1.86, seed, Some(&mut trace)).unwrap();
            assert_eq!(stats.bound_violations, 0);
            assert_eq!(stats.accepted, log.self_count());
            assert_eq!(stats.proposals, trace.len());
            for prop in &trace {
                assert!(prop.lambda_bar <= prop.bound * (1.0 + 1e-12));
                let truth = log.log_intensity_at(&p, prop.time).unwrap().exp();
                assert!((prop.lambda_bar / truth - 1.0).abs() < 1e-9);
            }
            for e in log.events() {
                let rebuilt = log.log_intensity_at(&p, e.time).unwrap().exp();
                assert!((rebuilt / e.intensity_before() - 1.0).abs() < 1e-9);
                assert!(e.intensity_after() < e.intensity_before());
            }
        }
    }

    #[test]
    fn shared_external_path_is_reproduced() {
        let p = params(1.25);
        let seed = StreamSeed::new(5, 17);
        let ext = ExternalPath::simulate(&p, 20.0, &mut seed.external().rng());
        let (given, _) = simulate_self_given_external(&p, &ext, 20.0, 1.86, seed).unwrap();
        let full = simulate_path_thinning(&p, 20.0, 1.86, seed).unwrap();
        assert_eq!(given, full);
        let ext_times: Vec<f64> = full
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::External)
            .map(|e| e.time)
            .collect();
        assert_eq!(ext_times, ext.times());
    }

    #[test]
    fn grid_search_validation() {
        let p = params(1.25);
        assert_eq!(grid_search_delta(&p, 10.0, &[0.7], 3).unwrap().best, 0.7);
        let err = grid_search_delta(&p, 10.0, &[0.7, 1.0], 0).unwrap_err();
        assert!(err.to_string().contains("trials must be positive"));
        assert!(grid_search_delta(&p, 10.0, &[], 3).is_err());
        assert!(grid_search_delta(&p, 10.0, &[0.5, -1.0], 3).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(1.0);
        assert!(simulate_path_thinning(&p, 10.0, 0.0, 1).is_err());
        assert!(simulate_path_thinning(&p, -1.0, 1.0, 1).is_err());
        assert!(ExternalPath::new(vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(ExternalPath::new(vec![1.0], vec![0.0]).is_err());
    }
}
