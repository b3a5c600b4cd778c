//! Batched path generation and reciprocal-moment estimation.
//!
//! Path `i` always uses stream `i` of the base seed and per-path results are
//! folded in path order, so estimates do not depend on the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::simulate_path;
use crate::model::{EventLog, ModelParams};
use crate::moments::{CurveSource, MomentCurve, MomentParams};
use crate::rng::StreamSeed;
use crate::stats::{KahanSum, Z_95, Z_995};
use crate::thinning::simulate_path_thinning;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SRP_WORKERS";

const CHUNK: usize = 256;
const CHUNKS_PER_WAVE: usize = 64;

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Method {
    Composition,
    Thinning { delta: f64 },
}

impl Method {
    pub fn simulate(&self, params: &ModelParams, end_time: f64, seed: StreamSeed) -> Result<EventLog> {
        match *self {
            Self::Composition => simulate_path(params, end_time, seed),
            Self::Thinning { delta } => simulate_path_thinning(params, end_time, delta, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    /// Ascending evaluation times; the last one is the simulation horizon.
    pub time_grid: Vec<f64>,
    pub method: Method,
    pub base_seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, time_grid: Vec<f64>, method: Method, base_seed: u64) -> Self {
        Self {
            n_paths,
            time_grid,
            method,
            base_seed,
            workers: default_workers(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidInput("workers must be positive".into()));
        }
        if self.time_grid.is_empty() {
            return Err(Error::InvalidInput("time grid must not be empty".into()));
        }
        if self.time_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidInput("time grid must be finite and nonnegative".into()));
        }
        if self.time_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
        }
        if let Method::Thinning { delta } = self.method {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::InvalidInput(format!("delta must be positive (got {delta})")));
            }
        }
        Ok(())
    }

    fn end_time(&self) -> f64 {
        self.time_grid.last().copied().unwrap_or(0.0)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
    }
}

/// Per-path results in path order. The horizon is the last grid time.
pub fn map_paths<T, F>(cfg: &McConfig, params: &ModelParams, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&EventLog) -> T + Sync,
{
    cfg.validate()?;
    params.validate()?;
    let end_time = cfg.end_time();
    if end_time <= 0.0 {
        return Err(Error::InvalidInput("map_paths needs a positive horizon".into()));
    }
    cfg.pool()?.install(|| {
        (0..cfg.n_paths)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                cfg.method
                    .simulate(params, end_time, StreamSeed::new(cfg.base_seed, i as u64))
                    .map(|log| f(&log))
            })
            .collect()
    })
}

/// Monte Carlo estimate of `θ_k` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `1.96 · sd / √n` per grid point.
    pub half_width_95: Vec<f64>,
    pub k: u32,
    pub n_paths: usize,
}

impl McEstimate {
    /// Whether `value` lies within `z` standard errors of the estimate at point `i`.
    pub fn covers(&self, i: usize, value: f64, z: f64) -> bool {
        (self.mean[i] - value).abs() <= z * self.std_error[i]
    }

    pub fn to_curve(&self) -> MomentCurve {
        MomentCurve {
            times: self.grid.clone(),
            values: self.mean.clone(),
            order: self.k,
            source: CurveSource::MonteCarlo,
            ci_half_width: Some(self.half_width_95.clone()),
        }
    }
}

/// Averages `λ_t^{-k}` (left limits) across paths at every grid time.
pub fn estimate_reciprocal_moment(cfg: &McConfig, params: &ModelParams, k: u32) -> Result<McEstimate> {
    let mut all = estimate_reciprocal_moments(cfg, params, &[k])?;
    Ok(all.remove(0))
}

/// As [`estimate_reciprocal_moment`] for several orders from the same paths.
pub fn estimate_reciprocal_moments(cfg: &McConfig, params: &ModelParams, orders: &[u32]) -> Result<Vec<McEstimate>> {
    cfg.validate()?;
    params.validate()?;
    if orders.is_empty() || orders.contains(&0) {
        return Err(Error::InvalidInput("moment orders must be at least 1".into()));
    }
    let grid = &cfg.time_grid;
    let width = grid.len() * orders.len();
    let mut sums = vec![KahanSum::new(); width];
    let mut squares = vec![KahanSum::new(); width];

    let end_time = cfg.end_time();
    let one_path = |i: usize| -> Result<Vec<f64>> {
        let logs = if end_time > 0.0 {
            let log = cfg
                .method
                .simulate(params, end_time, StreamSeed::new(cfg.base_seed, i as u64))?;
            log.log_intensity_on_grid(params, grid)
        } else {
            vec![params.log_lambda0(); grid.len()]
        };
        Ok(orders
            .iter()
            .flat_map(|&k| logs.iter().map(move |l| (-f64::from(k) * l).exp()))
            .collect())
    };

    let pool = cfg.pool()?;
    let wave = CHUNK * CHUNKS_PER_WAVE;
    let mut start = 0;
    while start < cfg.n_paths {
        let stop = (start + wave).min(cfg.n_paths);
        let chunks: Vec<Result<Vec<Vec<f64>>>> = pool.install(|| {
            (start..stop)
                .step_by(CHUNK)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|c| (c..(c + CHUNK).min(stop)).map(one_path).collect())
                .collect()
        });
        for chunk in chunks {
            for row in chunk? {
                for (j, x) in row.into_iter().enumerate() {
                    sums[j].add(x);
                    squares[j].add(x * x);
                }
            }
        }
        start = stop;
    }

    let n = cfg.n_paths as f64;
    Ok(orders
        .iter()
        .enumerate()
        .map(|(o, &k)| {
            let range = o * grid.len()..(o + 1) * grid.len();
            let mean: Vec<f64> = sums[range.clone()].iter().map(|s| s.value() / n).collect();
            let std_error: Vec<f64> = squares[range]
                .iter()
                .zip(&mean)
                .map(|(sq, m)| {
                    if cfg.n_paths < 2 {
                        return 0.0;
                    }
                    let var = ((sq.value() - n * m * m) / (n - 1.0)).max(0.0);
                    (var / n).sqrt()
                })
                .collect();
            McEstimate {
                grid: grid.clone(),
                half_width_95: std_error.iter().map(|se| Z_95 * se).collect(),
                mean,
                std_error,
                k,
                n_paths: cfg.n_paths,
            }
        })
        .collect())
}

/// Settings shared by both methods in [`compare_estimators`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub grid: Vec<f64>,
    pub n_paths: usize,
    pub delta: f64,
    pub base_seed: u64,
    pub workers: usize,
    /// Evaluate the theory curves with these parameters instead. Only
    /// useful as a negative control.
    pub theory_params: Option<ModelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    pub method: Method,
    pub estimates: Vec<McEstimate>,
    pub seconds: f64,
    pub paths_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub t: f64,
    pub k: u32,
    pub theory: f64,
    pub composition_mean: f64,
    pub composition_half_width_95: f64,
    pub thinning_mean: f64,
    pub thinning_half_width_95: f64,
    /// The two 95% intervals intersect.
    pub ci_overlap: bool,
    /// Theory within the 99.5% band of the composition estimate.
    pub composition_in_band: bool,
    /// Theory within the 99.5% band of the thinning estimate.
    pub thinning_in_band: bool,
}

impl PointReport {
    pub fn passes(&self) -> bool {
        self.composition_in_band && self.thinning_in_band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub composition: MethodRun,
    pub thinning: MethodRun,
    pub points: Vec<PointReport>,
}

impl Comparison {
    pub fn all_pass(&self) -> bool {
        self.points.iter().all(PointReport::passes)
    }

    /// Share of points whose two 95% intervals overlap.
    pub fn overlap_fraction(&self) -> f64 {
        self.points.iter().filter(|p| p.ci_overlap).count() as f64 / self.points.len() as f64
    }
}

/// Runs both simulators for `k ∈ {1, 2}` and compares them with theory and
/// with each other.
pub fn compare_estimators(params: &ModelParams, opts: &CompareOptions) -> Result<Comparison> {
    let theory_params = opts.theory_params.as_ref().unwrap_or(params);
    let moments = MomentParams::new(theory_params, 2)?;

    let run = |method: Method| -> Result<MethodRun> {
        let cfg = McConfig {
            n_paths: opts.n_paths,
            time_grid: opts.grid.clone(),
            method,
            base_seed: opts.base_seed,
            workers: opts.workers,
        };
        let start = Instant::now();
        let estimates = estimate_reciprocal_moments(&cfg, params, &[1, 2])?;
        let seconds = start.elapsed().as_secs_f64();
        Ok(MethodRun {
            method,
            estimates,
            seconds,
            paths_per_second: opts.n_paths as f64 / seconds,
        })
    };
    let composition = run(Method::Composition)?;
    let thinning = run(Method::Thinning { delta: opts.delta })?;

    let mut points = Vec::new();
    for (o, k) in [1u32, 2].into_iter().enumerate() {
        let (c, h) = (&composition.estimates[o], &thinning.estimates[o]);
        for (i, &t) in opts.grid.iter().enumerate() {
            let theory = if k == 1 { moments.theta1(t) } else { moments.theta2(t) };
            points.push(PointReport {
                t,
                k,
                theory,
                composition_mean: c.mean[i],
                composition_half_width_95: c.half_width_95[i],
                thinning_mean: h.mean[i],
                thinning_half_width_95: h.half_width_95[i],
                ci_overlap: (c.mean[i] - h.mean[i]).abs() <= c.half_width_95[i] + h.half_width_95[i],
                composition_in_band: c.covers(i, theory, Z_995),
                thinning_in_band: h.covers(i, theory, Z_995),
            });
        }
    }
    Ok(Comparison {
        composition,
        thinning,
        points,
    })
}

/// Fastest of three sequential runs simulating `n` paths to `end_time`,
/// after one untimed warm-up path.
pub fn time_realizations(params: &ModelParams, method: Method, n: usize, end_time: f64, base_seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("number of realizations must be positive".into()));
    }
    std::hint::black_box(method.simulate(params, end_time, StreamSeed::new(base_seed, u64::MAX >> 2))?);
    let mut fastest = f64::INFINITY;
    for _ in 0..3 {
        let start = Instant::now();
        for i in 0..n as u64 {
            std::hint::black_box(method.simulate(params, end_time, StreamSeed::new(base_seed, i))?);
        }
        fastest = fastest.min(start.elapsed().as_secs_f64());
    }
    Ok(fastest)
}
