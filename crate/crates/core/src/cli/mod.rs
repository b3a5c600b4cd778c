//! The `srp` command-line tool.
//!
//! Every flag may also come from a flat JSON file given with `--config`,
//! keyed by the flag name without the leading dashes (`"end-time": 100`). Flags given on
//! the command line win over the file.
//!
//! Exit status: 0 on success, 1 when `validate` finds a point outside its
//! band, 2 for usage, parameter and I/O errors.

pub mod io;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Error;
use crate::exact::simulate_path;
use crate::model::{JumpDist, ModelParams};
use crate::moments::{theory_curve, MomentParams};
use crate::montecarlo::{compare_estimators, default_workers, time_realizations, CompareOptions, Method};
use crate::thinning::{grid_search_delta, simulate_path_thinning};

const DEFAULT_DELTA: f64 = 1.86;

#[derive(Debug, Parser)]
#[command(
    name = "srp",
    version,
    about = "Simulate and analyse extrinsic stress-release processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path and write its event log.
    Simulate(SimulateArgs),
    /// Print theoretical reciprocal moments on a time grid.
    Moments(MomentsArgs),
    /// Compare both simulators against theory by Monte Carlo.
    Validate(ValidateArgs),
    /// Time both simulators.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Flat JSON file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    lambda0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Self-arrival mark law, `exp:<rate>` or `const:<value>`.
    #[arg(long)]
    jump_self: Option<String>,
    /// External mark law, `exp:<rate>` or `const:<value>`.
    #[arg(long)]
    jump_ext: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    Composition,
    Thinning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    end_time: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    /// Thinning window width.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent or `-`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to json for `.json` output files, csv otherwise.
    #[arg(long, value_enum)]
    format: Option<LogFormat>,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    max_order: Option<u32>,
    /// Use the integral recursion for every order, not only above two.
    #[arg(long)]
    recursive: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n_paths: Option<usize>,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate theory with this β instead (negative control).
    #[arg(long, hide = true)]
    theory_beta: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated path counts.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    end_time: Option<f64>,
    /// Comma-separated window widths to search; a single value skips the search.
    #[arg(long)]
    deltas: Option<String>,
    /// Paths per candidate in the window search.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    /// Exit status 2.
    Usage(String),
    /// Exit status 1.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Moments(a) => moments(a),
        Command::Validate(a) => validate(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            1
        }
    }
}

/// Values loaded from `--config`.
#[derive(Debug, Default)]
struct Config(Map<String, Value>);

impl Config {
    const KEYS: &'static [&'static str] = &[
        "lambda0",
        "beta",
        "rho",
        "jump-self",
        "jump-ext",
        "end-time",
        "method",
        "delta",
        "seed",
        "out",
        "format",
        "grid",
        "max-order",
        "recursive",
        "n-paths",
        "workers",
        "n",
        "deltas",
        "trials",
    ];

    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(raw) = value else {
            return Err(Failure::Usage("config must be a JSON object".into()));
        };
        let mut map = Map::new();
        for (k, v) in raw {
            let key = k.replace('_', "-");
            if !Self::KEYS.contains(&key.as_str()) {
                return Err(Failure::Usage(format!("unknown config key '{k}'")));
            }
            map.insert(key, v);
        }
        Ok(Self(map))
    }

    fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.0
            .get(key)
            .map(|v| v.as_f64().ok_or_else(|| bad_key(key, "a number")))
            .transpose()
    }

    fn u64(&self, key: &str) -> CliResult<Option<u64>> {
        self.0
            .get(key)
            .map(|v| v.as_u64().ok_or_else(|| bad_key(key, "a nonnegative integer")))
            .transpose()
    }

    fn string(&self, key: &str) -> CliResult<Option<String>> {
        self.0
            .get(key)
            .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| bad_key(key, "a string")))
            .transpose()
    }

    fn bool(&self, key: &str) -> CliResult<bool> {
        match self.0.get(key) {
            None => Ok(false),
            Some(v) => v.as_bool().ok_or_else(|| bad_key(key, "a boolean")),
        }
    }

    /// A list given either as a JSON array of numbers or as a string.
    fn list(&self, key: &str) -> CliResult<Option<String>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .map(|x| x.to_string())
                        .ok_or_else(|| bad_key(key, "a list of numbers"))
                })
                .collect::<CliResult<Vec<_>>>()
                .map(|v| Some(v.join(","))),
            Some(_) => Err(bad_key(key, "a list of numbers")),
        }
    }

    fn value<T: clap::ValueEnum>(&self, key: &str) -> CliResult<Option<T>> {
        self.string(key)?
            .map(|s| T::from_str(&s, true).map_err(|_| bad_key(key, "a known variant")))
            .transpose()
    }
}

fn bad_key(key: &str, what: &str) -> Failure {
    Failure::Usage(format!("config key '{key}' must be {what}"))
}

fn model_params(m: &ModelArgs, cfg: &Config) -> CliResult<ModelParams> {
    let dist = |flag: &Option<String>, key: &str, default: f64| -> CliResult<JumpDist> {
        match flag.clone().map_or_else(|| cfg.string(key), |s| Ok(Some(s)))? {
            Some(s) => s.parse().map_err(Failure::from),
            None => Ok(JumpDist::exponential(default)),
        }
    };
    let params = ModelParams {
        lambda0: pick(m.lambda0, cfg.f64("lambda0")?, 1.0),
        beta: pick(m.beta, cfg.f64("beta")?, 0.25),
        rho: pick(m.rho, cfg.f64("rho")?, 1.25),
        jump_self: dist(&m.jump_self, "jump-self", 3.0)?,
        jump_ext: dist(&m.jump_ext, "jump-ext", 10.0)?,
    };
    params.validate()?;
    Ok(params)
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list of times.
fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Failure::Usage("time grid is empty".into()));
    }
    let grid = if text.contains(':') {
        let parts = parse_numbers(text, ':')?;
        let [start, stop, step] = parts[..] else {
            return Err(Failure::Usage(format!("grid range '{text}' must be start:stop:step")));
        };
        if !(step > 0.0) || !(stop >= start) {
            return Err(Failure::Usage(format!(
                "grid range '{text}' needs step > 0 and stop >= start"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * step).collect()
    } else {
        parse_numbers(text, ',')?
    };
    if grid.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Failure::Usage("grid times must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Usage("grid times must be strictly increasing".into()));
    }
    Ok(grid)
}

fn parse_numbers(text: &str, sep: char) -> CliResult<Vec<f64>> {
    text.split(sep)
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("'{}' is not a number", s.trim())))
        })
        .collect()
}

fn parse_counts(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(0) => Err(Failure::Usage("path counts must be positive".into())),
            Ok(n) => Ok(n),
            Err(_) => Err(Failure::Usage(format!("'{}' is not a path count", s.trim()))),
        })
        .collect()
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
        Some(p) if p.as_os_str() == "-" => Box::new(BufWriter::new(std::io::stdout().lock())),
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                Failure::Usage(format!("cannot create {}: {e}", p.display()))
            })?))
        }
    })
}

fn out_path(flag: Option<PathBuf>, cfg: &Config) -> CliResult<Option<PathBuf>> {
    Ok(flag.or(cfg.string("out")?.map(PathBuf::from)))
}

fn simulate(a: SimulateArgs) -> CliResult {
    let cfg = Config::load(a.model.config.as_deref())?;
    let params = model_params(&a.model, &cfg)?;
    let end_time = pick(a.end_time, cfg.f64("end-time")?, 10.0);
    let method = pick(a.method, cfg.value("method")?, MethodName::Composition);
    let delta = pick(a.delta, cfg.f64("delta")?, DEFAULT_DELTA);
    let seed = pick(a.seed, cfg.u64("seed")?, 0);
    let out = out_path(a.out, &cfg)?;
    let format = match a.format.map_or_else(|| cfg.value("format"), |f| Ok(Some(f)))? {
        Some(f) => f,
        None if out.as_deref().and_then(Path::extension).is_some_and(|e| e == "json") => LogFormat::Json,
        None => LogFormat::Csv,
    };

    let log = match method {
        MethodName::Composition => simulate_path(&params, end_time, seed)?,
        MethodName::Thinning => simulate_path_thinning(&params, end_time, delta, seed)?,
    };
    let mut w = open_output(out.as_deref())?;
    match format {
        LogFormat::Csv => io::write_event_log_csv(&mut w, &log)?,
        LogFormat::Json => {
            let name = match method {
                MethodName::Composition => "composition",
                MethodName::Thinning => "thinning",
            };
            io::write_event_log_json(&mut w, &log, &params, seed, name)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn moments(a: MomentsArgs) -> CliResult {
    let cfg = Config::load(a.model.config.as_deref())?;
    let params = model_params(&a.model, &cfg)?;
    let grid = parse_grid(
        &a.grid
            .map_or_else(|| cfg.list("grid"), |g| Ok(Some(g)))?
            .unwrap_or("0:50:1".into()),
    )?;
    let max_order = pick(a.max_order, cfg.u64("max-order")?.map(|k| k as u32), 2);
    if max_order == 0 {
        return Err(Failure::Usage("max-order must be at least 1".into()));
    }
    let recursive = a.recursive || cfg.bool("recursive")?;

    let curves = if recursive {
        let mp = MomentParams::new(&params, max_order).map_err(Error::from)?;
        (1..=max_order)
            .map(|k| mp.theta_k_recursive(k, &grid))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        // Surface every unstable order at once before computing anything.
        MomentParams::new(&params, max_order).map_err(Error::from)?;
        (1..=max_order)
            .map(|k| theory_curve(&params, k, &grid))
            .collect::<Result<Vec<_>, _>>()?
    };

    let mut w = open_output(out_path(a.out, &cfg)?.as_deref())?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=max_order).map(|k| format!("theta_{k}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, t) in grid.iter().enumerate() {
        let row: Vec<String> = std::iter::once(t.to_string())
            .chain(curves.iter().map(|c| c.values[i].to_string()))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    version: &'static str,
    seed: u64,
    n_paths: usize,
    delta: f64,
    workers: usize,
    params: &'a ModelParams,
    pass: bool,
    ci_overlap_fraction: f64,
    composition_seconds: f64,
    thinning_seconds: f64,
    composition_paths_per_second: f64,
    thinning_paths_per_second: f64,
    points: &'a [crate::montecarlo::PointReport],
}

fn validate(a: ValidateArgs) -> CliResult {
    let cfg = Config::load(a.model.config.as_deref())?;
    let params = model_params(&a.model, &cfg)?;
    let grid = parse_grid(
        &a.grid
            .map_or_else(|| cfg.list("grid"), |g| Ok(Some(g)))?
            .unwrap_or("1,5,10,25,50".into()),
    )?;
    let n_paths = pick(a.n_paths, cfg.u64("n-paths")?.map(|n| n as usize), 10_000);
    if n_paths < 2 {
        return Err(Failure::Usage("n-paths must be at least 2".into()));
    }
    let delta = pick(a.delta, cfg.f64("delta")?, DEFAULT_DELTA);
    let seed = pick(a.seed, cfg.u64("seed")?, 0);
    let workers = pick(a.workers, cfg.u64("workers")?.map(|n| n as usize), default_workers());
    if workers == 0 {
        return Err(Failure::Usage("workers must be positive".into()));
    }
    let theory_params = match a.theory_beta {
        Some(beta) => {
            let p = ModelParams { beta, ..params.clone() };
            p.validate()?;
            Some(p)
        }
        None => None,
    };

    let opts = CompareOptions {
        grid,
        n_paths,
        delta,
        base_seed: seed,
        workers,
        theory_params,
    };
    let cmp = compare_estimators(&params, &opts)?;
    let report = ValidateReport {
        version: env!("CARGO_PKG_VERSION"),
        seed,
        n_paths,
        delta,
        workers,
        params: &params,
        pass: cmp.all_pass(),
        ci_overlap_fraction: cmp.overlap_fraction(),
        composition_seconds: cmp.composition.seconds,
        thinning_seconds: cmp.thinning.seconds,
        composition_paths_per_second: cmp.composition.paths_per_second,
        thinning_paths_per_second: cmp.thinning.paths_per_second,
        points: &cmp.points,
    };
    let mut w = open_output(out_path(a.out, &cfg)?.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Usage(format!("json: {e}")))?;
    writeln!(w)?;
    w.flush()?;

    let failed: Vec<String> = cmp
        .points
        .iter()
        .filter(|p| !p.passes())
        .map(|p| format!("theta_{} at t={}", p.k, p.t))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("outside the 99.5% band: {}", failed.join(", "))))
    }
}

fn bench(a: BenchArgs) -> CliResult {
    let cfg = Config::load(a.model.config.as_deref())?;
    let params = model_params(&a.model, &cfg)?;
    let counts = parse_counts(
        &a.n.map_or_else(|| cfg.list("n"), |n| Ok(Some(n)))?
            .unwrap_or("100,1000".into()),
    )?;
    let end_time = pick(a.end_time, cfg.f64("end-time")?, 100.0);
    let deltas = parse_numbers(
        &a.deltas
            .map_or_else(|| cfg.list("deltas"), |d| Ok(Some(d)))?
            .unwrap_or("0.5,1,1.5,1.86,2.5,3.5,5".into()),
        ',',
    )?;
    let trials = pick(a.trials, cfg.u64("trials")?.map(|n| n as usize), 20);
    let seed = pick(a.seed, cfg.u64("seed")?, 0);

    let search = grid_search_delta(&params, end_time, &deltas, trials)?;
    let mut w = open_output(out_path(a.out, &cfg)?.as_deref())?;
    writeln!(
        w,
        "# window search over {} candidates, {trials} paths each",
        deltas.len()
    )?;
    for (d, secs) in &search.timings {
        writeln!(w, "#   delta={d:<8} {:.3e} s/path", secs)?;
    }
    writeln!(w, "# chosen delta = {}", search.best)?;
    writeln!(w, "{:<12} {:>8} {:>14} {:>8}", "method", "n", "seconds", "ratio")?;
    for &n in &counts {
        let comp = time_realizations(&params, Method::Composition, n, end_time, seed)?;
        let thin = time_realizations(&params, Method::Thinning { delta: search.best }, n, end_time, seed)?;
        writeln!(w, "{:<12} {:>8} {:>14.6} {:>8}", "composition", n, comp, "")?;
        writeln!(w, "{:<12} {:>8} {:>14.6} {:>8.2}", "thinning", n, thin, thin / comp)?;
    }
    w.flush()?;
    Ok(())
}
