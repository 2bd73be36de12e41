//! Trial execution on a worker pool, aggregation and CSV output.

use std::fs;
use std::path::Path;
use std::time::Instant;

use mono_split::metrics::{gap_estimate, TrialStats};
use mono_split::oracles::ProblemSpec;
use mono_split::rng::probe_stream;
use mono_split::solvers::{self, IterationTrace, SolverConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const AGGREGATE_HEADER: [&str; 9] = [
    "solver", "L", "trials", "error_mean", "ci_low", "ci_high", "time_mean_s", "evals", "seed",
];
pub const TRACE_HEADER: [&str; 7] = ["k", "N_k", "gamma", "cum_evals", "residual", "error", "elapsed_s"];

pub const GAP_PROBES: usize = 2000;

/// Parallelism: explicit value, then `MONO_SPLIT_JOBS`, then all cores.
pub fn resolve_jobs(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("MONO_SPLIT_JOBS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// `None` when the run diverged.
    pub trace: Option<IterationTrace>,
    pub residual: f64,
    pub wall_seconds: f64,
    pub gap: Option<f64>,
    pub failure: Option<String>,
}

/// Runs `trials` independent seeds `seed_base + t`. Divergence is recorded
/// in the outcome; any other error aborts.
pub fn run_trials(
    pool: &rayon::ThreadPool,
    problem: &ProblemSpec,
    make_config: &(dyn Fn(u64) -> CliResult<SolverConfig> + Sync),
    trials: usize,
    seed_base: u64,
    want_gap: bool,
) -> CliResult<Vec<TrialOutcome>> {
    let configs = (0..trials)
        .map(|t| make_config(seed_base + t as u64))
        .collect::<CliResult<Vec<_>>>()?;
    let mut out = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(t, cfg)| run_one(problem, cfg, t, want_gap))
            .collect::<CliResult<Vec<_>>>()
    })?;
    out.sort_by_key(|o| o.trial);
    Ok(out)
}

fn run_one(problem: &ProblemSpec, cfg: &SolverConfig, trial: usize, want_gap: bool) -> CliResult<TrialOutcome> {
    let start = Instant::now();
    let result = solvers::run(problem, cfg);
    let wall_seconds = match &result {
        Ok(t) if matches!(cfg.scheme, solvers::Scheme::Saa { .. }) => t.records[0].elapsed_seconds,
        _ => start.elapsed().as_secs_f64(),
    };
    match result {
        Ok(trace) => {
            let residual = trace.last().map_or(f64::NAN, |r| r.residual);
            let gap = if want_gap {
                let g = gap_estimate(problem, &trace.averaged_iterate, GAP_PROBES, &mut probe_stream(cfg.seed))?;
                Some(g.value)
            } else {
                None
            };
            Ok(TrialOutcome { trial, seed: cfg.seed, trace: Some(trace), residual, wall_seconds, gap, failure: None })
        }
        Err(e @ mono_split::Error::Divergence { .. }) => Ok(TrialOutcome {
            trial,
            seed: cfg.seed,
            trace: None,
            residual: f64::NAN,
            wall_seconds,
            gap: None,
            failure: Some(e.to_string()),
        }),
        Err(e) => Err(e.into()),
    }
}

/// One aggregate row. `error_mean` is the mean residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub solver: String,
    #[serde(rename = "L")]
    pub label: String,
    pub trials: usize,
    pub error_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub time_mean_s: f64,
    pub evals: usize,
    pub seed: u64,
    #[serde(skip)]
    pub diverged: usize,
}

pub fn summarize(
    solver: &str,
    label: &str,
    outcomes: &[TrialOutcome],
    evals: usize,
    seed_base: u64,
    level: f64,
) -> CliResult<ResultRow> {
    let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.failure.is_none()).collect();
    let diverged = outcomes.len() - ok.len();
    let (error_mean, ci_low, ci_high, time_mean_s) = if ok.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let res: Vec<f64> = ok.iter().map(|o| o.residual).collect();
        let wall: Vec<f64> = ok.iter().map(|o| o.wall_seconds).collect();
        let s = TrialStats::from_trials(&res, &wall, None, level)?;
        (s.mean_residual, s.ci_low, s.ci_high, s.mean_wall_seconds)
    };
    Ok(ResultRow {
        solver: solver.to_string(),
        label: label.to_string(),
        trials: outcomes.len(),
        error_mean,
        ci_low,
        ci_high,
        time_mean_s,
        evals,
        seed: seed_base,
        diverged,
    })
}

pub fn label_for(lipschitz: f64) -> String {
    format!("{lipschitz:e}")
}

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

/// Rows are sorted on `(solver, L, evals)` so worker scheduling never shows in the file.
pub fn write_aggregate(path: &Path, rows: &[ResultRow]) -> CliResult<()> {
    create_parent(path)?;
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (&a.solver, &a.label, a.evals).cmp(&(&b.solver, &b.label, b.evals)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in &sorted {
        w.write_record([
            r.solver.clone(),
            r.label.clone(),
            r.trials.to_string(),
            r.error_mean.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.time_mean_s.to_string(),
            r.evals.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &IterationTrace) -> CliResult<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            r.batch_size.to_string(),
            r.gamma.to_string(),
            r.cum_evals.to_string(),
            r.residual.to_string(),
            r.error.map_or(String::new(), |e| e.to_string()),
            r.elapsed_seconds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(value).expect("metadata serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Fixed-width comparison table of two solvers keyed by row label.
pub fn format_comparison(title: &str, left: &str, right: &str, rows: &[(String, &ResultRow, &ResultRow)]) -> String {
    let mut s = format!("{title}\n");
    s += &format!(
        "{:>8} | {:>9} {:>9} {:>21} | {:>9} {:>9} {:>21}\n",
        "", left, "time/s", "CI", right, "time/s", "CI"
    );
    for (key, a, b) in rows {
        s += &format!(
            "{:>8} | {:>9.2e} {:>9.3} [{:>9.2e},{:>9.2e}] | {:>9.2e} {:>9.3} [{:>9.2e},{:>9.2e}]\n",
            key, a.error_mean, a.time_mean_s, a.ci_low, a.ci_high, b.error_mean, b.time_mean_s, b.ci_low, b.ci_high
        );
    }
    s
}
