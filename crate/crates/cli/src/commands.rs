//! The `run` and `reproduce` subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mono_split::experiments::{make_cournot, CournotParams};
use mono_split::oracles::ProblemSpec;
use mono_split::schedules::{BatchSchedule, StepRule};
use mono_split::solvers::{InitialPoint, Scheme, SolverConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, Metric};
use crate::error::{CliError, CliResult};
use crate::harness::{
    format_comparison, label_for, pool, run_trials, summarize, write_aggregate, write_json, write_trace, ResultRow,
    TrialOutcome,
};

#[derive(Debug, Serialize)]
struct RunMetadata {
    seed_base: u64,
    trial_seeds: Vec<u64>,
    seed_rule: &'static str,
    error_column: String,
    level: f64,
    diverged: BTreeMap<String, Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<BTreeMap<String, Vec<f64>>>,
}

const SEED_RULE: &str = "trial t uses seed seed_base + t";

fn error_note(problem: &ProblemSpec) -> String {
    format!(
        "error_mean is the mean residual ||x - R(x - gamma A(x))|| at gamma = {} (1/(4L))",
        problem.default_gamma()
    )
}

#[derive(Debug)]
pub struct RunSummary {
    pub rows: Vec<ResultRow>,
    pub aggregate_path: PathBuf,
}

pub fn cmd_run(config_path: &Path, jobs: usize) -> CliResult<RunSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    let base = config_path.parent();
    let problem = cfg.build_problem(base)?;
    if cfg.metrics.contains(&Metric::Error) && problem.known_solution.is_none() {
        return Err(CliError::Config("metric `error` needs a problem with a known solution".into()));
    }
    let want_gap = cfg.metrics.contains(&Metric::Gap);
    if want_gap && problem.domain_bound.is_none() {
        return Err(CliError::Config("metric `gap` needs a bounded domain".into()));
    }
    let out_dir = match base {
        Some(b) if cfg.output_dir.is_relative() => b.join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    };
    let label = cfg.label.clone().unwrap_or_else(|| label_for(problem.constants.lipschitz));
    let workers = pool(jobs)?;
    let mut rows = Vec::new();
    let mut diverged = BTreeMap::new();
    let mut gaps = BTreeMap::new();
    for block in &cfg.solvers {
        let name = block.display_name();
        let make = |seed| block.to_solver_config(&problem, seed);
        let outcomes = run_trials(&workers, &problem, &make, cfg.n_trials, cfg.seed_base, want_gap)?;
        for o in &outcomes {
            if let Some(t) = &o.trace {
                write_trace(&out_dir.join("traces").join(format!("{name}_L{label}_trial{}.csv", o.trial)), t)?;
            }
        }
        let failures: Vec<String> = outcomes.iter().filter_map(|o| o.failure.clone()).collect();
        if !failures.is_empty() {
            eprintln!("warning: {name}: {} of {} trials diverged", failures.len(), outcomes.len());
            diverged.insert(name.clone(), failures);
        }
        if want_gap {
            gaps.insert(name.clone(), outcomes.iter().map(|o| o.gap.unwrap_or(f64::NAN)).collect());
        }
        rows.push(summarize(&name, &label, &outcomes, block.eval_budget, cfg.seed_base, cfg.level)?);
    }
    let aggregate_path = out_dir.join("aggregate.csv");
    write_aggregate(&aggregate_path, &rows)?;
    write_json(
        &out_dir.join("metadata.json"),
        &RunMetadata {
            seed_base: cfg.seed_base,
            trial_seeds: (0..cfg.n_trials as u64).map(|t| cfg.seed_base + t).collect(),
            seed_rule: SEED_RULE,
            error_column: error_note(&problem),
            level: cfg.level,
            diverged,
            gap: want_gap.then_some(gaps),
        },
    )?;
    if rows.iter().all(|r| r.diverged == r.trials) {
        return Err(CliError::AllDiverged(format!("see {}", out_dir.join("metadata.json").display())));
    }
    Ok(RunSummary { rows, aggregate_path })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Table2,
    Table3,
    Table4,
}

impl FromStr for Table {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "table2" => Ok(Table::Table2),
            "table3" => Ok(Table::Table3),
            "table4" => Ok(Table::Table4),
            other => Err(CliError::Config(format!("unknown table `{other}` (expected table2, table3 or table4)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub scale: f64,
    pub out: PathBuf,
    pub jobs: usize,
    pub seed: u64,
    pub players: usize,
    pub trials: usize,
    /// Lipschitz constant of the sample-average comparison.
    pub saa_lipschitz: f64,
}

impl ReproduceOptions {
    pub fn new(out: PathBuf) -> Self {
        ReproduceOptions {
            scale: 1.0,
            out,
            jobs: 1,
            seed: 0,
            players: DEFAULT_PLAYERS,
            trials: DEFAULT_TRIALS,
            saa_lipschitz: 10.0,
        }
    }

    fn validate(&self) -> CliResult<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(CliError::Config(format!("scale must lie in (0, 1], got {}", self.scale)));
        }
        if self.trials < 2 {
            return Err(CliError::Config("at least two trials are needed".into()));
        }
        if self.players == 0 {
            return Err(CliError::Config("at least one player is needed".into()));
        }
        Ok(())
    }

    fn budget(&self, full: usize) -> usize {
        ((full as f64 * self.scale).round() as usize).max(2)
    }
}

pub const DEFAULT_PLAYERS: usize = 5;
pub const DEFAULT_TRIALS: usize = 20;
pub const SWEEP: [f64; 4] = [1e1, 1e2, 1e3, 1e4];
pub const FULL_BUDGET: usize = 20_000;
pub const COMPLICATED_BUDGET: usize = 2_000;
pub const SAA_SAMPLES: [usize; 5] = [1000, 2000, 4000, 10_000, 20_000];
pub const VR_LABEL: &str = "vr-smfbs";
pub const SA_LABEL: &str = "sa";

/// Both solvers record only their final state so timings are not
/// inflated by residual evaluations.
const FINAL_ONLY: usize = usize::MAX;

pub fn vr_config(problem: &ProblemSpec, strongly: bool, budget: usize, seed: u64) -> SolverConfig {
    let schedule = if strongly {
        BatchSchedule::Geometric { n0: 1, rho: 1.0 / 1.01 }
    } else {
        BatchSchedule::Polynomial { a: 1.01 }
    };
    let mut c = SolverConfig::vr_smfbs(problem.default_gamma(), schedule, budget, seed);
    c.initial_point = InitialPoint::Uniform { lo: 0.0, hi: 1.0 };
    c.record_every = Some(FINAL_ONLY);
    c
}

pub fn sa_config(budget: usize, seed: u64) -> SolverConfig {
    let mut c = SolverConfig::sa(budget, seed);
    c.initial_point = InitialPoint::Uniform { lo: 0.0, hi: 1.0 };
    c.record_every = Some(FINAL_ONLY);
    c
}

pub fn saa_config(nu: usize, seed: u64) -> SolverConfig {
    let mut c = SolverConfig::new(
        Scheme::Saa { nu_samples: nu },
        StepRule::Constant { gamma: 1.0 },
        BatchSchedule::Constant { n: 1 },
        nu,
        seed,
    );
    c.initial_point = InitialPoint::Uniform { lo: 0.0, hi: 1.0 };
    c
}

pub fn cournot_instance(opts: &ReproduceOptions, lipschitz: f64, merely: bool, complicated: bool) -> CliResult<ProblemSpec> {
    let mut p = CournotParams::for_lipschitz(opts.players, lipschitz, merely, opts.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    p.complicated_set = complicated;
    Ok(make_cournot(&p)?)
}

#[derive(Debug)]
pub struct ReproduceReport {
    pub rows: Vec<ResultRow>,
    pub complicated: Vec<ResultRow>,
    pub text: String,
}

fn pair(
    workers: &rayon::ThreadPool,
    opts: &ReproduceOptions,
    problem: &ProblemSpec,
    strongly: bool,
    budget: usize,
    label: &str,
) -> CliResult<(ResultRow, ResultRow, Vec<TrialOutcome>)> {
    let vr = run_trials(workers, problem, &|s| Ok(vr_config(problem, strongly, budget, s)), opts.trials, opts.seed, false)?;
    let sa = run_trials(workers, problem, &|s| Ok(sa_config(budget, s)), opts.trials, opts.seed, false)?;
    let vr_row = summarize(VR_LABEL, label, &vr, budget, opts.seed, 0.95)?;
    let sa_row = summarize(SA_LABEL, label, &sa, budget, opts.seed, 0.95)?;
    let mut all = vr;
    all.extend(sa);
    Ok((vr_row, sa_row, all))
}

pub fn cmd_reproduce(table: Table, opts: &ReproduceOptions) -> CliResult<ReproduceReport> {
    opts.validate()?;
    let workers = pool(opts.jobs)?;
    let report = match table {
        Table::Table2 | Table::Table3 => {
            let strongly = table == Table::Table3;
            let regime = if strongly { "strongly monotone" } else { "merely monotone" };
            let budget = opts.budget(FULL_BUDGET);
            let mut rows = Vec::new();
            let mut lines = Vec::new();
            let mut outcomes = Vec::new();
            for l in SWEEP {
                let problem = cournot_instance(opts, l, !strongly, false)?;
                let (vr, sa, all) = pair(&workers, opts, &problem, strongly, budget, &label_for(l))?;
                outcomes.extend(all);
                lines.push((label_for(l), vr.clone(), sa.clone()));
                rows.push(vr);
                rows.push(sa);
            }
            let l_c = if strongly { 1e3 } else { 1e2 };
            let small = opts.budget(COMPLICATED_BUDGET);
            let problem = cournot_instance(opts, l_c, !strongly, true)?;
            let (cvr, csa, all) = pair(&workers, opts, &problem, strongly, small, &label_for(l_c))?;
            outcomes.extend(all);
            let borrowed: Vec<_> = lines.iter().map(|(k, a, b)| (k.clone(), a, b)).collect();
            let mut text = format_comparison(&format!("{regime}, {budget} evaluations"), VR_LABEL, SA_LABEL, &borrowed);
            text += &format_comparison(
                &format!("capped simplex, {regime}, {small} evaluations"),
                VR_LABEL,
                SA_LABEL,
                &[(label_for(l_c), &cvr, &csa)],
            );
            write_aggregate(&opts.out.join("aggregate.csv"), &rows)?;
            write_aggregate(&opts.out.join("complicated.csv"), &[cvr.clone(), csa.clone()])?;
            write_reproduce_metadata(opts, &outcomes)?;
            ReproduceReport { rows, complicated: vec![cvr, csa], text }
        }
        Table::Table4 => {
            let mut rows = Vec::new();
            let mut text = String::new();
            let mut outcomes = Vec::new();
            let label = label_for(opts.saa_lipschitz);
            for (strongly, tag) in [(true, "strong"), (false, "monotone")] {
                let problem = cournot_instance(opts, opts.saa_lipschitz, !strongly, false)?;
                let mut lines = Vec::new();
                for nu_full in SAA_SAMPLES {
                    let nu = opts.budget(nu_full);
                    let saa = run_trials(&workers, &problem, &|s| Ok(saa_config(nu, s)), opts.trials, opts.seed, false)?;
                    let vr = run_trials(&workers, &problem, &|s| Ok(vr_config(&problem, strongly, nu, s)), opts.trials, opts.seed, false)?;
                    let saa_row = summarize(&format!("saa-{tag}"), &label, &saa, nu, opts.seed, 0.95)?;
                    let vr_row = summarize(&format!("{VR_LABEL}-{tag}"), &label, &vr, nu, opts.seed, 0.95)?;
                    outcomes.extend(saa);
                    outcomes.extend(vr);
                    lines.push((nu.to_string(), saa_row.clone(), vr_row.clone()));
                    rows.push(saa_row);
                    rows.push(vr_row);
                }
                let borrowed: Vec<_> = lines.iter().map(|(k, a, b)| (k.clone(), a, b)).collect();
                text += &format_comparison(&format!("{tag}, L = {label}, nu samples"), "saa", VR_LABEL, &borrowed);
            }
            write_aggregate(&opts.out.join("aggregate.csv"), &rows)?;
            write_reproduce_metadata(opts, &outcomes)?;
            ReproduceReport { rows, complicated: Vec::new(), text }
        }
    };
    Ok(report)
}

#[derive(Debug, Serialize)]
struct ReproduceMetadata {
    seed_base: u64,
    trial_seeds: Vec<u64>,
    seed_rule: &'static str,
    scale: f64,
    players: usize,
    error_column: &'static str,
    diverged_trials: usize,
}

fn write_reproduce_metadata(opts: &ReproduceOptions, outcomes: &[TrialOutcome]) -> CliResult<()> {
    write_json(
        &opts.out.join("metadata.json"),
        &ReproduceMetadata {
            seed_base: opts.seed,
            trial_seeds: (0..opts.trials as u64).map(|t| opts.seed + t).collect(),
            seed_rule: SEED_RULE,
            scale: opts.scale,
            players: opts.players,
            error_column: "mean residual at gamma = 1/(4L)",
            diverged_trials: outcomes.iter().filter(|o| o.failure.is_some()).count(),
        },
    )
}
