//! vr-SMFBS, its single-sample variant, projected stochastic approximation,
//! deterministic modified forward-backward splitting (Tseng) and the
//! sample-average approximation pipeline.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::Resolvent;
use crate::linalg::{all_finite, dist};
use crate::metrics::{error_to_solution, residual};
use crate::oracles::{ProblemSpec, StochasticMap};
use crate::rng::{init_stream, iteration_stream, scenario_stream, Phase, Stream};
use crate::schedules::{BatchSchedule, StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    VrSmfbs,
    VrSmfbsSingleSample,
    Sa,
    DeterministicMfbs,
    Saa { nu_samples: usize },
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::VrSmfbs => "vr-smfbs",
            Scheme::VrSmfbsSingleSample => "vr-smfbs-single",
            Scheme::Sa => "sa",
            Scheme::DeterministicMfbs => "mfbs",
            Scheme::Saa { .. } => "saa",
        }
    }
}

/// Starting point `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPoint {
    #[default]
    Zero,
    /// Uniform draw from `[lo, hi]^n` on the seed's init stream, then mapped
    /// into the domain of `B`.
    Uniform { lo: f64, hi: f64 },
    Given { x: Vec<f64> },
}

impl InitialPoint {
    pub fn realize(&self, problem: &ProblemSpec, seed: u64) -> Result<Vec<f64>> {
        let n = problem.dim();
        let raw = match self {
            InitialPoint::Zero => vec![0.0; n],
            InitialPoint::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return invalid(format!("invalid initial box [{lo}, {hi}]"));
                }
                let mut rng = init_stream(seed);
                (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
            InitialPoint::Given { x } => {
                check_dim(n, x.len())?;
                x.clone()
            }
        };
        problem.resolvent.project_domain(&raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub step_rule: StepRule,
    pub batch_schedule: BatchSchedule,
    pub eval_budget: usize,
    pub seed: u64,
    /// `None` picks 1 for budgets up to 10^5 and about 1000 records otherwise.
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub initial_point: InitialPoint,
    /// Step of the recorded residual; defaults to the problem's `1/(4L)`.
    #[serde(default)]
    pub metric_gamma: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Stopping tolerance of the deterministic solvers.
    #[serde(default)]
    pub tol: Option<f64>,
}

pub const DEFAULT_MFBS_TOL: f64 = 1e-10;
pub const SAA_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_MFBS_ITERS: usize = 2_000_000;
const RECORD_LIMIT: usize = 100_000;
const TARGET_RECORDS: usize = 1000;

impl SolverConfig {
    pub fn new(scheme: Scheme, step_rule: StepRule, batch_schedule: BatchSchedule, eval_budget: usize, seed: u64) -> Self {
        SolverConfig {
            scheme,
            step_rule,
            batch_schedule,
            eval_budget,
            seed,
            record_every: None,
            initial_point: InitialPoint::Zero,
            metric_gamma: None,
            max_iterations: None,
            tol: None,
        }
    }

    pub fn vr_smfbs(gamma: f64, batch_schedule: BatchSchedule, eval_budget: usize, seed: u64) -> Self {
        Self::new(Scheme::VrSmfbs, StepRule::Constant { gamma }, batch_schedule, eval_budget, seed)
    }

    /// Projected SA with `γ_k = 1/√k`.
    pub fn sa(eval_budget: usize, seed: u64) -> Self {
        Self::new(
            Scheme::Sa,
            StepRule::Diminishing { gamma0: 1.0, exponent: 0.5 },
            BatchSchedule::Constant { n: 1 },
            eval_budget,
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.eval_budget == 0 {
            return cfg("eval_budget must be positive".into());
        }
        if self.record_every == Some(0) {
            return cfg("record_every must be positive".into());
        }
        if let Some(g) = self.metric_gamma {
            if !(g.is_finite() && g > 0.0) {
                return cfg(format!("metric_gamma must be positive, got {g}"));
            }
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                return cfg(format!("tol must be nonnegative, got {t}"));
            }
        }
        self.batch_schedule.validate().map_err(to_config)?;
        let unit_batch = self.batch_schedule == BatchSchedule::Constant { n: 1 };
        match self.scheme {
            Scheme::VrSmfbs => self.step_rule.validate(false).map_err(to_config),
            Scheme::VrSmfbsSingleSample => {
                if !unit_batch || !matches!(self.step_rule, StepRule::Diminishing { .. }) {
                    return cfg("single-sample mode needs batch constant(1) and a diminishing step".into());
                }
                self.step_rule.validate(false).map_err(to_config)
            }
            Scheme::Sa => {
                if !unit_batch {
                    return cfg("stochastic approximation uses batch constant(1)".into());
                }
                self.step_rule.validate(true).map_err(to_config)
            }
            Scheme::DeterministicMfbs => match self.step_rule {
                StepRule::Constant { .. } => self.step_rule.validate(false).map_err(to_config),
                _ => cfg("deterministic splitting needs a constant step".into()),
            },
            Scheme::Saa { nu_samples } => {
                if nu_samples == 0 {
                    return cfg("SAA needs at least one scenario".into());
                }
                Ok(())
            }
        }
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub cum_evals: usize,
    pub residual: f64,
    pub error: Option<f64>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
    pub final_iterate: Vec<f64>,
    pub averaged_iterate: Vec<f64>,
    pub half_iterates_sum: Vec<f64>,
    pub iterations: usize,
    /// False when a deterministic solver stopped at its iteration cap.
    pub converged: bool,
}

impl IterationTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// `x̄_K = Σ x_{k+1/2} / K` from the running sum.
pub fn averaged_iterate(trace: &IterationTrace) -> Result<Vec<f64>> {
    if trace.iterations == 0 {
        return invalid("averaged iterate of an empty trace");
    }
    let k = trace.iterations as f64;
    Ok(trace.half_iterates_sum.iter().map(|s| s / k).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x_next: Vec<f64>,
    pub x_half: Vec<f64>,
    pub evals: usize,
}

/// Shared arithmetic of one modified forward-backward step, given the two
/// forward evaluations. Keeping it in one place makes the noiseless
/// stochastic scheme reproduce the deterministic one bit for bit.
fn forward_backward_forward(
    resolvent: &Resolvent,
    gamma: f64,
    x: &[f64],
    a_x: &[f64],
    mut eval_half: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let forward: Vec<f64> = x.iter().zip(a_x).map(|(xi, ai)| xi - gamma * ai).collect();
    let x_half = resolvent.apply(gamma, &forward)?;
    let mut a_half = vec![0.0; x.len()];
    eval_half(&x_half, &mut a_half);
    let x_next = x_half
        .iter()
        .zip(a_half.iter().zip(a_x))
        .map(|(h, (ah, ax))| h - gamma * (ah - ax))
        .collect();
    Ok((x_next, x_half))
}

/// One vr-SMFBS step with `A_k` drawn from `rng_base` and `A_{k+1/2}`
/// from `rng_half`.
pub fn vr_smfbs_step(
    problem: &ProblemSpec,
    x: &[f64],
    gamma: f64,
    n_k: usize,
    rng_base: &mut Stream,
    rng_half: &mut Stream,
) -> Result<StepOutput> {
    check_dim(problem.dim(), x.len())?;
    if !(gamma > 0.0) {
        return invalid(format!("step must be positive, got {gamma}"));
    }
    if n_k == 0 {
        return invalid("batch size must be at least 1");
    }
    let mut a_k = vec![0.0; x.len()];
    problem.minibatch_into(x, n_k, rng_base, &mut a_k);
    let (x_next, x_half) = forward_backward_forward(&problem.resolvent, gamma, x, &a_k, |y, out| {
        problem.minibatch_into(y, n_k, rng_half, out)
    })?;
    Ok(StepOutput { x_next, x_half, evals: 2 * n_k })
}

/// One deterministic step on the mean map; returns `(x_next, x_half)`.
pub fn deterministic_mfbs_step(
    mean: &dyn Fn(&[f64], &mut [f64]),
    resolvent: &Resolvent,
    gamma: f64,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(resolvent.dim(), x.len())?;
    if !(gamma > 0.0) {
        return invalid(format!("step must be positive, got {gamma}"));
    }
    let mut a_x = vec![0.0; x.len()];
    mean(x, &mut a_x);
    forward_backward_forward(resolvent, gamma, x, &a_x, mean)
}

struct Recorder<'a> {
    problem: &'a ProblemSpec,
    metric_gamma: f64,
    every: usize,
    start: Instant,
    records: Vec<TraceRecord>,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a ProblemSpec, config: &SolverConfig, planned: usize) -> Self {
        let every = config.record_every.unwrap_or(if config.eval_budget <= RECORD_LIMIT {
            1
        } else {
            planned.div_ceil(TARGET_RECORDS).max(1)
        });
        Recorder {
            problem,
            metric_gamma: config.metric_gamma.unwrap_or_else(|| problem.default_gamma()),
            every,
            start: Instant::now(),
            records: Vec::new(),
        }
    }

    fn due(&self, k: usize) -> bool {
        k.is_multiple_of(self.every)
    }

    fn record(&mut self, k: usize, batch_size: usize, gamma: f64, cum_evals: usize, x: &[f64]) -> Result<()> {
        let res = residual(self.problem, x, self.metric_gamma)?;
        let error = match self.problem.known_solution {
            Some(_) => Some(error_to_solution(self.problem, x)?),
            None => None,
        };
        self.records.push(TraceRecord {
            k,
            batch_size,
            gamma,
            cum_evals,
            residual: res,
            error,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Number of vr-SMFBS steps whose `2N_k` costs fit in `budget`.
fn planned_iterations(schedule: &BatchSchedule, budget: usize, cap: Option<usize>) -> usize {
    let cap = cap.unwrap_or(usize::MAX);
    let (mut k, mut spent) = (0usize, 0usize);
    while k < cap {
        let c = schedule.batch_size(k as u64).saturating_mul(2);
        if spent.saturating_add(c) > budget {
            break;
        }
        spent += c;
        k += 1;
    }
    k
}

/// Runs vr-SMFBS (or its single-sample mode) until the next step's `2N_k`
/// evaluations no longer fit in the budget.
pub fn run_vr_smfbs(problem: &ProblemSpec, config: &SolverConfig) -> Result<IterationTrace> {
    if !matches!(config.scheme, Scheme::VrSmfbs | Scheme::VrSmfbsSingleSample) {
        return Err(Error::Config(format!("run_vr_smfbs called with scheme {:?}", config.scheme)));
    }
    config.validate()?;
    let first = 2 * config.batch_schedule.batch_size(0);
    if config.eval_budget < first {
        return Err(Error::Config(format!(
            "budget {} is smaller than the first step's {} evaluations",
            config.eval_budget, first
        )));
    }
    let planned = planned_iterations(&config.batch_schedule, config.eval_budget, config.max_iterations);
    let mut rec = Recorder::new(problem, config, planned);
    let mut x = config.initial_point.realize(problem, config.seed)?;
    let mut half_sum = vec![0.0; x.len()];
    let (mut k, mut cum) = (0usize, 0usize);
    let mut last = (0usize, 0.0);
    while config.max_iterations.is_none_or(|m| k < m) {
        let n_k = config.batch_schedule.batch_size(k as u64);
        if cum + 2 * n_k > config.eval_budget {
            break;
        }
        let gamma = config.step_rule.gamma_at(k as u64 + 1);
        let mut base = iteration_stream(config.seed, k as u64, Phase::Base);
        let mut half = iteration_stream(config.seed, k as u64, Phase::Half);
        let step = vr_smfbs_step(problem, &x, gamma, n_k, &mut base, &mut half)?;
        if !all_finite(&step.x_half) || !all_finite(&step.x_next) {
            return Err(Error::Divergence { iteration: k, last_finite: x });
        }
        half_sum.iter_mut().zip(&step.x_half).for_each(|(s, h)| *s += h);
        x = step.x_next;
        cum += step.evals;
        k += 1;
        last = (n_k, gamma);
        if rec.due(k) {
            rec.record(k, n_k, gamma, cum, &x)?;
        }
    }
    if !rec.due(k) {
        rec.record(k, last.0, last.1, cum, &x)?;
    }
    finish(rec, x, half_sum, k, true)
}

fn finish(rec: Recorder<'_>, x: Vec<f64>, half_sum: Vec<f64>, iterations: usize, converged: bool) -> Result<IterationTrace> {
    let mut trace = IterationTrace {
        records: rec.records,
        final_iterate: x,
        averaged_iterate: Vec::new(),
        half_iterates_sum: half_sum,
        iterations,
        converged,
    };
    trace.averaged_iterate = averaged_iterate(&trace)?;
    Ok(trace)
}

/// Projected stochastic approximation `x_{k+1} = (I + γ_k B)⁻¹(x_k − γ_k A(x_k, ω_k))`,
/// one draw per iteration, `k` counted from 1. The averaged iterate is the
/// mean of `x_1, …, x_K`.
pub fn run_sa(problem: &ProblemSpec, config: &SolverConfig) -> Result<IterationTrace> {
    if config.scheme != Scheme::Sa {
        return Err(Error::Config(format!("run_sa called with scheme {:?}", config.scheme)));
    }
    config.validate()?;
    let planned = config.max_iterations.map_or(config.eval_budget, |m| m.min(config.eval_budget));
    if planned == 0 {
        return Err(Error::Config("stochastic approximation needs at least one iteration".into()));
    }
    let mut rec = Recorder::new(problem, config, planned);
    let mut x = config.initial_point.realize(problem, config.seed)?;
    let mut sum = vec![0.0; x.len()];
    let mut a = vec![0.0; x.len()];
    let mut forward = vec![0.0; x.len()];
    let mut gamma = 0.0;
    for k in 1..=planned {
        gamma = config.step_rule.gamma_at(k as u64);
        let mut rng = iteration_stream(config.seed, k as u64 - 1, Phase::Base);
        problem.minibatch_into(&x, 1, &mut rng, &mut a);
        for i in 0..x.len() {
            forward[i] = x[i] - gamma * a[i];
        }
        let next = problem.resolvent.apply(gamma, &forward)?;
        if !all_finite(&next) {
            return Err(Error::Divergence { iteration: k - 1, last_finite: x });
        }
        x = next;
        sum.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
        if rec.due(k) {
            rec.record(k, 1, gamma, k, &x)?;
        }
    }
    if !rec.due(planned) {
        rec.record(planned, 1, gamma, planned, &x)?;
    }
    finish(rec, x, sum, planned, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfbsOutcome {
    pub solution: Vec<f64>,
    /// `r_γ` of `solution` at the solver's own step.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Deterministic modified forward-backward splitting on a mean map. Stops
/// once `r_γ(x_k) ≤ tol`; at the iteration cap returns the iterate with the
/// smallest residual seen, flagged as not converged.
pub fn run_deterministic_mfbs(
    mean: &dyn Fn(&[f64], &mut [f64]),
    resolvent: &Resolvent,
    gamma: f64,
    tol: f64,
    max_iters: usize,
    x0: &[f64],
) -> Result<MfbsOutcome> {
    check_dim(resolvent.dim(), x0.len())?;
    if !(gamma > 0.0) {
        return invalid(format!("step must be positive, got {gamma}"));
    }
    let mut x = x0.to_vec();
    let mut best = (f64::INFINITY, x.clone());
    let mut a_x = vec![0.0; x.len()];
    for k in 0..=max_iters {
        mean(&x, &mut a_x);
        let forward: Vec<f64> = x.iter().zip(&a_x).map(|(xi, ai)| xi - gamma * ai).collect();
        let x_half = resolvent.apply(gamma, &forward)?;
        let r = dist(&x, &x_half);
        if !r.is_finite() {
            return Err(Error::Divergence { iteration: k, last_finite: best.1 });
        }
        if r <= tol {
            return Ok(MfbsOutcome { solution: x, residual: r, iterations: k, converged: true });
        }
        if r < best.0 {
            best = (r, x.clone());
        }
        if k == max_iters {
            break;
        }
        let mut a_half = vec![0.0; x.len()];
        mean(&x_half, &mut a_half);
        x = x_half
            .iter()
            .zip(a_half.iter().zip(&a_x))
            .map(|(h, (ah, ax))| h - gamma * (ah - ax))
            .collect();
    }
    Ok(MfbsOutcome { solution: best.1, residual: best.0, iterations: max_iters, converged: false })
}

/// The deterministic map `x ↦ (1/ν) Σ_l A(x, ω_l)` over a frozen scenario set.
pub struct SampleAverageMap<'a> {
    map: &'a dyn StochasticMap,
    scenarios: Vec<f64>,
    count: usize,
    bias: Option<Vec<f64>>,
}

impl fmt::Debug for SampleAverageMap<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampleAverageMap").field("count", &self.count).finish_non_exhaustive()
    }
}

impl<'a> SampleAverageMap<'a> {
    pub fn draw(problem: &'a ProblemSpec, nu: usize, rng: &mut Stream) -> Result<Self> {
        if nu == 0 {
            return invalid("sample average needs at least one scenario");
        }
        let map = problem.map().as_ref();
        let len = map.scenario_len();
        let mut scenarios = vec![0.0; len * nu];
        if !problem.is_noiseless() {
            for chunk in scenarios.chunks_mut(len.max(1)).take(nu) {
                map.draw_scenario(rng, chunk);
            }
        }
        Ok(SampleAverageMap { map, scenarios, count: nu, bias: problem.bias.clone() })
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let len = self.map.scenario_len();
        if len == 0 || self.scenarios.is_empty() {
            self.map.mean(x, out);
        } else {
            let mut one = vec![0.0; out.len()];
            out.fill(0.0);
            for s in self.scenarios.chunks(len) {
                self.map.eval_scenario(x, s, &mut one);
                out.iter_mut().zip(&one).for_each(|(o, v)| *o += v);
            }
            let n = self.count as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        if let Some(b) = &self.bias {
            out.iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaOutcome {
    pub solution: Vec<f64>,
    /// Residual against the exact mean map.
    pub residual: f64,
    pub wall_seconds: f64,
    pub sub_iterations: usize,
    pub converged: bool,
}

/// Draws `nu` scenarios from the seed's scenario stream, solves the
/// sample-average problem by deterministic splitting at step `1/(2L)`, and
/// scores the result on the true mean map. Wall time covers both phases.
/// A noiseless problem uses its mean map as the single scenario.
pub fn run_saa(problem: &ProblemSpec, nu: usize, config: &SolverConfig) -> Result<SaaOutcome> {
    let start = Instant::now();
    let mut rng = scenario_stream(config.seed);
    let saa = SampleAverageMap::draw(problem, nu, &mut rng)?;
    let x0 = config.initial_point.realize(problem, config.seed)?;
    let gamma = 1.0 / (2.0 * problem.constants.lipschitz);
    let out = run_deterministic_mfbs(
        &|x, o| saa.eval(x, o),
        &problem.resolvent,
        gamma,
        config.tol.unwrap_or(SAA_TOL),
        config.max_iterations.unwrap_or(DEFAULT_MAX_MFBS_ITERS),
        &x0,
    )?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let metric_gamma = config.metric_gamma.unwrap_or_else(|| problem.default_gamma());
    Ok(SaaOutcome {
        residual: residual(problem, &out.solution, metric_gamma)?,
        solution: out.solution,
        wall_seconds,
        sub_iterations: out.iterations,
        converged: out.converged,
    })
}

/// Dispatches on `config.scheme` and returns a trace for every scheme. The
/// deterministic solver charges two mean evaluations per iteration; an SAA
/// run yields one record whose `k` is the sub-solver's iteration count and
/// whose `cum_evals` is `ν`.
pub fn run(problem: &ProblemSpec, config: &SolverConfig) -> Result<IterationTrace> {
    match config.scheme {
        Scheme::VrSmfbs | Scheme::VrSmfbsSingleSample => run_vr_smfbs(problem, config),
        Scheme::Sa => run_sa(problem, config),
        Scheme::DeterministicMfbs => run_mfbs_traced(problem, config),
        Scheme::Saa { nu_samples } => {
            config.validate()?;
            let out = run_saa(problem, nu_samples, config)?;
            let error = match problem.known_solution {
                Some(_) => Some(error_to_solution(problem, &out.solution)?),
                None => None,
            };
            Ok(IterationTrace {
                records: vec![TraceRecord {
                    k: out.sub_iterations,
                    batch_size: nu_samples,
                    gamma: 1.0 / (2.0 * problem.constants.lipschitz),
                    cum_evals: nu_samples,
                    residual: out.residual,
                    error,
                    elapsed_seconds: out.wall_seconds,
                }],
                averaged_iterate: out.solution.clone(),
                half_iterates_sum: out.solution.clone(),
                final_iterate: out.solution,
                iterations: 1,
                converged: out.converged,
            })
        }
    }
}

fn run_mfbs_traced(problem: &ProblemSpec, config: &SolverConfig) -> Result<IterationTrace> {
    config.validate()?;
    let gamma = config.step_rule.gamma_at(1);
    let tol = config.tol.unwrap_or(DEFAULT_MFBS_TOL);
    let cap = (config.eval_budget / 2).min(config.max_iterations.unwrap_or(usize::MAX));
    let mut rec = Recorder::new(problem, config, cap);
    let mut x = config.initial_point.realize(problem, config.seed)?;
    let mut half_sum = vec![0.0; x.len()];
    let mean = |y: &[f64], out: &mut [f64]| problem.mean_into(y, out);
    let mut k = 0;
    let mut converged = false;
    while k < cap {
        let (next, half) = deterministic_mfbs_step(&mean, &problem.resolvent, gamma, &x)?;
        if !all_finite(&next) || !all_finite(&half) {
            return Err(Error::Divergence { iteration: k, last_finite: x });
        }
        let moved = dist(&x, &half);
        half_sum.iter_mut().zip(&half).for_each(|(s, h)| *s += h);
        x = next;
        k += 1;
        if rec.due(k) {
            rec.record(k, 1, gamma, 2 * k, &x)?;
        }
        if moved <= tol {
            converged = true;
            break;
        }
    }
    if k == 0 {
        return Err(Error::Config("budget too small for one deterministic step".into()));
    }
    if !rec.due(k) {
        rec.record(k, 1, gamma, 2 * k, &x)?;
    }
    finish(rec, x, half_sum, k, converged)
}
