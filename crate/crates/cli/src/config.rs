//! Experiment configuration documents (TOML, or JSON as an alternative).

use std::fs;
use std::path::{Path, PathBuf};

use mono_split::experiments::{Generator, Instance};
use mono_split::oracles::ProblemSpec;
use mono_split::schedules::{BatchSchedule, StepRule};
use mono_split::solvers::{InitialPoint, Scheme, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Residual,
    Error,
    Gap,
}

/// Either a generator block or a path to an instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemBlock {
    File { instance: PathBuf },
    Inline(Generator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub name: Option<String>,
    pub scheme: Scheme,
    #[serde(default)]
    pub step_rule: Option<StepRule>,
    #[serde(default)]
    pub batch_schedule: Option<BatchSchedule>,
    pub eval_budget: usize,
    #[serde(default)]
    pub initial_point: Option<InitialPoint>,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub metric_gamma: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn default_level() -> f64 {
    0.95
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Residual]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemBlock,
    pub solvers: Vec<SolverBlock>,
    pub n_trials: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed_base: u64,
    /// Label of the `L` column; defaults to the problem's Lipschitz constant.
    #[serde(default)]
    pub label: Option<String>,
}

impl ExperimentConfig {
    /// JSON when the extension is `.json` or the text opens with `{`,
    /// TOML otherwise.
    pub fn parse(text: &str, path_hint: Option<&Path>) -> CliResult<Self> {
        let json = path_hint.and_then(|p| p.extension()).is_some_and(|e| e == "json")
            || text.trim_start().starts_with('{');
        let cfg: ExperimentConfig = if json {
            serde_json::from_str(text).map_err(|e| {
                CliError::Config(format!("line {} column {}: {e}", e.line(), e.column()))
            })?
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, Some(path))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.solvers.is_empty() {
            return Err(CliError::Config("at least one solver block is required".into()));
        }
        if self.n_trials == 0 {
            return Err(CliError::Config("n_trials must be positive".into()));
        }
        if self.n_trials < 2 {
            return Err(CliError::Config("n_trials must be at least 2 for a confidence interval".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!("level must lie in (0,1), got {}", self.level)));
        }
        if let ProblemBlock::Inline(g) = &self.problem {
            g.validate().map_err(|e| CliError::Config(format!("problem: {e}")))?;
        }
        let mut names: Vec<String> = self.solvers.iter().map(|s| s.display_name()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("solver names must be distinct".into()));
        }
        Ok(())
    }

    /// Builds the problem; relative instance paths resolve against `base`.
    pub fn build_problem(&self, base: Option<&Path>) -> CliResult<ProblemSpec> {
        let spec = match &self.problem {
            ProblemBlock::Inline(g) => g.build(),
            ProblemBlock::File { instance } => {
                let path = match base {
                    Some(b) if instance.is_relative() => b.join(instance),
                    _ => instance.clone(),
                };
                let text = fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                Instance::from_json(&text).and_then(|i| i.build())
            }
        };
        spec.map_err(|e| CliError::Config(format!("problem: {e}")))
    }
}

impl SolverBlock {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.scheme.label().to_string())
    }

    /// Fills the scheme defaults (`γ = 1/(4L)` and `⌊k^1.01⌋` or
    /// `⌊1.01^{k+1}⌋` batches for vr-SMFBS, `1/√k` for SA) for `problem`.
    pub fn to_solver_config(&self, problem: &ProblemSpec, seed: u64) -> CliResult<SolverConfig> {
        let gamma = problem.default_gamma();
        let step_rule = self.step_rule.unwrap_or(match self.scheme {
            Scheme::Sa => StepRule::Diminishing { gamma0: 1.0, exponent: 0.5 },
            Scheme::VrSmfbsSingleSample => StepRule::Diminishing { gamma0: 4.0 * gamma, exponent: 1.0 },
            _ => StepRule::Constant { gamma },
        });
        let batch_schedule = self.batch_schedule.unwrap_or(match self.scheme {
            Scheme::VrSmfbs => default_vr_schedule(problem),
            _ => BatchSchedule::Constant { n: 1 },
        });
        let mut cfg = SolverConfig::new(self.scheme, step_rule, batch_schedule, self.eval_budget, seed);
        cfg.initial_point = self.initial_point.clone().unwrap_or_default();
        cfg.record_every = self.record_every;
        cfg.metric_gamma = self.metric_gamma;
        cfg.max_iterations = self.max_iterations;
        cfg.tol = self.tol;
        cfg.validate()
            .map_err(|e| CliError::Config(format!("solver {}: {e}", self.display_name())))?;
        Ok(cfg)
    }
}

pub fn default_vr_schedule(problem: &ProblemSpec) -> BatchSchedule {
    if problem.constants.sigma > 0.0 {
        BatchSchedule::Geometric { n0: 1, rho: 1.0 / 1.01 }
    } else {
        BatchSchedule::Polynomial { a: 1.01 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML_CFG: &str = r#"
n_trials = 2
output_dir = "out"

[problem]
generator = "synthetic"
dim = 2
sigma = 1.0
lipschitz = 2.0
nu2 = 0.5
seed = 3

[[solvers]]
scheme = { kind = "sa" }
eval_budget = 100
"#;

    #[test]
    fn parses_toml() {
        let cfg = ExperimentConfig::parse(TOML_CFG, None).unwrap();
        assert_eq!(cfg.solvers.len(), 1);
        assert_eq!(cfg.level, 0.95);
        let p = cfg.build_problem(None).unwrap();
        let sc = cfg.solvers[0].to_solver_config(&p, 0).unwrap();
        assert_eq!(sc.step_rule, StepRule::Diminishing { gamma0: 1.0, exponent: 0.5 });
    }

    #[test]
    fn toml_errors_name_the_line() {
        let bad = TOML_CFG.replace("eval_budget = 100", "eval_budget = \"lots\"");
        match ExperimentConfig::parse(&bad, None) {
            Err(CliError::Config(m)) => assert!(m.contains("line"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_empty_solver_list() {
        let bad = "solvers = []\n".to_string() + TOML_CFG.split("[[solvers]]").next().unwrap();
        assert!(ExperimentConfig::parse(&bad, None).is_err());
    }

    #[test]
    fn json_alternative() {
        let cfg = ExperimentConfig::parse(TOML_CFG, None).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&json, None).unwrap(), cfg);
    }
}
