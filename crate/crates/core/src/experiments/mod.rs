//! Problem generators and the self-describing instance document.

pub mod cournot;
pub mod mlf;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{ProblemConstants, ProblemSpec};

pub use cournot::{expected_clamped_min, make_cournot, smoothed_recourse_grad, CournotParams};
pub use mlf::{make_mlf_game, MlfParams};
pub use synthetic::{make_synthetic, SyntheticParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    Cournot(CournotParams),
    Mlf(MlfParams),
    Synthetic(SyntheticParams),
}

impl Generator {
    pub fn build(&self) -> Result<ProblemSpec> {
        match self {
            Generator::Cournot(p) => make_cournot(p),
            Generator::Mlf(p) => make_mlf_game(p),
            Generator::Synthetic(p) => make_synthetic(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Generator::Cournot(p) => p.validate(),
            Generator::Mlf(p) => p.validate(),
            Generator::Synthetic(p) => p.validate(),
        }
    }
}

/// Generator parameters plus the constants a run relied on. Constants
/// stored in the document take precedence over the derived ones, so a
/// document can be audited against its own claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub problem: Generator,
    #[serde(default)]
    pub constants: Option<ProblemConstants>,
    #[serde(default)]
    pub known_solution: Option<Vec<f64>>,
}

impl Instance {
    /// Document with the derived constants and solution filled in.
    pub fn describe(problem: Generator) -> Result<Self> {
        let spec = problem.build()?;
        Ok(Instance {
            problem,
            constants: Some(spec.constants),
            known_solution: spec.known_solution.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("instance JSON, line {} column {}: {e}", e.line(), e.column()))
        })?;
        inst.problem.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance documents always serialize")
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let mut spec = self.problem.build()?;
        if let Some(c) = self.constants {
            c.validate()?;
            spec.constants = c;
        }
        if let Some(xs) = &self.known_solution {
            spec = spec.with_known_solution(xs.clone())?;
        }
        Ok(spec)
    }
}
