//! Solution-quality measures.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{dist, dot, sub};
use crate::oracles::ProblemSpec;
use crate::rng::Stream;

/// `r_γ(x) = ‖x − (I + γB)⁻¹(x − γA(x))‖`, evaluated with the exact mean map.
/// Zero exactly at solutions.
pub fn residual(problem: &ProblemSpec, x: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return invalid(format!("residual step must be positive, got {gamma}"));
    }
    let a = problem.eval_mean(x)?;
    let forward: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi - gamma * ai).collect();
    let back = problem.resolvent.apply(gamma, &forward)?;
    Ok(dist(x, &back))
}

/// Lower estimate of the gap function `G(x) = sup_{y ∈ dom T} sup_{z ∈ T(y)} zᵀ(x − y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub value: f64,
    pub probe_count: usize,
    /// Always true: probing can only under-estimate a supremum.
    pub is_lower_bound: bool,
}

const ACTIVE_TOL: f64 = 1e-12;

/// Probes `y` are the nearest domain point to `x` followed by uniform draws
/// from the domain's bounding box mapped into the domain; the probe sequence
/// is a prefix-stable function of `rng`, so more probes never lower the value.
pub fn gap_estimate(problem: &ProblemSpec, x: &[f64], probes: usize, rng: &mut Stream) -> Result<GapEstimate> {
    check_dim(problem.dim(), x.len())?;
    let bound = problem
        .domain_bound
        .ok_or_else(|| Error::UnsupportedMetric("gap needs a bounded domain (domain_bound unset)".into()))?;
    if probes == 0 {
        return invalid("gap estimate needs at least one probe");
    }
    let n = x.len();
    let (lo, hi) = problem
        .resolvent
        .domain_box()
        .unwrap_or_else(|| (vec![-bound; n], vec![bound; n]));

    let pairing = |y: &[f64]| -> Result<f64> {
        let a = problem.eval_mean(y)?;
        let d = sub(x, y);
        Ok(dot(&a, &d) + problem.resolvent.max_selection_pairing(y, &d, ACTIVE_TOL))
    };

    let mut best = pairing(&problem.resolvent.project_domain(x)?)?;
    let mut u = vec![0.0; n];
    for _ in 1..probes {
        for i in 0..n {
            u[i] = lo[i] + (hi[i] - lo[i]) * rng.random::<f64>();
        }
        let y = problem.resolvent.project_domain(&u)?;
        best = best.max(pairing(&y)?);
    }
    Ok(GapEstimate {
        // G is nonnegative, so clamping keeps a valid lower bound.
        value: best.max(0.0),
        probe_count: probes,
        is_lower_bound: true,
    })
}

pub fn error_to_solution(problem: &ProblemSpec, x: &[f64]) -> Result<f64> {
    let xs = problem
        .known_solution
        .as_ref()
        .ok_or_else(|| Error::UnsupportedMetric("problem has no known solution".into()))?;
    check_dim(xs.len(), x.len())?;
    Ok(dist(x, xs))
}

/// Two-sided normal quantile at `level`, rounded to two decimals as in
/// printed z-tables (0.95 gives 1.96).
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("confidence level must lie in (0,1), got {level}"));
    }
    let normal = Normal::standard();
    let z = normal.inverse_cdf(0.5 + level / 2.0);
    Ok((z * 100.0).round() / 100.0)
}

/// `mean ± z(level) · s/√n` with the sample standard deviation `s`.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return invalid("confidence interval needs at least two values");
    }
    let z = z_value(level)?;
    let (mean, sd) = mean_and_sd(values);
    let half = z * sd / (values.len() as f64).sqrt();
    Ok((mean - half, mean + half))
}

pub(crate) fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Cross-trial summary of one solver on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub n_trials: usize,
    pub mean_residual: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_wall_seconds: f64,
    pub mean_error: Option<f64>,
}

impl TrialStats {
    pub fn from_trials(residuals: &[f64], wall_seconds: &[f64], errors: Option<&[f64]>, level: f64) -> Result<Self> {
        if residuals.is_empty() || residuals.len() != wall_seconds.len() {
            return invalid("trial vectors must be nonempty and of equal length");
        }
        let (mean_residual, _) = mean_and_sd(residuals);
        let (ci_low, ci_high) = if residuals.len() >= 2 {
            confidence_interval(residuals, level)?
        } else {
            (mean_residual, mean_residual)
        };
        Ok(TrialStats {
            n_trials: residuals.len(),
            mean_residual,
            ci_low,
            ci_high,
            mean_wall_seconds: mean_and_sd(wall_seconds).0,
            mean_error: errors.filter(|e| !e.is_empty()).map(|e| mean_and_sd(e).0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FeasibleSet, Resolvent};
    use crate::oracles::{DeterministicMap, ProblemConstants};
    use crate::rng::probe_stream;
    use std::sync::Arc;

    fn shifted_on_halfline() -> ProblemSpec {
        // A(x) = x - 1 on [0, ∞), solution 1.
        let map = DeterministicMap::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] - 1.0);
        ProblemSpec::new(
            "shifted",
            Arc::new(map),
            Resolvent::projection(FeasibleSet::nonneg_orthant(1).unwrap()),
            ProblemConstants { lipschitz: 1.0, sigma: 1.0, nu1: 0.0, nu2: 0.0 },
        )
        .unwrap()
        .with_known_solution(vec![1.0])
        .unwrap()
    }

    fn identity_on_interval() -> ProblemSpec {
        let map = DeterministicMap::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0]);
        ProblemSpec::new(
            "identity",
            Arc::new(map),
            Resolvent::projection(FeasibleSet::boxed(vec![-1.0], vec![1.0]).unwrap()),
            ProblemConstants { lipschitz: 1.0, sigma: 1.0, nu1: 0.0, nu2: 0.0 },
        )
        .unwrap()
        .with_domain_bound(1.0)
        .unwrap()
    }

    #[test]
    fn residual_hand_values() {
        let p = shifted_on_halfline();
        assert!((residual(&p, &[0.0], 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(residual(&p, &[1.0], 0.5).unwrap(), 0.0);
        assert!(residual(&p, &[1.0], 0.0).is_err());
    }

    #[test]
    fn error_to_solution_values() {
        let p = shifted_on_halfline();
        assert_eq!(error_to_solution(&p, &[1.0]).unwrap(), 0.0);
        assert_eq!(error_to_solution(&p, &[3.0]).unwrap(), 2.0);
        assert!(matches!(
            error_to_solution(&identity_on_interval(), &[0.0]),
            Err(Error::UnsupportedMetric(_))
        ));
    }

    #[test]
    fn gap_at_solution_is_zero() {
        let p = identity_on_interval();
        let g = gap_estimate(&p, &[0.0], 5000, &mut probe_stream(1)).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.is_lower_bound);
    }

    #[test]
    fn gap_needs_bounded_domain() {
        let p = shifted_on_halfline();
        assert!(matches!(
            gap_estimate(&p, &[0.0], 10, &mut probe_stream(1)),
            Err(Error::UnsupportedMetric(_))
        ));
    }

    #[test]
    fn gap_refines_monotonically() {
        let p = identity_on_interval();
        let mut last = 0.0;
        for probes in [1, 10, 100, 1000] {
            let g = gap_estimate(&p, &[1.0], probes, &mut probe_stream(9)).unwrap().value;
            assert!(g >= last);
            last = g;
        }
    }

    #[test]
    fn ci_examples() {
        assert_eq!(confidence_interval(&[3.0, 3.0, 3.0], 0.95).unwrap(), (3.0, 3.0));
        let (lo, hi) = confidence_interval(&[0.0, 2.0], 0.95).unwrap();
        assert!((lo + 0.96).abs() < 1e-12 && (hi - 2.96).abs() < 1e-12);
        let v = [0.3, 1.7, 2.2, 0.1];
        let (lo, hi) = confidence_interval(&v, 0.9).unwrap();
        assert!(((lo + hi) / 2.0 - 1.075).abs() < 1e-12);
        assert!(confidence_interval(&[1.0], 0.95).is_err());
        assert!(confidence_interval(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn trial_stats_bracket_mean() {
        let s = TrialStats::from_trials(&[1.0, 2.0, 4.0], &[0.1, 0.2, 0.3], None, 0.95).unwrap();
        assert!(s.ci_low <= s.mean_residual && s.mean_residual <= s.ci_high);
        assert!((s.mean_wall_seconds - 0.2).abs() < 1e-15);
        assert_eq!(s.mean_error, None);
    }
}
