//! Batch-size schedules and step-size rules.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rule producing the mini-batch size `N_k` of iteration `k` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BatchSchedule {
    Constant { n: usize },
    /// `max(1, ⌊k^a⌋)`, `a > 1`.
    Polynomial { a: f64 },
    /// `n0 · max(1, ⌊ρ^{-(k+1)}⌋)`, `ρ ∈ (0, 1)`.
    Geometric { n0: usize, rho: f64 },
}

impl BatchSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BatchSchedule::Constant { n: 0 } => invalid("constant batch size must be >= 1"),
            BatchSchedule::Polynomial { a } if !(a.is_finite() && a > 1.0) => {
                invalid(format!("polynomial batch exponent must exceed 1, got {a}"))
            }
            BatchSchedule::Geometric { n0, rho } if n0 == 0 || !(rho > 0.0 && rho < 1.0) => {
                invalid(format!("geometric batches need n0 >= 1 and rho in (0,1), got n0={n0}, rho={rho}"))
            }
            _ => Ok(()),
        }
    }

    pub fn batch_size(&self, k: u64) -> usize {
        match *self {
            BatchSchedule::Constant { n } => n,
            BatchSchedule::Polynomial { a } => ((k as f64).powf(a).floor() as usize).max(1),
            BatchSchedule::Geometric { n0, rho } => {
                let growth = rho.powf(-((k + 1) as f64)).floor() as usize;
                n0.saturating_mul(growth.max(1))
            }
        }
    }
}

/// Step-length rule. `gamma_at(k)` is defined for `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Constant { gamma: f64 },
    /// `gamma0 / k^exponent`
    Diminishing { gamma0: f64, exponent: f64 },
}

impl StepRule {
    /// `allow_sqrt` admits the exponent 1/2 used by the stochastic
    /// approximation baseline; the splitting schemes need `(1/2, 1]`.
    pub fn validate(&self, allow_sqrt: bool) -> Result<()> {
        match *self {
            StepRule::Constant { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                invalid(format!("step must be positive, got {gamma}"))
            }
            StepRule::Diminishing { gamma0, exponent } => {
                if !(gamma0.is_finite() && gamma0 > 0.0) {
                    return invalid(format!("initial step must be positive, got {gamma0}"));
                }
                let lower_ok = exponent > 0.5 || (allow_sqrt && exponent == 0.5);
                if !(lower_ok && exponent <= 1.0) {
                    return invalid(format!("diminishing exponent must lie in (1/2, 1], got {exponent}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn gamma_at(&self, k: u64) -> f64 {
        match *self {
            StepRule::Constant { gamma } => gamma,
            StepRule::Diminishing { gamma0, exponent } => gamma0 / (k.max(1) as f64).powf(exponent),
        }
    }
}

/// Largest constant step for merely monotone problems:
/// `1 / (2 sqrt(L² + 4ν₁²/N₀))`.
pub fn step_monotone(lipschitz: f64, nu1: f64, n0: usize) -> Result<f64> {
    if !(lipschitz > 0.0) {
        return invalid(format!("Lipschitz constant must be positive, got {lipschitz}"));
    }
    if n0 == 0 {
        return invalid("initial batch size must be >= 1");
    }
    let l_tilde = (lipschitz * lipschitz + 4.0 * nu1 * nu1 / n0 as f64).sqrt();
    Ok(1.0 / (2.0 * l_tilde))
}

/// `safety · min{σ/4, 1/(20σ), √7 / (4 sqrt(L² + 1/2))}`; the bound is
/// strict, hence the safety factor below one.
pub fn step_strongly_monotone(lipschitz: f64, sigma: f64, safety: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return invalid(format!("strong monotonicity modulus must be positive, got {sigma}"));
    }
    if !(lipschitz > 0.0) {
        return invalid(format!("Lipschitz constant must be positive, got {lipschitz}"));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return invalid(format!("safety factor must lie in (0, 1], got {safety}"));
    }
    let l_tilde = (lipschitz * lipschitz + 0.5).sqrt();
    let cap = (sigma / 4.0)
        .min(1.0 / (20.0 * sigma))
        .min(7f64.sqrt() / (4.0 * l_tilde));
    Ok(safety * cap)
}

pub const DEFAULT_SAFETY: f64 = 0.99;

/// Smallest `N₀` with `N₀ >= 2(24γ² + 8)ν₁² / (σγ)`, at least 1.
pub fn min_batch_strongly_monotone(gamma: f64, sigma: f64, nu1: f64) -> Result<usize> {
    if !(gamma > 0.0 && sigma > 0.0) {
        return invalid("step and modulus must be positive");
    }
    let bound = 2.0 * (24.0 * gamma * gamma + 8.0) * nu1 * nu1 / (sigma * gamma);
    Ok((bound.ceil() as usize).max(1))
}

/// The constant step `1/(4L)` used for the reported experiments.
pub fn practical_step(lipschitz: f64) -> f64 {
    1.0 / (4.0 * lipschitz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polynomial_clamps_first_batch() {
        let s = BatchSchedule::Polynomial { a: 1.01 };
        assert_eq!(s.batch_size(0), 1);
        assert_eq!(s.batch_size(1), 1);
        // 3^1.01 = 3.0332...
        assert_eq!(s.batch_size(3), 3);
    }

    #[test]
    fn geometric_first_batch() {
        let s = BatchSchedule::Geometric { n0: 5, rho: 0.5 };
        assert_eq!(s.batch_size(0), 10);
        assert_eq!(s.batch_size(1), 20);
    }

    #[test]
    fn schedule_validation() {
        assert!(BatchSchedule::Constant { n: 0 }.validate().is_err());
        assert!(BatchSchedule::Polynomial { a: 1.0 }.validate().is_err());
        assert!(BatchSchedule::Geometric { n0: 1, rho: 1.0 }.validate().is_err());
        assert!(StepRule::Diminishing { gamma0: 1.0, exponent: 0.5 }.validate(false).is_err());
        assert!(StepRule::Diminishing { gamma0: 1.0, exponent: 0.5 }.validate(true).is_ok());
        assert!(StepRule::Diminishing { gamma0: 1.0, exponent: 1.2 }.validate(true).is_err());
    }

    #[test]
    fn monotone_step_values() {
        assert!((step_monotone(10.0, 0.0, 1).unwrap() - 0.05).abs() < 1e-15);
        assert!((step_monotone(3.0, 2.0, 4).unwrap() - 0.138_675_049_056_307_3).abs() < 1e-12);
        assert!((step_monotone(1.0, 1.0, 1).unwrap() - 0.223_606_797_749_979).abs() < 1e-12);
        assert!(step_monotone(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn strongly_monotone_step_values() {
        assert!((step_strongly_monotone(2.0, 1.0, 1.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((step_strongly_monotone(1.0, 4.0, 1.0).unwrap() - 0.0125).abs() < 1e-15);
        let full = step_strongly_monotone(3.0, 0.7, 1.0).unwrap();
        assert_eq!(step_strongly_monotone(3.0, 0.7, 0.5).unwrap(), 0.5 * full);
        assert!(step_strongly_monotone(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn minimum_initial_batch() {
        assert_eq!(min_batch_strongly_monotone(0.05, 1.0, 0.0).unwrap(), 1);
        assert_eq!(min_batch_strongly_monotone(0.05, 1.0, 1.0).unwrap(), 323);
        assert_eq!(min_batch_strongly_monotone(0.1, 2.0, 0.5).unwrap(), 21);
    }

    #[test]
    fn reciprocal_batches_are_summable() {
        for s in [
            BatchSchedule::Polynomial { a: 1.01 },
            BatchSchedule::Polynomial { a: 1.5 },
            BatchSchedule::Geometric { n0: 1, rho: 0.99 },
        ] {
            let total: f64 = (0..1_000_000u64).map(|k| 1.0 / s.batch_size(k) as f64).sum();
            // ⌊k^a⌋ >= k^a / 2 for k >= 1, so the sum is below 2 + 2ζ(a) (ζ(1.01) ≈ 100.6).
            assert!(total < 2.0 + 2.0 * 100.6, "{s:?}: {total}");
        }
    }

    #[test]
    fn diminishing_steps_diverge_with_summable_squares() {
        for exponent in [0.51, 0.75, 1.0] {
            let rule = StepRule::Diminishing { gamma0: 1.0, exponent };
            let (mut s1, mut s2) = (0.0, 0.0);
            for k in 1..=1_000_000u64 {
                let g = rule.gamma_at(k);
                s1 += g;
                s2 += g * g;
            }
            // Σ k^{-p} over 1..K >= ∫_1^{K+1} t^{-p} dt, which is >= ln(10^6) for p <= 1.
            assert!(s1 >= (1e6f64).ln());
            // Σ k^{-2p} <= 1 + 1/(2p - 1).
            assert!(s2 <= 1.0 + 1.0 / (2.0 * exponent - 1.0));
        }
    }

    proptest! {
        #[test]
        fn batches_are_nondecreasing(a in 1.001f64..3.0, n0 in 1usize..50, rho in 0.05f64..0.999, k in 0u64..2000) {
            for s in [
                BatchSchedule::Polynomial { a },
                BatchSchedule::Geometric { n0, rho },
            ] {
                prop_assert!(s.batch_size(k + 1) >= s.batch_size(k));
                prop_assert!(s.batch_size(k) >= 1);
            }
        }

        #[test]
        fn geometric_lower_bound(n0 in 1usize..50, rho in 0.3f64..0.999, k in 0u64..200) {
            let s = BatchSchedule::Geometric { n0, rho };
            let bound = 0.5 * n0 as f64 * rho.powf(-((k + 1) as f64));
            // Beyond 2^53 the batch size saturates rather than grows.
            prop_assume!(bound < 1e15);
            prop_assert!(s.batch_size(k) as f64 >= bound);
        }

        #[test]
        fn monotone_step_keeps_descent_term_nonnegative(l in 0.01f64..1e4, nu1 in 0.0f64..100.0, n0 in 1usize..1000) {
            let g = step_monotone(l, nu1, n0).unwrap();
            let slack = 0.5 - 2.0 * g * g * (l * l + 4.0 * nu1 * nu1 / n0 as f64);
            prop_assert!(slack >= -1e-12);
        }
    }
}
