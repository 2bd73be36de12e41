//! Affine calibration family `A(x) = Qx + q` with exactly known `L`, `σ`
//! and solution.
//!
//! `Q = U C Uᵀ` with `U` orthogonal and `C` block diagonal. A 2×2 block
//! `[[a, b], [−b, a]]` has spectral norm `√(a² + b²)` and symmetric part
//! `aI`. The first block uses `a = σ`, `b = √(L² − σ²)`, which fixes both
//! `‖Q‖₂ = L` and `λ_min((Q + Qᵀ)/2) = σ`; the other blocks stay inside
//! those bounds.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{FeasibleSet, Resolvent};
use crate::oracles::{AdditiveNoise, NoisyMap, ProblemConstants, ProblemSpec};
use crate::rng::instance_stream;

pub const MAX_SYNTHETIC_DIM: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub dim: usize,
    pub sigma: f64,
    pub lipschitz: f64,
    #[serde(default)]
    pub nu1: f64,
    #[serde(default)]
    pub nu2: f64,
    /// Zero symmetric part everywhere; needs `sigma = 0`.
    #[serde(default)]
    pub skew_only: bool,
    /// Restrict to the box `[−w, w]^n`; the solution stays interior.
    #[serde(default)]
    pub box_half_width: Option<f64>,
    pub seed: u64,
}

impl SyntheticParams {
    pub fn new(dim: usize, sigma: f64, lipschitz: f64, nu1: f64, nu2: f64, seed: u64) -> Self {
        SyntheticParams { dim, sigma, lipschitz, nu1, nu2, skew_only: false, box_half_width: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_SYNTHETIC_DIM {
            return invalid(format!("dim must lie in 1..={MAX_SYNTHETIC_DIM}, got {}", self.dim));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return invalid(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) || self.lipschitz < self.sigma {
            return invalid(format!("need L >= sigma and L > 0, got L={} sigma={}", self.lipschitz, self.sigma));
        }
        if self.dim == 1 && self.sigma != self.lipschitz {
            return invalid("a 1-D affine map has L = sigma");
        }
        if self.skew_only && (self.sigma != 0.0 || self.dim < 2) {
            return invalid("skew-only instances need sigma = 0 and dim >= 2");
        }
        for v in [self.nu1, self.nu2] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid("noise levels must be nonnegative");
            }
        }
        if let Some(w) = self.box_half_width {
            if !(w.is_finite() && w > 0.0) {
                return invalid(format!("box half-width must be positive, got {w}"));
            }
        }
        Ok(())
    }
}

/// The generated `(Q, x̂)`; `Q` is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub q_matrix: Vec<f64>,
    pub solution: Vec<f64>,
}

pub fn synthetic_data(p: &SyntheticParams) -> Result<SyntheticData> {
    p.validate()?;
    let n = p.dim;
    let mut rng = instance_stream(p.seed);
    let (sigma, l) = (p.sigma, p.lipschitz);
    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut i = 0;
    while i + 1 < n {
        let (a, b) = if i == 0 {
            (sigma, (l * l - sigma * sigma).max(0.0).sqrt())
        } else if p.skew_only {
            (0.0, l * rng.random::<f64>())
        } else {
            let a = sigma + (l - sigma) * rng.random::<f64>();
            (a, (l * l - a * a).max(0.0).sqrt() * rng.random::<f64>())
        };
        c[(i, i)] = a;
        c[(i + 1, i + 1)] = a;
        c[(i, i + 1)] = b;
        c[(i + 1, i)] = -b;
        i += 2;
    }
    if i < n {
        c[(i, i)] = if n == 1 {
            l
        } else if p.skew_only {
            0.0
        } else {
            sigma + (l - sigma) * rng.random::<f64>()
        };
    }
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let u = g.qr().q();
    let q = &u * c * u.transpose();
    let reach = p.box_half_width.map_or(1.0, |w| 0.5 * w);
    let solution = (0..n).map(|_| reach * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let q_matrix = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| q[(r, c)]).collect();
    Ok(SyntheticData { q_matrix, solution })
}

pub fn make_synthetic(p: &SyntheticParams) -> Result<ProblemSpec> {
    let data = synthetic_data(p)?;
    let n = p.dim;
    let q = data.q_matrix.clone();
    let xs = data.solution.clone();
    let offset: Vec<f64> = (0..n).map(|r| -(0..n).map(|c| q[r * n + c] * xs[c]).sum::<f64>()).collect();
    let noise = AdditiveNoise { nu1: p.nu1, nu2: p.nu2 };
    let map = NoisyMap::new(n, noise, move |x: &[f64], out: &mut [f64]| {
        for r in 0..n {
            let row = &q[r * n..(r + 1) * n];
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset[r];
        }
    });
    let (set, bound) = match p.box_half_width {
        Some(w) => (FeasibleSet::boxed(vec![-w; n], vec![w; n])?, Some(w * (n as f64).sqrt())),
        None => (FeasibleSet::whole_space(n)?, None),
    };
    let constants = ProblemConstants { lipschitz: p.lipschitz, sigma: p.sigma, nu1: p.nu1, nu2: p.nu2 };
    let mut spec = ProblemSpec::new("synthetic", Arc::new(map), Resolvent::projection(set), constants)?
        .with_known_solution(data.solution)?;
    if let Some(b) = bound {
        spec = spec.with_domain_bound(b)?;
    }
    Ok(spec)
}
