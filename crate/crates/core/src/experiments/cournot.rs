//! Cournot game with smoothed quadratic recourse.
//!
//! Player `i` has map
//! `A_i(x, h) = m_i x_i + ℓ_i + r(X + x_i) − d + min(x_i/ε, h_i)` with
//! `h_i ~ U[h_low, h_high]`, on the nonnegative orthant or on the capped
//! simplex `{x ≥ 0, Σx ≤ cap}`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{FeasibleSet, Resolvent};
use crate::oracles::{ProblemConstants, ProblemSpec, StochasticMap};
use crate::rng::{instance_stream, Stream};
use crate::solvers::{run_deterministic_mfbs, DEFAULT_MAX_MFBS_ITERS, DEFAULT_MFBS_TOL};

/// `argmax_{λ ≤ h} tλ − (ε/2)λ²` with `t = x_i`, which is `min(x_i/ε, h)`.
pub fn smoothed_recourse_grad(x_i: f64, h: f64, epsilon: f64) -> Result<f64> {
    if h > 0.0 {
        return invalid(format!("recourse bound must be nonpositive, got {h}"));
    }
    if !(epsilon > 0.0) {
        return invalid(format!("smoothing must be positive, got {epsilon}"));
    }
    Ok((x_i / epsilon).min(h))
}

/// `E[min(t, h)]` for `h ~ U[a, b]`.
pub fn expected_clamped_min(t: f64, a: f64, b: f64) -> f64 {
    if t >= b {
        0.5 * (a + b)
    } else if t <= a {
        t
    } else {
        (-0.5 * t * t + b * t - 0.5 * a * a) / (b - a)
    }
}

pub const DEFAULT_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CournotParams {
    pub players: usize,
    pub epsilon: f64,
    pub m: Vec<f64>,
    pub ell: Vec<f64>,
    #[serde(default = "one")]
    pub d: f64,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "h_low_default")]
    pub h_low: f64,
    #[serde(default)]
    pub h_high: f64,
    #[serde(default)]
    pub complicated_set: bool,
    #[serde(default = "cap_default")]
    pub cap: f64,
    /// Draw `h` once from the instance seed instead of per oracle call.
    #[serde(default)]
    pub frozen_h: bool,
    /// Replace `r(X𝟏 + x)` by `rX𝟏`, whose Jacobian `r𝟏𝟏ᵀ` is only
    /// positive semidefinite.
    #[serde(default)]
    pub merely_monotone: bool,
    /// Compute `x*` by deterministic splitting at construction.
    #[serde(default)]
    pub solve_reference: bool,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn h_low_default() -> f64 {
    -5.0
}
fn cap_default() -> f64 {
    DEFAULT_CAP
}

impl CournotParams {
    /// `ℓ_i ~ U(2, 3)` drawn from the seed, `d = r = 1`, `h ~ U[−5, 0]`.
    pub fn standard(players: usize, epsilon: f64, m: Vec<f64>, seed: u64) -> Result<Self> {
        if players == 0 {
            return invalid("need at least one player");
        }
        let mut rng = instance_stream(seed);
        let ell = (0..players).map(|_| rng.random_range(2.0..3.0)).collect();
        let p = CournotParams {
            players,
            epsilon,
            m,
            ell,
            d: 1.0,
            r: 1.0,
            h_low: -5.0,
            h_high: 0.0,
            complicated_set: false,
            cap: DEFAULT_CAP,
            frozen_h: false,
            merely_monotone: false,
            solve_reference: false,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Instance whose Lipschitz bound equals `lipschitz`, reached through
    /// the curvatures: `ε = 1` and `m_i = L_B u_i / max u` with `u_i ~ U(0,1)`
    /// and `L_B = L − L_R − 1`. In the merely monotone variant the first two
    /// players get `m_i = 0`, which leaves `M + r𝟏𝟏ᵀ` singular.
    pub fn for_lipschitz(players: usize, lipschitz: f64, merely_monotone: bool, seed: u64) -> Result<Self> {
        let mut p = Self::standard(players, 1.0, vec![0.0; players], seed)?;
        p.merely_monotone = merely_monotone;
        let l_b = lipschitz - p.lipschitz_r() - 1.0;
        if l_b < 0.0 {
            return invalid(format!(
                "L = {lipschitz} is below r‖I+𝟏𝟏ᵀ‖ + 1/ε = {} for {players} players",
                p.lipschitz_r() + 1.0
            ));
        }
        let mut rng = instance_stream(seed ^ 0x9e37_79b9_7f4a_7c15);
        let u: Vec<f64> = (0..players).map(|_| rng.random::<f64>()).collect();
        let top = u.iter().cloned().fold(f64::MIN, f64::max);
        p.m = u.iter().map(|ui| l_b * ui / top).collect();
        if merely_monotone {
            p.m.iter_mut().take(2).for_each(|v| *v = 0.0);
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.players == 0 || self.players > MAX_PLAYERS {
            return invalid(format!("players must lie in 1..={MAX_PLAYERS}, got {}", self.players));
        }
        if self.m.len() != self.players || self.ell.len() != self.players {
            return invalid("m and ell must have one entry per player");
        }
        if self.m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.ell.iter().any(|v| !v.is_finite()) {
            return invalid("m must be nonnegative and ell finite");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.r.is_finite() && self.r >= 0.0 && self.d.is_finite()) {
            return invalid("r must be nonnegative and d finite");
        }
        if !(self.h_low.is_finite() && self.h_low < self.h_high && self.h_high <= 0.0) {
            return invalid(format!("need h_low < h_high <= 0, got [{}, {}]", self.h_low, self.h_high));
        }
        if self.complicated_set && !(self.cap.is_finite() && self.cap > 0.0) {
            return invalid(format!("cap must be positive, got {}", self.cap));
        }
        Ok(())
    }

    /// `r‖I + 𝟏𝟏ᵀ‖₂ = r(J + 1)`, or `r‖𝟏𝟏ᵀ‖₂ = rJ` when merely monotone.
    pub fn lipschitz_r(&self) -> f64 {
        let j = self.players as f64;
        if self.merely_monotone {
            self.r * j
        } else {
            self.r * (j + 1.0)
        }
    }

    /// `max m + L_R + 1/ε`.
    pub fn lipschitz(&self) -> f64 {
        let max_m = self.m.iter().cloned().fold(0.0, f64::max);
        max_m + self.lipschitz_r() + 1.0 / self.epsilon
    }

    pub fn sigma(&self) -> f64 {
        if self.merely_monotone {
            0.0
        } else {
            self.m.iter().cloned().fold(f64::INFINITY, f64::min) + self.r
        }
    }

    /// Each coordinate's noise is a clamped copy of `h_i`, so its variance is
    /// at most `Var(h) = (h_high − h_low)²/12`.
    pub fn nu2(&self) -> f64 {
        if self.frozen_h {
            return 0.0;
        }
        let w = self.h_high - self.h_low;
        (self.players as f64 * w * w / 12.0).sqrt()
    }
}

pub const MAX_PLAYERS: usize = 100_000;

#[derive(Clone)]
pub struct CournotMap {
    params: CournotParams,
    frozen: Option<Vec<f64>>,
}

impl fmt::Debug for CournotMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CournotMap")
            .field("players", &self.params.players)
            .field("frozen", &self.frozen.is_some())
            .finish()
    }
}

impl CournotMap {
    pub fn new(params: CournotParams) -> Result<Self> {
        params.validate()?;
        let frozen = params.frozen_h.then(|| {
            let mut rng = instance_stream(params.seed.wrapping_add(1));
            (0..params.players)
                .map(|_| params.h_low + (params.h_high - params.h_low) * rng.random::<f64>())
                .collect()
        });
        Ok(CournotMap { params, frozen })
    }

    pub fn frozen_h(&self) -> Option<&[f64]> {
        self.frozen.as_deref()
    }

    /// `Mx + ℓ + R(x) − d`, the part of the map that does not depend on `h`.
    fn smooth_part(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let total: f64 = x.iter().sum();
        let own = if p.merely_monotone { 0.0 } else { 1.0 };
        for i in 0..x.len() {
            out[i] = p.m[i] * x[i] + p.ell[i] + p.r * (total + own * x[i]) - p.d;
        }
    }

    fn draw_h(&self, rng: &mut Stream) -> f64 {
        self.params.h_low + (self.params.h_high - self.params.h_low) * rng.random::<f64>()
    }
}

impl StochasticMap for CournotMap {
    fn dim(&self) -> usize {
        self.params.players
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        self.smooth_part(x, out);
        let p = &self.params;
        for i in 0..x.len() {
            let t = x[i] / p.epsilon;
            out[i] += match &self.frozen {
                Some(h) => t.min(h[i]),
                None => expected_clamped_min(t, p.h_low, p.h_high),
            };
        }
    }

    fn scenario_len(&self) -> usize {
        if self.frozen.is_some() {
            0
        } else {
            self.params.players
        }
    }

    fn draw_scenario(&self, rng: &mut Stream, scenario: &mut [f64]) {
        for v in scenario.iter_mut() {
            *v = self.draw_h(rng);
        }
    }

    fn eval_scenario(&self, x: &[f64], scenario: &[f64], out: &mut [f64]) {
        if scenario.is_empty() {
            return self.mean(x, out);
        }
        self.smooth_part(x, out);
        for i in 0..x.len() {
            out[i] += (x[i] / self.params.epsilon).min(scenario[i]);
        }
    }

    fn sample_mean(&self, x: &[f64], n: usize, rng: &mut Stream, out: &mut [f64]) {
        if self.frozen.is_some() {
            return self.mean(x, out);
        }
        let j = x.len();
        let t: Vec<f64> = x.iter().map(|xi| xi / self.params.epsilon).collect();
        let mut acc = vec![0.0; j];
        for _ in 0..n {
            for i in 0..j {
                acc[i] += t[i].min(self.draw_h(rng));
            }
        }
        self.smooth_part(x, out);
        let inv = n as f64;
        out.iter_mut().zip(&acc).for_each(|(o, a)| *o += a / inv);
    }
}

pub fn make_cournot(params: &CournotParams) -> Result<ProblemSpec> {
    let map = CournotMap::new(params.clone())?;
    let set = if params.complicated_set {
        FeasibleSet::capped_simplex(params.players, params.cap)?
    } else {
        FeasibleSet::nonneg_orthant(params.players)?
    };
    let constants = ProblemConstants {
        lipschitz: params.lipschitz(),
        sigma: params.sigma(),
        nu1: 0.0,
        nu2: params.nu2(),
    };
    let name = if params.merely_monotone { "cournot-monotone" } else { "cournot" };
    let mut spec = ProblemSpec::new(name, Arc::new(map), Resolvent::projection(set), constants)?;
    if params.complicated_set {
        spec = spec.with_domain_bound(params.cap)?;
    }
    if params.solve_reference {
        let x0 = vec![0.0; params.players];
        let m = spec.map().clone();
        let out = run_deterministic_mfbs(
            &|x, o| m.mean(x, o),
            &spec.resolvent,
            1.0 / (2.0 * constants.lipschitz),
            DEFAULT_MFBS_TOL,
            DEFAULT_MAX_MFBS_ITERS,
            &x0,
        )?;
        spec = spec.with_known_solution(out.solution)?;
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{iteration_stream, Phase};

    #[test]
    fn recourse_examples() {
        assert_eq!(smoothed_recourse_grad(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(smoothed_recourse_grad(1.0, -2.0, 0.1).unwrap(), -2.0);
        assert_eq!(smoothed_recourse_grad(-1.0, -0.5, 1.0).unwrap(), -1.0);
        assert!(smoothed_recourse_grad(0.0, 0.1, 1.0).is_err());
        assert!(smoothed_recourse_grad(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_branches() {
        assert_eq!(expected_clamped_min(1.0, -5.0, 0.0), -2.5);
        assert_eq!(expected_clamped_min(-7.0, -5.0, 0.0), -7.0);
        assert!((expected_clamped_min(-2.0, -5.0, 0.0) + 2.9).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_formula() {
        let p = CournotParams::standard(3, 0.1, vec![1.0, 0.5, 0.0], 0).unwrap();
        assert!((p.lipschitz() - 15.0).abs() < 1e-12);
        assert_eq!(p.sigma(), 1.0);
    }

    #[test]
    fn sweep_hits_target() {
        for l in [1e1, 1e2, 1e4] {
            for merely in [false, true] {
                let p = CournotParams::for_lipschitz(5, l, merely, 3).unwrap();
                assert!((p.lipschitz() - l).abs() < 1e-9 * l);
                assert_eq!(p.sigma() == 0.0, merely);
            }
        }
        assert!(CournotParams::for_lipschitz(20, 10.0, false, 0).is_err());
    }

    #[test]
    fn sample_mean_matches_generic_path() {
        let p = CournotParams::for_lipschitz(4, 50.0, false, 1).unwrap();
        let map = CournotMap::new(p).unwrap();
        let x = [0.3, 0.0, 1.2, 2.0];
        let mut fast = vec![0.0; 4];
        map.sample_mean(&x, 7, &mut iteration_stream(2, 5, Phase::Base), &mut fast);
        let mut generic = vec![0.0; 4];
        let mut rng = iteration_stream(2, 5, Phase::Base);
        let mut s = vec![0.0; 4];
        let mut one = vec![0.0; 4];
        for _ in 0..7 {
            map.draw_scenario(&mut rng, &mut s);
            map.eval_scenario(&x, &s, &mut one);
            generic.iter_mut().zip(&one).for_each(|(g, o)| *g += o / 7.0);
        }
        for (a, b) in fast.iter().zip(&generic) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_h_is_deterministic() {
        let mut p = CournotParams::standard(3, 1.0, vec![1.0; 3], 4).unwrap();
        p.frozen_h = true;
        let spec = make_cournot(&p).unwrap();
        assert_eq!(spec.constants.nu2, 0.0);
        let x = [0.5, 1.0, 0.0];
        let a = spec.sample(&x, &mut iteration_stream(0, 0, Phase::Base)).unwrap();
        assert_eq!(a, spec.eval_mean(&x).unwrap());
    }

    #[test]
    fn complicated_set_is_capped() {
        let mut p = CournotParams::standard(3, 1.0, vec![1.0; 3], 4).unwrap();
        p.complicated_set = true;
        let spec = make_cournot(&p).unwrap();
        let y = spec.resolvent.apply(0.1, &[12.0, 0.0, 0.0]).unwrap();
        assert_eq!(y, vec![10.0, 0.0, 0.0]);
        assert_eq!(spec.domain_bound, Some(10.0));
    }
}
