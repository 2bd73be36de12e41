//! Stochastic multi-leader multi-follower game with the follower eliminated.
//!
//! Leader `i` chooses `x_i ∈ X_i` with cost `c_i(t) = ½k_i t² + c_i t`, facing
//! the inverse demand `d(ω) − r(ω)X`. Follower `i` responds with
//! `y_i = max{b_i(x_i)/q_i, l_i(x_i)}`, which adds the convex piecewise-linear
//! `h_i(t) = a_i·max{b_i(t)/q_i, l_i(t)}` to the leader's cost. The
//! single-valued part is `A_i(x) = k_i x_i + c_i + E[r](X + x_i) − E[d]` and
//! `B = ∂h + N_X` is handled by an exact separable prox.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Interval, PiecewiseLinearProx1D, Resolvent, ScalarProx};
use crate::oracles::{ProblemConstants, ProblemSpec, StochasticMap};
use crate::rng::Stream;
use crate::solvers::{run_deterministic_mfbs, DEFAULT_MAX_MFBS_ITERS, DEFAULT_MFBS_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalarDist {
    Point { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ScalarDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarDist::Point { value } if !value.is_finite() => invalid("point mass must be finite"),
            ScalarDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                invalid(format!("uniform law needs lo < hi, got [{lo}, {hi}]"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarDist::Point { value } => value,
            ScalarDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ScalarDist::Point { .. } => 0.0,
            ScalarDist::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }

    /// Always consumes one uniform so the stream layout does not depend on
    /// the law.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let u: f64 = rng.random();
        match *self {
            ScalarDist::Point { value } => value,
            ScalarDist::Uniform { lo, hi } => lo + (hi - lo) * u,
        }
    }

    fn infimum(&self) -> f64 {
        match *self {
            ScalarDist::Point { value } => value,
            ScalarDist::Uniform { lo, .. } => lo,
        }
    }
}

/// Follower data: `b(t) = b_slope·t + b_icpt`, `l(t) = l_slope·t + l_icpt`,
/// `Q = q > 0`, leader weight `a ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Follower {
    pub q: f64,
    pub b_slope: f64,
    pub b_icpt: f64,
    pub l_slope: f64,
    pub l_icpt: f64,
    pub a: f64,
}

impl Follower {
    pub fn penalty(&self) -> Result<PiecewiseLinearProx1D> {
        if !(self.q.is_finite() && self.q > 0.0) {
            return invalid(format!("follower q must be positive, got {}", self.q));
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return invalid(format!("negative follower weight {} makes h nonconvex", self.a));
        }
        PiecewiseLinearProx1D::from_affine_pair(
            self.b_slope / self.q,
            self.b_icpt / self.q,
            self.l_slope,
            self.l_icpt,
            self.a,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlfParams {
    pub leaders: usize,
    pub cost_quad: Vec<f64>,
    pub cost_lin: Vec<f64>,
    pub r: ScalarDist,
    pub d: ScalarDist,
    pub followers: Vec<Follower>,
    pub intervals: Vec<Interval>,
    #[serde(default)]
    pub solve_reference: bool,
    pub seed: u64,
}

pub const MAX_LEADERS: usize = 100_000;

impl MlfParams {
    /// Leaders with `k_i ~ U(0.5, 1.5)`, `c_i ~ U(0, 1)`, `r ~ U(0.5, 1.5)`,
    /// `d ~ U(8, 12)`, `X_i = [0, 10]` and followers with
    /// `y_i = max{(t − 1)/q_i, 0}`, `q_i ~ U(1, 2)`, `a_i ~ U(0, 1)`.
    pub fn random(leaders: usize, seed: u64) -> Result<Self> {
        if leaders == 0 {
            return invalid("need at least one leader");
        }
        let mut rng = crate::rng::instance_stream(seed);
        let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let mut cost_quad = Vec::with_capacity(leaders);
        let mut cost_lin = Vec::with_capacity(leaders);
        let mut followers = Vec::with_capacity(leaders);
        for _ in 0..leaders {
            cost_quad.push(u(0.5, 1.5));
            cost_lin.push(u(0.0, 1.0));
            followers.push(Follower {
                q: u(1.0, 2.0),
                b_slope: 1.0,
                b_icpt: -1.0,
                l_slope: 0.0,
                l_icpt: 0.0,
                a: u(0.0, 1.0),
            });
        }
        let p = MlfParams {
            leaders,
            cost_quad,
            cost_lin,
            r: ScalarDist::Uniform { lo: 0.5, hi: 1.5 },
            d: ScalarDist::Uniform { lo: 8.0, hi: 12.0 },
            followers,
            intervals: vec![Interval::bounded(0.0, 10.0)?; leaders],
            solve_reference: false,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.leaders;
        if n == 0 || n > MAX_LEADERS {
            return invalid(format!("leaders must lie in 1..={MAX_LEADERS}, got {n}"));
        }
        if [self.cost_quad.len(), self.cost_lin.len(), self.followers.len(), self.intervals.len()]
            .iter()
            .any(|&l| l != n)
        {
            return invalid("per-leader vectors must have one entry per leader");
        }
        if self.cost_quad.iter().any(|k| !(k.is_finite() && *k >= 0.0)) || self.cost_lin.iter().any(|c| !c.is_finite()) {
            return invalid("cost curvatures must be nonnegative and finite");
        }
        self.r.validate()?;
        self.d.validate()?;
        if !(self.r.infimum() > 0.0) {
            return invalid("price slope r(ω) must be positive");
        }
        for f in &self.followers {
            f.penalty()?;
        }
        self.intervals.iter().try_for_each(|iv| iv.validate())
    }

    fn mean_r(&self) -> f64 {
        self.r.mean()
    }

    /// `‖diag(k) + E[r](I + 𝟏𝟏ᵀ)‖₂ ≤ max k + E[r](N + 1)`.
    pub fn lipschitz(&self) -> f64 {
        self.cost_quad.iter().cloned().fold(0.0, f64::max) + self.mean_r() * (self.leaders as f64 + 1.0)
    }

    pub fn sigma(&self) -> f64 {
        self.cost_quad.iter().cloned().fold(f64::INFINITY, f64::min) + self.mean_r()
    }

    /// With `r, d` independent, `E‖w‖² = Var(r)‖(I + 𝟏𝟏ᵀ)x‖² + N·Var(d)`.
    pub fn noise(&self) -> (f64, f64) {
        let n = self.leaders as f64;
        ((self.r.variance()).sqrt() * (n + 1.0), (n * self.d.variance()).sqrt())
    }
}

#[derive(Clone)]
pub struct MlfMap {
    params: MlfParams,
}

impl fmt::Debug for MlfMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MlfMap").field("leaders", &self.params.leaders).finish()
    }
}

impl MlfMap {
    fn eval_with(&self, x: &[f64], r: f64, d: f64, out: &mut [f64]) {
        let p = &self.params;
        let total: f64 = x.iter().sum();
        for i in 0..x.len() {
            out[i] = p.cost_quad[i] * x[i] + p.cost_lin[i] + r * (total + x[i]) - d;
        }
    }
}

impl StochasticMap for MlfMap {
    fn dim(&self) -> usize {
        self.params.leaders
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        self.eval_with(x, self.params.r.mean(), self.params.d.mean(), out)
    }

    fn scenario_len(&self) -> usize {
        2
    }

    fn draw_scenario(&self, rng: &mut Stream, scenario: &mut [f64]) {
        scenario[0] = self.params.r.sample(rng);
        scenario[1] = self.params.d.sample(rng);
    }

    fn eval_scenario(&self, x: &[f64], scenario: &[f64], out: &mut [f64]) {
        self.eval_with(x, scenario[0], scenario[1], out)
    }

    /// The map is affine in `(r, d)`, so the batch mean only needs the
    /// sample means of `r` and `d`.
    fn sample_mean(&self, x: &[f64], n: usize, rng: &mut Stream, out: &mut [f64]) {
        let (mut rs, mut ds) = (0.0, 0.0);
        for _ in 0..n {
            rs += self.params.r.sample(rng);
            ds += self.params.d.sample(rng);
        }
        self.eval_with(x, rs / n as f64, ds / n as f64, out)
    }
}

pub fn make_mlf_game(params: &MlfParams) -> Result<ProblemSpec> {
    params.validate()?;
    let coords = params
        .followers
        .iter()
        .zip(&params.intervals)
        .map(|(f, iv)| Ok(ScalarProx { f: f.penalty()?, interval: *iv }))
        .collect::<Result<Vec<_>>>()?;
    let resolvent = Resolvent::Separable { coords };
    let (nu1, nu2) = params.noise();
    let constants = ProblemConstants { lipschitz: params.lipschitz(), sigma: params.sigma(), nu1, nu2 };
    let mut spec = ProblemSpec::new("mlf", Arc::new(MlfMap { params: params.clone() }), resolvent, constants)?;
    if let Some((lo, hi)) = spec.resolvent.domain_box() {
        let bound = lo.iter().zip(&hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt();
        if bound > 0.0 {
            spec = spec.with_domain_bound(bound)?;
        }
    }
    if params.solve_reference {
        let m = spec.map().clone();
        let x0 = spec.resolvent.project_domain(&vec![0.0; params.leaders])?;
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
