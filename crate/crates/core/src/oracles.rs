//! The stochastic generalized equation `0 ∈ E[A(x, ω)] + B(x)` and its
//! sampling oracle.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::Resolvent;
use crate::rng::Stream;

/// Expectation-valued single-valued operator `A(x) = E[A(x, ω)]`.
///
/// A draw `A(x, ω)` is split into drawing the scenario `ω` (a flat vector of
/// `scenario_len` reals) and evaluating the operator at it, so that the same
/// scenarios can be frozen into a sample-average map.
pub trait StochasticMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Closed-form expectation.
    fn mean(&self, x: &[f64], out: &mut [f64]);

    fn scenario_len(&self) -> usize;

    fn draw_scenario(&self, rng: &mut Stream, scenario: &mut [f64]);

    fn eval_scenario(&self, x: &[f64], scenario: &[f64], out: &mut [f64]);

    /// Mean of `n` fresh draws at `x`. Implementations may override this
    /// with a cheaper formula but must consume the stream in the same order
    /// as `n` successive `draw_scenario` calls.
    fn sample_mean(&self, x: &[f64], n: usize, rng: &mut Stream, out: &mut [f64]) {
        let mut scenario = vec![0.0; self.scenario_len()];
        let mut one = vec![0.0; self.dim()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..n {
            self.draw_scenario(rng, &mut scenario);
            self.eval_scenario(x, &scenario, &mut one);
            out.iter_mut().zip(&one).for_each(|(a, b)| *a += b);
        }
        let inv = n as f64;
        out.iter_mut().for_each(|v| *v /= inv);
    }
}

/// State-dependent Gaussian noise `w = ν₁‖x‖ g₁ + ν₂ g₂`, with `g₁, g₂`
/// independent `N(0, I/n)`, so that `E[‖w‖² | x] = ν₁²‖x‖² + ν₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AdditiveNoise {
    pub nu1: f64,
    pub nu2: f64,
}

impl AdditiveNoise {
    pub fn scenario_len(&self, dim: usize) -> usize {
        2 * dim
    }

    pub fn draw(&self, rng: &mut Stream, scenario: &mut [f64]) {
        let scale = 1.0 / ((scenario.len() / 2) as f64).sqrt();
        for v in scenario.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g * scale;
        }
    }

    pub fn apply(&self, x: &[f64], scenario: &[f64], out: &mut [f64]) {
        let n = out.len();
        let state = self.nu1 * crate::linalg::norm(x);
        for i in 0..n {
            out[i] += state * scenario[i] + self.nu2 * scenario[n + i];
        }
    }
}

/// Known constants of the problem (Lipschitz modulus of `A`, strong
/// monotonicity modulus, noise amplitudes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub lipschitz: f64,
    /// 0 for merely monotone problems.
    pub sigma: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return invalid(format!("Lipschitz constant must be positive, got {}", self.lipschitz));
        }
        for (name, v) in [("sigma", self.sigma), ("nu1", self.nu1), ("nu2", self.nu2)] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be a nonnegative finite number, got {v}"));
            }
        }
        Ok(())
    }
}

/// A fully specified stochastic generalized equation.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    map: Arc<dyn StochasticMap>,
    pub resolvent: Resolvent,
    pub constants: ProblemConstants,
    pub known_solution: Option<Vec<f64>>,
    /// Bound `D_T` on the norm of points of `dom T`, when it is bounded.
    pub domain_bound: Option<f64>,
    /// Deterministic additive oracle bias (off by default).
    pub bias: Option<Vec<f64>>,
    noiseless: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("constants", &self.constants)
            .field("noiseless", &self.noiseless)
            .finish_non_exhaustive()
    }
}

/// Mini-batch average of oracle draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchEstimate {
    pub value: Vec<f64>,
    pub batch_size: usize,
    pub evaluations_consumed: usize,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        map: Arc<dyn StochasticMap>,
        resolvent: Resolvent,
        constants: ProblemConstants,
    ) -> Result<Self> {
        check_dim(map.dim(), resolvent.dim())?;
        resolvent.validate()?;
        constants.validate()?;
        Ok(ProblemSpec {
            name: name.into(),
            map,
            resolvent,
            constants,
            known_solution: None,
            domain_bound: None,
            bias: None,
            noiseless: false,
        })
    }

    pub fn with_known_solution(mut self, x: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        self.known_solution = Some(x);
        Ok(self)
    }

    pub fn with_domain_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return invalid(format!("domain bound must be positive, got {bound}"));
        }
        self.domain_bound = Some(bound);
        Ok(self)
    }

    /// Biased-oracle mode: every draw is shifted by `bias`; `nu2` is
    /// enlarged so the second-moment bound still covers the bias.
    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), bias.len())?;
        let b = crate::linalg::norm(&bias);
        self.constants.nu2 = (self.constants.nu2.powi(2) + b * b).sqrt();
        self.bias = Some(bias);
        Ok(self)
    }

    /// Same problem with a degenerate oracle: every draw equals the mean.
    pub fn noiseless(&self) -> Self {
        let mut p = self.clone();
        p.noiseless = true;
        p.bias = None;
        p.constants.nu1 = 0.0;
        p.constants.nu2 = 0.0;
        p
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn map(&self) -> &Arc<dyn StochasticMap> {
        &self.map
    }

    /// Practical default step `1/(4L)`, also the default residual step.
    pub fn default_gamma(&self) -> f64 {
        1.0 / (4.0 * self.constants.lipschitz)
    }

    pub fn eval_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.map.mean(x, &mut out);
        Ok(out)
    }

    pub(crate) fn mean_into(&self, x: &[f64], out: &mut [f64]) {
        self.map.mean(x, out);
    }

    /// One draw `A(x, ω)`.
    pub fn sample(&self, x: &[f64], rng: &mut Stream) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        if self.noiseless {
            self.map.mean(x, &mut out);
        } else {
            let mut scenario = vec![0.0; self.map.scenario_len()];
            self.map.draw_scenario(rng, &mut scenario);
            self.map.eval_scenario(x, &scenario, &mut out);
        }
        self.add_bias(&mut out);
        Ok(out)
    }

    /// Average of `n` independent draws at `x`.
    pub fn minibatch(&self, x: &[f64], n: usize, rng: &mut Stream) -> Result<MinibatchEstimate> {
        check_dim(self.dim(), x.len())?;
        if n == 0 {
            return invalid("mini-batch size must be at least 1");
        }
        let mut value = vec![0.0; x.len()];
        self.minibatch_into(x, n, rng, &mut value);
        Ok(MinibatchEstimate {
            value,
            batch_size: n,
            evaluations_consumed: n,
        })
    }

    pub(crate) fn minibatch_into(&self, x: &[f64], n: usize, rng: &mut Stream, out: &mut [f64]) {
        if self.noiseless {
            self.map.mean(x, out);
        } else {
            self.map.sample_mean(x, n, rng, out);
        }
        self.add_bias(out);
    }

    fn add_bias(&self, out: &mut [f64]) {
        if let Some(b) = &self.bias {
            out.iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
        }
    }

    /// Residual check of the stored solution, used when loading instances.
    pub fn check_known_solution(&self, tol: f64) -> Result<()> {
        if let Some(xs) = &self.known_solution {
            let r = crate::metrics::residual(self, xs, self.default_gamma())?;
            if r > tol {
                return Err(Error::InvalidInput(format!(
                    "stored solution has residual {r:e} > {tol:e}"
                )));
            }
        }
        Ok(())
    }
}

/// A map that is the same for every scenario; used for deterministic
/// problems and for tests.
pub struct DeterministicMap<F> {
    dim: usize,
    f: F,
}

impl<F> DeterministicMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        DeterministicMap { dim, f }
    }
}

impl<F> fmt::Debug for DeterministicMap<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeterministicMap").field("dim", &self.dim).finish()
    }
}

impl<F> StochasticMap for DeterministicMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn scenario_len(&self) -> usize {
        0
    }

    fn draw_scenario(&self, _rng: &mut Stream, _scenario: &mut [f64]) {}

    fn eval_scenario(&self, x: &[f64], _scenario: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// A deterministic map plus [`AdditiveNoise`].
pub struct NoisyMap<F> {
    inner: DeterministicMap<F>,
    pub noise: AdditiveNoise,
}

impl<F> NoisyMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, noise: AdditiveNoise, f: F) -> Self {
        NoisyMap {
            inner: DeterministicMap::new(dim, f),
            noise,
        }
    }
}

impl<F> fmt::Debug for NoisyMap<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoisyMap")
            .field("dim", &self.inner.dim)
            .field("noise", &self.noise)
            .finish()
    }
}

impl<F> StochasticMap for NoisyMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        (self.inner.f)(x, out)
    }

    fn scenario_len(&self) -> usize {
        self.noise.scenario_len(self.inner.dim)
    }

    fn draw_scenario(&self, rng: &mut Stream, scenario: &mut [f64]) {
        self.noise.draw(rng, scenario)
    }

    fn eval_scenario(&self, x: &[f64], scenario: &[f64], out: &mut [f64]) {
        (self.inner.f)(x, out);
        self.noise.apply(x, scenario, out);
    }
}
