//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the routine it checks.
#![allow(dead_code)]

use mono_split::experiments::{expected_clamped_min, make_synthetic, smoothed_recourse_grad, SyntheticParams};
use mono_split::geometry::{project, prox_pwl_1d, FeasibleSet, Interval, PiecewiseLinearProx1D};
use mono_split::metrics::gap_estimate;
use mono_split::oracles::ProblemSpec;
use mono_split::rng::{iteration_stream, probe_stream, Phase, Stream};
use mono_split::schedules::{BatchSchedule, StepRule};
use mono_split::solvers::{deterministic_mfbs_step, run, vr_smfbs_step, InitialPoint, Scheme, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimizer of `‖y − x‖²` over `{y ≥ 0, Σy ≤ cap}` by enumerating every
/// face: a set of zero coordinates, with the cap active or not.
pub fn qp_capped_simplex(x: &[f64], cap: f64) -> Vec<f64> {
    let n = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        for cap_active in [false, true] {
            let mut y = vec![0.0; n];
            let shift = if cap_active {
                if free.is_empty() {
                    continue;
                }
                (free.iter().map(|&i| x[i]).sum::<f64>() - cap) / free.len() as f64
            } else {
                0.0
            };
            for &i in &free {
                y[i] = x[i] - shift;
            }
            let feasible = y.iter().all(|&v| v >= -1e-12) && y.iter().sum::<f64>() <= cap + 1e-12;
            if !feasible {
                continue;
            }
            let obj: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, y));
            }
        }
    }
    best.expect("the origin is always feasible").1
}

/// Minimizer of `f` on `[lo, hi]` by repeatedly refining a uniform grid
/// around the best node. Exact enough for strictly unimodal `f`.
pub fn grid_argmin(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const NODES: usize = 2001;
    let mut best = lo;
    for _ in 0..10 {
        let h = (hi - lo) / (NODES - 1) as f64;
        let mut idx = 0;
        let mut val = f64::INFINITY;
        for i in 0..NODES {
            let v = f(lo + h * i as f64);
            if v < val {
                val = v;
                idx = i;
            }
        }
        best = lo + h * idx as f64;
        let (nlo, nhi) = (best - 2.0 * h, best + 2.0 * h);
        lo = nlo.max(lo);
        hi = nhi.min(hi);
    }
    best
}

/// Root of an increasing `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) <= 0.0 && f(hi) >= 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares line through `(x, y)`: `(slope, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

/// Running mean and variance (Welford); constant input gives the constant back exactly.
#[derive(Default)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Outcome of one oracle-equivalence family: worst discrepancy, tolerance, case count.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: &'static str,
    pub worst: f64,
    pub tol: f64,
    pub cases: usize,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

pub fn check_capped_simplex(cases: usize, seed: u64) -> OracleCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = r.random_range(1..=4);
        let cap = r.random_range(0.1..5.0);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let set = FeasibleSet::capped_simplex(n, cap).unwrap();
        let p = project(&set, &x).unwrap();
        let q = qp_capped_simplex(&x, cap);
        worst = worst.max(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    OracleCheck { name: "capped-simplex projection vs QP", worst, tol: 1e-6, cases }
}

pub fn check_recourse_grad(cases: usize, seed: u64) -> OracleCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let t = r.random_range(-10.0..10.0);
        let h = r.random_range(-5.0..0.0);
        let eps = r.random_range(0.1..2.0);
        let got = smoothed_recourse_grad(t, h, eps).unwrap();
        let lo = (t / eps).min(h) - 5.0;
        let want = grid_argmin(|l| -(t * l - 0.5 * eps * l * l), lo, h);
        worst = worst.max((got - want).abs());
    }
    OracleCheck { name: "smoothed recourse gradient vs grid", worst, tol: 1e-5, cases }
}

/// Discrepancy of the closed form in standard errors of the Monte Carlo mean.
pub fn check_closed_form(cases: usize, draws: usize, seed: u64) -> OracleCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for c in 0..cases {
        let a = r.random_range(-8.0..-1.0);
        let b = r.random_range(a + 0.5..1.0);
        let t = r.random_range(a - 2.0..b + 2.0);
        let mut s: Stream = iteration_stream(seed, c as u64, Phase::Base);
        let mut m = Moments::default();
        for _ in 0..draws {
            let h = a + (b - a) * s.random::<f64>();
            m.push(t.min(h));
        }
        let diff = (expected_clamped_min(t, a, b) - m.mean()).abs();
        let se = m.std_error();
        let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    OracleCheck { name: "closed-form expectation vs Monte Carlo (SE)", worst, tol: 4.0, cases }
}

pub fn random_pwl(r: &mut ChaCha8Rng) -> PiecewiseLinearProx1D {
    let s1 = r.random_range(-3.0..3.0);
    let s2 = s1 + r.random_range(0.0..4.0);
    PiecewiseLinearProx1D::new(s1, s2, r.random_range(-3.0..3.0), r.random_range(0.0..2.0)).unwrap()
}

pub fn random_interval(r: &mut ChaCha8Rng) -> Interval {
    let lo = r.random_range(-5.0..1.0);
    let hi = lo + r.random_range(0.1..6.0);
    match r.random_range(0..4) {
        0 => Interval::new(None, None).unwrap(),
        1 => Interval::new(Some(lo), None).unwrap(),
        2 => Interval::new(None, Some(hi)).unwrap(),
        _ => Interval::bounded(lo, hi).unwrap(),
    }
}

pub fn check_prox(cases: usize, seed: u64) -> OracleCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let f = random_pwl(&mut r);
        let iv = random_interval(&mut r);
        let gamma = r.random_range(0.01..5.0);
        let v = r.random_range(-10.0..10.0);
        let got = prox_pwl_1d(&f, gamma, &iv, v).unwrap();
        let reach = gamma * f.scale * f.slope_left.abs().max(f.slope_right.abs()) + 1.0;
        let outside = (iv.lo.map_or(0.0, |l| l - v)).max(iv.hi.map_or(0.0, |h| v - h)).max(0.0);
        let window = reach + outside;
        let lo = iv.lo.map_or(v - window, |l| l.max(v - window));
        let hi = iv.hi.map_or(v + window, |h| h.min(v + window));
        let want = grid_argmin(|t| (t - v) * (t - v) / (2.0 * gamma) + f.value(t), lo, hi);
        worst = worst.max((got - want).abs());
    }
    OracleCheck { name: "1-D prox vs grid", worst, tol: 1e-5, cases }
}

/// Largest gap between a noiseless vr-SMFBS run with `N_k = 1` and
/// deterministic splitting, over all iterates of all instances.
pub fn zero_noise_deviation(problems: &[ProblemSpec], iterations: usize) -> f64 {
    let mut worst = 0.0f64;
    for (s, p) in problems.iter().enumerate() {
        let p = p.noiseless();
        let gamma = p.default_gamma();
        let map = p.map().clone();
        let mean = |x: &[f64], o: &mut [f64]| map.mean(x, o);
        let mut r = rng(s as u64);
        let x0: Vec<f64> = (0..p.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut x = p.resolvent.project_domain(&x0).unwrap();
        let mut y = x.clone();
        for k in 0..iterations as u64 {
            let mut base = iteration_stream(s as u64, k, Phase::Base);
            let mut half = iteration_stream(s as u64, k, Phase::Half);
            let st = vr_smfbs_step(&p, &x, gamma, 1, &mut base, &mut half).unwrap();
            let (next, _) = deterministic_mfbs_step(&mean, &p.resolvent, gamma, &y).unwrap();
            x = st.x_next;
            y = next;
            worst = worst.max(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    worst
}

/// Mean squared error per iteration over `trials` seeds, then a line through
/// `log MSE`: returns `(slope, R²)`.
pub fn linear_rate_fit(trials: usize, iterations: usize) -> (f64, f64) {
    let p = make_synthetic(&SyntheticParams::new(10, 1.0, 4.0, 0.0, 1.0, 11)).unwrap();
    let xs = p.known_solution.clone().unwrap();
    let schedule = BatchSchedule::Geometric { n0: 1, rho: 0.9 };
    let gamma = p.default_gamma();
    let mut mse = vec![0.0; iterations];
    for t in 0..trials as u64 {
        let mut x = vec![0.0; p.dim()];
        for (k, slot) in mse.iter_mut().enumerate() {
            let n_k = schedule.batch_size(k as u64);
            let mut base = iteration_stream(t, k as u64, Phase::Base);
            let mut half = iteration_stream(t, k as u64, Phase::Half);
            x = vr_smfbs_step(&p, &x, gamma, n_k, &mut base, &mut half).unwrap().x_next;
            *slot += x.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / trials as f64;
        }
    }
    let ks: Vec<f64> = (1..=iterations).map(|k| k as f64).collect();
    let logs: Vec<f64> = mse.iter().map(|m| m.ln()).collect();
    linear_fit(&ks, &logs)
}

pub fn gap_instance() -> ProblemSpec {
    let mut params = SyntheticParams::new(2, 0.0, 1.0, 0.0, 0.5, 5);
    params.skew_only = true;
    params.box_half_width = Some(1.0);
    make_synthetic(&params).unwrap()
}

/// `K · mean Ĝ(x̄_K)` for each `K`, vr-SMFBS with `N_k = ⌊k^1.01⌋`.
pub fn gap_profile(ks: &[usize], trials: usize) -> Vec<(usize, f64)> {
    let p = gap_instance();
    ks.iter()
        .map(|&k| {
            let mut total = 0.0;
            for t in 0..trials as u64 {
                let mut cfg = SolverConfig::new(
                    Scheme::VrSmfbs,
                    StepRule::Constant { gamma: p.default_gamma() },
                    BatchSchedule::Polynomial { a: 1.01 },
                    usize::MAX / 4,
                    t,
                );
                cfg.max_iterations = Some(k);
                cfg.record_every = Some(usize::MAX);
                cfg.initial_point = InitialPoint::Given { x: vec![0.9, -0.9] };
                let trace = run(&p, &cfg).unwrap();
                total += gap_estimate(&p, &trace.averaged_iterate, 2000, &mut probe_stream(t)).unwrap().value;
            }
            (k, k as f64 * total / trials as f64)
        })
        .collect()
}
