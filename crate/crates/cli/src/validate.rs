//! Sampled checks of the standing assumptions on an instance.

use std::path::Path;

use mono_split::experiments::Instance;
use mono_split::linalg::{dist, dot, norm, sub};
use mono_split::metrics::residual;
use mono_split::oracles::ProblemSpec;
use mono_split::rng::{iteration_stream, probe_stream, Phase, Stream};
use rand::Rng;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        format!("{} {:<28} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub pairs: usize,
    pub noise_draws: usize,
    pub power_steps: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { pairs: 1000, noise_draws: 100_000, power_steps: 200, seed: 0 }
    }
}

const PROBE_RADIUS: f64 = 10.0;
const REL_TOL: f64 = 1e-10;

fn random_domain_point(problem: &ProblemSpec, rng: &mut Stream) -> CliResult<Vec<f64>> {
    let n = problem.dim();
    let (lo, hi) = problem
        .resolvent
        .domain_box()
        .unwrap_or_else(|| (vec![-PROBE_RADIUS; n], vec![PROBE_RADIUS; n]));
    let u: Vec<f64> = (0..n).map(|i| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()).collect();
    Ok(problem.resolvent.project_domain(&u)?)
}

fn pairs(problem: &ProblemSpec, opts: &SuiteOptions) -> CliResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut rng = probe_stream(opts.seed);
    (0..opts.pairs)
        .map(|_| Ok((random_domain_point(problem, &mut rng)?, random_domain_point(problem, &mut rng)?)))
        .collect()
}

/// Largest observed `‖A(x) − A(y)‖ / ‖x − y‖` over random pairs and a
/// power-type iteration on the difference map, which climbs toward the
/// dominant growth direction.
pub fn lipschitz_probe(problem: &ProblemSpec, pairs: &[(Vec<f64>, Vec<f64>)], steps: usize) -> CliResult<f64> {
    let mut best = 0.0f64;
    for (x, y) in pairs {
        let d = dist(x, y);
        if d > 0.0 {
            best = best.max(dist(&problem.eval_mean(x)?, &problem.eval_mean(y)?) / d);
        }
    }
    if let Some((x, y)) = pairs.first() {
        let ax = problem.eval_mean(x)?;
        let mut dir = sub(y, x);
        for _ in 0..steps {
            let nd = norm(&dir);
            if nd == 0.0 {
                break;
            }
            let h = 1e-3 * PROBE_RADIUS;
            let step: Vec<f64> = dir.iter().map(|v| v * h / nd).collect();
            let moved: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let diff = sub(&problem.eval_mean(&moved)?, &ax);
            best = best.max(norm(&diff) / h);
            dir = diff;
        }
    }
    Ok(best)
}

pub fn run_suite(problem: &ProblemSpec, opts: &SuiteOptions) -> CliResult<Vec<Check>> {
    let c = problem.constants;
    let pairs = pairs(problem, opts)?;
    let mut checks = Vec::new();

    let mut worst = f64::INFINITY;
    for (x, y) in &pairs {
        let d = sub(x, y);
        let dd = dot(&d, &d);
        if dd == 0.0 {
            continue;
        }
        let pairing = dot(&sub(&problem.eval_mean(x)?, &problem.eval_mean(y)?), &d);
        worst = worst.min(pairing / dd);
    }
    checks.push(Check {
        name: "monotonicity",
        passed: worst >= -REL_TOL,
        detail: format!("min (A(x)-A(y))'(x-y)/|x-y|^2 = {worst:.3e}"),
    });
    checks.push(Check {
        name: "strong-monotonicity-modulus",
        passed: worst >= c.sigma * (1.0 - REL_TOL) - REL_TOL,
        detail: format!("observed {worst:.6e} vs sigma {:.6e}", c.sigma),
    });

    let lip = lipschitz_probe(problem, &pairs, opts.power_steps)?;
    checks.push(Check {
        name: "lipschitz",
        passed: lip <= c.lipschitz * (1.0 + 1e-9),
        detail: format!("observed {lip:.6e} vs L {:.6e}", c.lipschitz),
    });

    checks.extend(noise_checks(problem, &pairs, opts)?);

    let mut worst_expansion = 0.0f64;
    let mut rng = probe_stream(opts.seed.wrapping_add(1));
    for (x, y) in &pairs {
        let gamma = 10f64.powf(rng.random_range(-3.0..1.0));
        let scale = 2.0 * PROBE_RADIUS;
        let u: Vec<f64> = x.iter().map(|v| v + scale * (rng.random::<f64>() - 0.5)).collect();
        let v: Vec<f64> = y.iter().map(|w| w + scale * (rng.random::<f64>() - 0.5)).collect();
        let d = dist(&u, &v);
        if d > 0.0 {
            let ru = problem.resolvent.apply(gamma, &u)?;
            let rv = problem.resolvent.apply(gamma, &v)?;
            worst_expansion = worst_expansion.max(dist(&ru, &rv) / d);
        }
    }
    checks.push(Check {
        name: "resolvent-nonexpansive",
        passed: worst_expansion <= 1.0 + 1e-12,
        detail: format!("max |R(u)-R(v)|/|u-v| = {worst_expansion:.12}"),
    });

    checks.push(match &problem.known_solution {
        Some(xs) => {
            let r = residual(problem, xs, problem.default_gamma())?;
            Check { name: "residual-zero-at-solution", passed: r <= 1e-8, detail: format!("r(x*) = {r:.3e}") }
        }
        None => Check { name: "residual-zero-at-solution", passed: true, detail: "no stored solution, skipped".into() },
    });
    Ok(checks)
}

/// Second moment of `w = A(x, ω) − A(x)` against `ν₁²‖x‖² + ν₂²`, and the
/// sample mean against the closed-form mean, at three probe points.
fn noise_checks(problem: &ProblemSpec, pairs: &[(Vec<f64>, Vec<f64>)], opts: &SuiteOptions) -> CliResult<Vec<Check>> {
    let c = problem.constants;
    let n = opts.noise_draws.max(2);
    let mut moment_ok = true;
    let mut mean_ok = true;
    let mut moment_detail = String::new();
    let mut mean_detail = String::new();
    for (idx, (x, _)) in pairs.iter().take(3).enumerate() {
        let a = problem.eval_mean(x)?;
        let mut rng = iteration_stream(opts.seed, idx as u64, Phase::Base);
        let dim = x.len();
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for _ in 0..n {
            let s = problem.sample(x, &mut rng)?;
            let w = sub(&s, &a);
            let w2 = dot(&w, &w);
            s1 += w2;
            s2 += w2 * w2;
            for i in 0..dim {
                sum[i] += w[i];
                sq[i] += w[i] * w[i];
            }
        }
        let nf = n as f64;
        let m = s1 / nf;
        let se = ((s2 / nf - m * m).max(0.0) / nf).sqrt();
        let bound = c.nu1 * c.nu1 * dot(x, x) + c.nu2 * c.nu2;
        if m > bound + 5.0 * se + 1e-12 {
            moment_ok = false;
        }
        moment_detail += &format!("[E|w|^2 {m:.3e} bound {bound:.3e} se {se:.1e}] ");
        if problem.bias.is_none() {
            for i in 0..dim {
                let mean = sum[i] / nf;
                let sd = (sq[i] / nf - mean * mean).max(0.0).sqrt();
                if mean.abs() > 5.0 * sd / nf.sqrt() + 1e-12 {
                    mean_ok = false;
                }
            }
        }
    }
    mean_detail += if problem.bias.is_some() { "biased oracle, skipped" } else { "sample mean within 5 standard errors" };
    Ok(vec![
        Check { name: "noise-second-moment", passed: moment_ok, detail: moment_detail.trim_end().to_string() },
        Check { name: "oracle-unbiased", passed: mean_ok, detail: mean_detail },
    ])
}

pub fn cmd_validate(instance_path: &Path, opts: &SuiteOptions) -> CliResult<Vec<Check>> {
    let text = std::fs::read_to_string(instance_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", instance_path.display())))?;
    let problem = Instance::from_json(&text)
        .and_then(|i| i.build())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let checks = run_suite(&problem, opts)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.to_string()).collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::PropertyFailure(failed))
    }
}
