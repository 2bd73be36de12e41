mod support;

use mono_split::experiments::{make_cournot, CournotParams};
use mono_split::geometry::prox_pwl_1d;
use mono_split::rng::{iteration_stream, Phase};
use proptest::prelude::*;
use rand::Rng;
use support::*;

#[test]
fn capped_simplex_matches_face_enumeration() {
    let c = check_capped_simplex(1000, 1);
    assert!(c.passed(), "{c:?}");
}

#[test]
fn qp_oracle_sanity() {
    assert_eq!(qp_capped_simplex(&[2.0, 2.0], 2.0), vec![1.0, 1.0]);
    assert_eq!(qp_capped_simplex(&[-1.0, 0.5], 2.0), vec![0.0, 0.5]);
}

#[test]
fn recourse_gradient_matches_grid() {
    let c = check_recourse_grad(1000, 2);
    assert!(c.passed(), "{c:?}");
}

#[test]
fn closed_form_matches_monte_carlo() {
    let c = check_closed_form(20, 10_000_000, 3);
    assert!(c.passed(), "{c:?}");
}

#[test]
fn prox_matches_grid() {
    let c = check_prox(1000, 4);
    assert!(c.passed(), "{c:?}");
}

#[test]
fn cournot_mean_map_matches_sampling() {
    let p = make_cournot(&CournotParams::standard(3, 0.7, vec![1.0, 2.0, 0.5], 9).unwrap()).unwrap();
    for (i, x) in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [-4.0, 3.0, -1.5]].iter().enumerate() {
        let mean = p.eval_mean(x).unwrap();
        let mut rng = iteration_stream(5, i as u64, Phase::Base);
        let mut m: Vec<Moments> = (0..3).map(|_| Moments::default()).collect();
        for _ in 0..200_000 {
            let s = p.sample(x, &mut rng).unwrap();
            m.iter_mut().zip(&s).for_each(|(acc, v)| acc.push(*v));
        }
        for j in 0..3 {
            let se = m[j].std_error();
            assert!((m[j].mean() - mean[j]).abs() <= 4.0 * se + 1e-12, "x={x:?} j={j}");
        }
    }
}

proptest! {
    #[test]
    fn prox_output_satisfies_optimality(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let f = random_pwl(&mut r);
        let iv = random_interval(&mut r);
        let gamma = 10f64.powf(r.random_range(-2.0..1.0));
        let v = r.random_range(-10.0..10.0);
        let t = prox_pwl_1d(&f, gamma, &iv, v).unwrap();
        // 0 ∈ (t − v)/γ + ∂f(t) + N(t)
        let (g_lo, g_hi) = f.subdifferential(t);
        let tol = 1e-9 * (1.0 + v.abs() / gamma);
        let base = (t - v) / gamma;
        let at_lo = iv.lo.is_some_and(|l| t <= l);
        let at_hi = iv.hi.is_some_and(|h| t >= h);
        let lo = if at_lo { f64::NEG_INFINITY } else { base + g_lo };
        let hi = if at_hi { f64::INFINITY } else { base + g_hi };
        prop_assert!(lo <= tol && hi >= -tol, "t={t} lo={lo} hi={hi}");
    }
}
