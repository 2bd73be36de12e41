//! Projections and resolvents: the backward (implicit) half of every splitting step.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};

/// Closed convex feasible set. Construct through the checked constructors or
/// call [`FeasibleSet::validate`] after deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    WholeSpace { dim: usize },
    NonnegOrthant { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x >= 0, sum(x) <= cap}`
    CappedSimplex { dim: usize, cap: f64 },
}

impl FeasibleSet {
    pub fn whole_space(dim: usize) -> Result<Self> {
        let set = FeasibleSet::WholeSpace { dim };
        set.validate()?;
        Ok(set)
    }

    pub fn nonneg_orthant(dim: usize) -> Result<Self> {
        let set = FeasibleSet::NonnegOrthant { dim };
        set.validate()?;
        Ok(set)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = FeasibleSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn capped_simplex(dim: usize, cap: f64) -> Result<Self> {
        let set = FeasibleSet::CappedSimplex { dim, cap };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return invalid("feasible set must have positive dimension");
        }
        match self {
            FeasibleSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return invalid("box bounds have different lengths");
                }
                for (l, u) in lower.iter().zip(upper) {
                    if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return invalid(format!("box requires lower <= upper, got [{l}, {u}]"));
                    }
                }
            }
            FeasibleSet::CappedSimplex { cap, .. } => {
                if !(cap.is_finite() && *cap > 0.0) {
                    return invalid(format!("capped simplex requires cap > 0, got {cap}"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::WholeSpace { dim }
            | FeasibleSet::NonnegOrthant { dim }
            | FeasibleSet::CappedSimplex { dim, .. } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
        }
    }

    /// Componentwise bounding box, when the set is bounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            FeasibleSet::Box { lower, upper } => {
                if lower.iter().chain(upper).all(|v| v.is_finite()) {
                    Some((lower.clone(), upper.clone()))
                } else {
                    None
                }
            }
            FeasibleSet::CappedSimplex { dim, cap } => Some((vec![0.0; *dim], vec![*cap; *dim])),
            _ => None,
        }
    }

    /// Outward unit normals of the faces active at `y`.
    pub fn active_normals(&self, y: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let n = y.len();
        let unit = |i: usize, s: f64| {
            let mut e = vec![0.0; n];
            e[i] = s;
            e
        };
        let mut out = Vec::new();
        match self {
            FeasibleSet::WholeSpace { .. } => {}
            FeasibleSet::NonnegOrthant { .. } => {
                out.extend((0..n).filter(|&i| y[i] <= tol).map(|i| unit(i, -1.0)));
            }
            FeasibleSet::Box { lower, upper } => {
                for i in 0..n {
                    if y[i] <= lower[i] + tol {
                        out.push(unit(i, -1.0));
                    }
                    if y[i] >= upper[i] - tol {
                        out.push(unit(i, 1.0));
                    }
                }
            }
            FeasibleSet::CappedSimplex { cap, .. } => {
                out.extend((0..n).filter(|&i| y[i] <= tol).map(|i| unit(i, -1.0)));
                if y.iter().sum::<f64>() >= cap - tol {
                    out.push(vec![1.0 / (n as f64).sqrt(); n]);
                }
            }
        }
        out
    }
}

/// Euclidean projection onto `set`.
pub fn project(set: &FeasibleSet, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(set.dim(), x.len())?;
    Ok(match set {
        FeasibleSet::WholeSpace { .. } => x.to_vec(),
        FeasibleSet::NonnegOrthant { .. } => x.iter().map(|v| v.max(0.0)).collect(),
        FeasibleSet::Box { lower, upper } => x
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect(),
        FeasibleSet::CappedSimplex { cap, .. } => project_capped_simplex(x, *cap),
    })
}

/// Orthant clamp first; if the cap is violated, solve `sum max(x_i - t, 0) = cap`
/// for the threshold `t` by sorting.
fn project_capped_simplex(x: &[f64], cap: f64) -> Vec<f64> {
    let clamped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= cap {
        return clamped;
    }
    let mut sorted = clamped.clone();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut partial = 0.0;
    let mut threshold = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        partial += v;
        let t = (partial - cap) / (k + 1) as f64;
        if *v > t {
            threshold = t;
        } else {
            break;
        }
    }
    clamped.iter().map(|v| (v - threshold).max(0.0)).collect()
}

/// Resolvent of the normal cone of `set`. The result does not depend on
/// `gamma`; it is kept so every resolvent shares one call shape.
pub fn resolvent_normal_cone(set: &FeasibleSet, gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return invalid(format!("resolvent step must be positive, got {gamma}"));
    }
    project(set, v)
}

/// Closed interval; `None` marks an unbounded end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval { lo: None, hi: None };

    pub fn new(lo: Option<f64>, hi: Option<f64>) -> Result<Self> {
        let iv = Interval { lo, hi };
        iv.validate()?;
        Ok(iv)
    }

    pub fn bounded(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Some(lo), Some(hi))
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_some_and(|v| !v.is_finite()) || self.hi.is_some_and(|v| !v.is_finite()) {
            return invalid("interval endpoints must be finite; use None for an unbounded end");
        }
        if let (Some(l), Some(h)) = (self.lo, self.hi) {
            if l > h {
                return invalid(format!("empty interval [{l}, {h}]"));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, t: f64) -> f64 {
        let t = self.lo.map_or(t, |l| t.max(l));
        self.hi.map_or(t, |h| t.min(h))
    }

    pub fn contains(&self, t: f64, tol: f64) -> bool {
        self.lo.is_none_or(|l| t >= l - tol) && self.hi.is_none_or(|h| t <= h + tol)
    }
}

/// `f(t) = scale * max(slope_left * (t - breakpoint), slope_right * (t - breakpoint))`,
/// convex when `slope_left <= slope_right` and `scale >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearProx1D {
    pub slope_left: f64,
    pub slope_right: f64,
    pub breakpoint: f64,
    pub scale: f64,
}

impl PiecewiseLinearProx1D {
    pub const ZERO: PiecewiseLinearProx1D = PiecewiseLinearProx1D {
        slope_left: 0.0,
        slope_right: 0.0,
        breakpoint: 0.0,
        scale: 0.0,
    };

    pub fn new(slope_left: f64, slope_right: f64, breakpoint: f64, scale: f64) -> Result<Self> {
        let f = PiecewiseLinearProx1D {
            slope_left,
            slope_right,
            breakpoint,
            scale,
        };
        f.validate()?;
        Ok(f)
    }

    /// `scale * max(a1 t + c1, a2 t + c2)` up to an additive constant.
    pub fn from_affine_pair(a1: f64, c1: f64, a2: f64, c2: f64, scale: f64) -> Result<Self> {
        let (lo, hi) = if a1 <= a2 { ((a1, c1), (a2, c2)) } else { ((a2, c2), (a1, c1)) };
        if lo.0 == hi.0 {
            return Self::new(lo.0, lo.0, 0.0, scale);
        }
        let breakpoint = (lo.1 - hi.1) / (hi.0 - lo.0);
        Self::new(lo.0, hi.0, breakpoint, scale)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.slope_left, self.slope_right, self.breakpoint, self.scale];
        if vals.iter().any(|v| !v.is_finite()) {
            return invalid("piecewise-linear parameters must be finite");
        }
        if self.scale < 0.0 {
            return invalid(format!("scale must be nonnegative, got {}", self.scale));
        }
        if self.slope_left > self.slope_right {
            return invalid("max of affines requires slope_left <= slope_right");
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let d = t - self.breakpoint;
        self.scale * (self.slope_left * d).max(self.slope_right * d)
    }

    /// Subdifferential as a closed interval `[lo, hi]`.
    pub fn subdifferential(&self, t: f64) -> (f64, f64) {
        let (l, r) = (self.scale * self.slope_left, self.scale * self.slope_right);
        if t < self.breakpoint {
            (l, l)
        } else if t > self.breakpoint {
            (r, r)
        } else {
            (l, r)
        }
    }
}

/// `argmin_{t in interval} (t - v)^2 / (2 gamma) + f(t)`.
pub fn prox_pwl_1d(f: &PiecewiseLinearProx1D, gamma: f64, interval: &Interval, v: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return invalid(format!("prox step must be positive, got {gamma}"));
    }
    interval.validate()?;
    let left = v - gamma * f.scale * f.slope_left;
    let right = v - gamma * f.scale * f.slope_right;
    let t = if left < f.breakpoint {
        left
    } else if right > f.breakpoint {
        right
    } else {
        f.breakpoint
    };
    // Strongly convex in one variable: the constrained minimizer is the clamp.
    Ok(interval.clamp(t))
}

/// One coordinate of a separable resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarProx {
    pub f: PiecewiseLinearProx1D,
    pub interval: Interval,
}

/// Resolvent `(I + gamma B)^{-1}` of the set-valued part of the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Resolvent {
    /// `B` is the normal cone of a convex set.
    Projection { set: FeasibleSet },
    /// `B = ∂h + N_X` with `h` and `X` separable across coordinates.
    Separable { coords: Vec<ScalarProx> },
}

/// Ray lengths used to discretize normal cones when selecting elements of `B(y)`.
pub const NORMAL_RAY_MAGNITUDES: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];

impl Resolvent {
    pub fn projection(set: FeasibleSet) -> Self {
        Resolvent::Projection { set }
    }

    pub fn dim(&self) -> usize {
        match self {
            Resolvent::Projection { set } => set.dim(),
            Resolvent::Separable { coords } => coords.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Resolvent::Projection { set } => set.validate(),
            Resolvent::Separable { coords } => {
                if coords.is_empty() {
                    return invalid("separable resolvent needs at least one coordinate");
                }
                coords.iter().try_for_each(|c| {
                    c.f.validate()?;
                    c.interval.validate()
                })
            }
        }
    }

    pub fn apply(&self, gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Resolvent::Projection { set } => resolvent_normal_cone(set, gamma, v),
            Resolvent::Separable { coords } => {
                check_dim(coords.len(), v.len())?;
                coords
                    .iter()
                    .zip(v)
                    .map(|(c, vi)| prox_pwl_1d(&c.f, gamma, &c.interval, *vi))
                    .collect()
            }
        }
    }

    /// Nearest point of `dom B`.
    pub fn project_domain(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            Resolvent::Projection { set } => project(set, u),
            Resolvent::Separable { coords } => {
                check_dim(coords.len(), u.len())?;
                Ok(coords.iter().zip(u).map(|(c, v)| c.interval.clamp(*v)).collect())
            }
        }
    }

    /// Bounding box of `dom B`, if bounded.
    pub fn domain_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Resolvent::Projection { set } => set.bounding_box(),
            Resolvent::Separable { coords } => coords
                .iter()
                .map(|c| Some((c.interval.lo?, c.interval.hi?)))
                .collect::<Option<Vec<_>>>()
                .map(|b| b.into_iter().unzip()),
        }
    }

    /// Largest `bᵀd` over a finite selection of `b ∈ B(y)`: subgradient
    /// endpoints exactly, normal cones through [`NORMAL_RAY_MAGNITUDES`].
    pub fn max_selection_pairing(&self, y: &[f64], d: &[f64], tol: f64) -> f64 {
        match self {
            Resolvent::Projection { set } => {
                let mut best = 0.0f64;
                for n in set.active_normals(y, tol) {
                    let s = crate::linalg::dot(&n, d);
                    for m in NORMAL_RAY_MAGNITUDES {
                        best = best.max(m * s);
                    }
                }
                best
            }
            Resolvent::Separable { coords } => coords
                .iter()
                .zip(y.iter().zip(d))
                .map(|(c, (yi, di))| {
                    let (lo, hi) = c.f.subdifferential(*yi);
                    let mut best = (lo * di).max(hi * di);
                    let at_lo = c.interval.lo.is_some_and(|l| *yi <= l + tol);
                    let at_hi = c.interval.hi.is_some_and(|h| *yi >= h - tol);
                    for m in NORMAL_RAY_MAGNITUDES {
                        if at_lo {
                            best = best.max((lo - m) * di);
                        }
                        if at_hi {
                            best = best.max((hi + m) * di);
                        }
                    }
                    best
                })
                .sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn orthant_clamps_negatives() {
        let set = FeasibleSet::nonneg_orthant(2).unwrap();
        assert_eq!(project(&set, &[-1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn capped_simplex_feasible_point_is_fixed() {
        let set = FeasibleSet::capped_simplex(3, 10.0).unwrap();
        assert_eq!(project(&set, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn capped_simplex_cuts_excess() {
        let set = FeasibleSet::capped_simplex(3, 10.0).unwrap();
        assert_eq!(project(&set, &[12.0, 0.0, 0.0]).unwrap(), vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let set = FeasibleSet::nonneg_orthant(2).unwrap();
        assert!(matches!(
            project(&set, &[1.0]),
            Err(crate::Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(FeasibleSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(FeasibleSet::capped_simplex(2, 0.0).is_err());
        assert!(FeasibleSet::nonneg_orthant(0).is_err());
    }

    #[test]
    fn normal_cone_resolvent_ignores_gamma() {
        let whole = FeasibleSet::whole_space(2).unwrap();
        assert_eq!(resolvent_normal_cone(&whole, 0.5, &[3.0, -7.0]).unwrap(), vec![3.0, -7.0]);
        let orthant = FeasibleSet::nonneg_orthant(2).unwrap();
        assert_eq!(resolvent_normal_cone(&orthant, 1.0, &[-1.0, 4.0]).unwrap(), vec![0.0, 4.0]);
        let capped = FeasibleSet::capped_simplex(3, 10.0).unwrap();
        assert_eq!(
            resolvent_normal_cone(&capped, 0.25, &[12.0, 0.0, 0.0]).unwrap(),
            vec![10.0, 0.0, 0.0]
        );
        assert!(resolvent_normal_cone(&capped, 0.0, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn prox_of_zero_is_identity() {
        let t = prox_pwl_1d(&PiecewiseLinearProx1D::ZERO, 3.0, &Interval::REAL_LINE, 2.5).unwrap();
        assert_eq!(t, 2.5);
    }

    #[test]
    fn prox_of_abs_soft_thresholds() {
        let abs = PiecewiseLinearProx1D::new(-1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(prox_pwl_1d(&abs, 1.0, &Interval::REAL_LINE, 0.5).unwrap(), 0.0);
        assert_eq!(prox_pwl_1d(&abs, 1.0, &Interval::REAL_LINE, 3.0).unwrap(), 2.0);
        assert_eq!(prox_pwl_1d(&abs, 1.0, &Interval::REAL_LINE, -3.0).unwrap(), -2.0);
    }

    #[test]
    fn prox_respects_interval() {
        let abs = PiecewiseLinearProx1D::new(-1.0, 1.0, 0.0, 1.0).unwrap();
        let iv = Interval::bounded(0.5, 1.5).unwrap();
        assert_eq!(prox_pwl_1d(&abs, 1.0, &iv, 0.2).unwrap(), 0.5);
        assert_eq!(prox_pwl_1d(&abs, 1.0, &iv, 9.0).unwrap(), 1.5);
    }

    #[test]
    fn empty_interval_is_an_error() {
        assert!(Interval::bounded(1.0, 0.0).is_err());
        let bad = Interval { lo: Some(1.0), hi: Some(0.0) };
        assert!(prox_pwl_1d(&PiecewiseLinearProx1D::ZERO, 1.0, &bad, 0.0).is_err());
    }

    #[test]
    fn affine_pair_builds_convex_max() {
        // max(2t - 1, -t + 2) has its kink at t = 1.
        let f = PiecewiseLinearProx1D::from_affine_pair(2.0, -1.0, -1.0, 2.0, 1.0).unwrap();
        assert_eq!((f.slope_left, f.slope_right), (-1.0, 2.0));
        assert!((f.breakpoint - 1.0).abs() < 1e-15);
        assert!(PiecewiseLinearProx1D::new(1.0, -1.0, 0.0, 1.0).is_err());
    }

    fn any_set(dim: usize) -> impl Strategy<Value = FeasibleSet> {
        prop_oneof![
            Just(FeasibleSet::WholeSpace { dim }),
            Just(FeasibleSet::NonnegOrthant { dim }),
            (0.1f64..20.0).prop_map(move |cap| FeasibleSet::CappedSimplex { dim, cap }),
            proptest::collection::vec((-5.0f64..5.0, 0.0f64..5.0), dim).prop_map(|b| {
                let (lower, width): (Vec<f64>, Vec<f64>) = b.into_iter().unzip();
                let upper = lower.iter().zip(&width).map(|(l, w)| l + w).collect();
                FeasibleSet::Box { lower, upper }
            }),
        ]
    }

    fn set_and_pair() -> impl Strategy<Value = (FeasibleSet, Vec<f64>, Vec<f64>)> {
        (1usize..7).prop_flat_map(|d| {
            (
                any_set(d),
                proptest::collection::vec(-30.0f64..30.0, d),
                proptest::collection::vec(-30.0f64..30.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn projection_is_idempotent((set, x, _y) in set_and_pair()) {
            let p = project(&set, &x).unwrap();
            let pp = project(&set, &p).unwrap();
            prop_assert!(crate::linalg::dist(&p, &pp) <= 1e-12);
        }

        #[test]
        fn projection_is_nonexpansive((set, x, y) in set_and_pair()) {
            let px = project(&set, &x).unwrap();
            let py = project(&set, &y).unwrap();
            let lhs = crate::linalg::dist(&px, &py);
            prop_assert!(lhs <= crate::linalg::dist(&x, &y) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn prox_satisfies_first_order_condition(
            sl in -3.0f64..3.0, dsl in 0.0f64..3.0, bp in -2.0f64..2.0, scale in 0.0f64..2.0,
            gamma in 0.01f64..5.0, v in -10.0f64..10.0,
            lo in proptest::option::of(-4.0f64..0.0), width in proptest::option::of(0.0f64..4.0),
        ) {
            let f = PiecewiseLinearProx1D::new(sl, sl + dsl, bp, scale).unwrap();
            let iv = Interval { lo, hi: width.map(|w| lo.unwrap_or(0.0) + w) };
            let t = prox_pwl_1d(&f, gamma, &iv, v).unwrap();
            // 0 ∈ (t - v)/γ + ∂f(t) + N(t): the residual -(t - v)/γ must lie in ∂f(t) + N(t).
            let g = -(t - v) / gamma;
            let (mut a, mut b) = f.subdifferential(t);
            let tol = 1e-9 * (1.0 + v.abs() / gamma);
            if iv.lo.is_some_and(|l| (t - l).abs() <= 1e-12) { a = f64::NEG_INFINITY; }
            if iv.hi.is_some_and(|h| (t - h).abs() <= 1e-12) { b = f64::INFINITY; }
            prop_assert!(g >= a - tol && g <= b + tol, "t={t} g={g} in [{a},{b}]");
        }
    }
}
