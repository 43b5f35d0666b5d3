//! Eigenvalue counting by Prüfer shooting.
//!
//! For a regular interval `[a, b]` with separated boundary conditions, the
//! Prüfer angle `θ(b; λ)` of the solution satisfying the left condition is
//! continuous and strictly increasing in `λ`, and `λ` is an eigenvalue
//! exactly when `θ(b; λ)` hits the right boundary angle modulo π. Counting
//! lattice crossings between two values of `λ` therefore counts eigenvalues
//! without locating them.
//!
//! Windows are half-open, `(λ₁, λ₂]`; an endpoint that sits on an
//! eigenvalue (to within [`ENDPOINT_TOL`]) is flagged and added to the
//! error budget instead of being resolved.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::{band_edges, quasimomentum, EdgeSettings};
use crate::integrate::{propagate_prufer, IntegrationSettings};
use crate::potentials::{geometric_grid, DiracSystem, PerturbationTemplate};

/// Distance in θ to the target lattice below which an endpoint is ambiguous.
pub const ENDPOINT_TOL: f64 = 1e-9;

/// Budget charged by each truncation cut (inner and outer).
const CUT_BUDGET: u64 = 2;

/// Separated condition `u₁ sin β + u₂ cos β = 0`, i.e. Prüfer angle `θ ≡ β (mod π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryCondition {
    angle: f64,
}

impl BoundaryCondition {
    /// Reduces `angle` into `[0, π)`.
    pub fn new(angle: f64) -> Self {
        let mut a = angle.rem_euclid(PI);
        if a >= PI {
            a = 0.0;
        }
        Self { angle: a }
    }

    /// `u₂ = 0`.
    pub fn lower_vanishes() -> Self {
        Self { angle: 0.0 }
    }

    /// `u₁ + u₂ = 0`, the condition used at the inner truncation point.
    pub fn sum_vanishes() -> Self {
        Self { angle: FRAC_PI_4 }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Interval {
        a: f64,
        b: f64,
    },
    /// Scaled half-line problem truncated to `[r_inner, r_outer]`.
    HalfLine {
        c: f64,
        r_inner: f64,
        r_outer: f64,
    },
}

impl Geometry {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Geometry::Interval { a, b } => (a, b),
            Geometry::HalfLine { r_inner, r_outer, .. } => (r_inner, r_outer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountResult {
    /// Eigenvalues in `(λ₁, λ₂]`.
    pub count: u64,
    pub window: (f64, f64),
    pub geometry: Geometry,
    /// Worst-case deviation of `count` from the count being estimated.
    pub error_budget: u64,
    /// `θ(b; λ₁)` and `θ(b; λ₂)`.
    pub theta_end: (f64, f64),
    pub warnings: Vec<String>,
}

/// Unwrapped `θ(b; λ)` of the solution satisfying `bc_left` at `a`.
pub fn shoot_angle(
    sys: &DiracSystem,
    a: f64,
    b: f64,
    bc_left: BoundaryCondition,
    lambda: f64,
    settings: &IntegrationSettings,
) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("need a < b, got [{a}, {b}]")));
    }
    Ok(propagate_prufer(sys, lambda, bc_left.angle(), a, b, settings)?.theta)
}

/// Number of eigenvalues in `(λ₁, λ₂]` of the system on `[a, b]` with
/// separated boundary conditions.
#[allow(clippy::too_many_arguments)]
pub fn count_interval(
    sys: &DiracSystem,
    a: f64,
    b: f64,
    bc_left: BoundaryCondition,
    bc_right: BoundaryCondition,
    lambda1: f64,
    lambda2: f64,
    settings: &IntegrationSettings,
) -> Result<CountResult> {
    if !(lambda1 <= lambda2) {
        return Err(Error::InvalidArgument(format!(
            "need λ₁ <= λ₂, got {lambda1} > {lambda2}"
        )));
    }
    let t1 = shoot_angle(sys, a, b, bc_left, lambda1, settings)?;
    let t2 = if lambda2 == lambda1 {
        t1
    } else {
        shoot_angle(sys, a, b, bc_left, lambda2, settings)?
    };
    let target = bc_right.angle();
    let lattice = |theta: f64| (theta - target) / PI;
    let (n1, n2) = (lattice(t1).floor(), lattice(t2).floor());
    if n2 < n1 {
        return Err(Error::Precondition(format!(
            "Prüfer angle decreased in λ ({t1} -> {t2}); integration tolerance too loose"
        )));
    }
    let mut warnings = Vec::new();
    let mut budget = 0;
    for (lambda, theta) in [(lambda1, t1), (lambda2, t2)] {
        let s = lattice(theta);
        if (s - s.round()).abs() * PI < ENDPOINT_TOL {
            warnings.push(format!(
                "λ = {lambda} is within {ENDPOINT_TOL:e} of an eigenvalue; count ambiguous by 1"
            ));
            budget += 1;
        }
    }
    if lambda1 == lambda2 && budget == 2 {
        budget = 1;
        warnings.truncate(1);
    }
    Ok(CountResult {
        count: (n2 - n1) as u64,
        window: (lambda1, lambda2),
        geometry: Geometry::Interval { a, b },
        error_budget: budget,
        theta_end: (t1, t2),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTable {
    /// `(k(λ₂) - k(λ₁)) / (απ)`.
    pub limit: f64,
    /// `(length, N, N / length)`.
    pub rows: Vec<(f64, u64, f64)>,
}

/// Eigenvalue counts on `[0, L]` for growing `L`, next to the density
/// `(k(λ₂) - k(λ₁)) / (απ)` they approach.
#[allow(clippy::too_many_arguments)]
pub fn length_limit_table(
    sys: &DiracSystem,
    bc_left: BoundaryCondition,
    bc_right: BoundaryCondition,
    lambda1: f64,
    lambda2: f64,
    lengths: &[f64],
    settings: &IntegrationSettings,
) -> Result<LimitTable> {
    sys.require_constant()?;
    let k1 = quasimomentum(sys, lambda1, settings)?;
    let k2 = quasimomentum(sys, lambda2, settings)?;
    let limit = (k2 - k1) / (sys.period() * PI);
    let rows = lengths
        .iter()
        .map(|&len| {
            let r = count_interval(sys, 0.0, len, bc_left, bc_right, lambda1, lambda2, settings)?;
            Ok((len, r.count, r.count as f64 / len))
        })
        .collect::<Result<_>>()?;
    Ok(LimitTable { limit, rows })
}

/// Where to cut the scaled half-line problem, in the variable `ϱ = r / c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationPlan {
    /// Below this no spectrum in the window is produced. `None` when the
    /// template is bounded and the problem starts at `r = 0`.
    pub rho_inner: Option<f64>,
    /// Beyond this `|l₀| < gap_margin`.
    pub rho_outer: f64,
    pub outer_margin: f64,
    /// `(‖q‖∞ + max(|λ₁|, |λ₂|) + 1)²`.
    pub threshold: f64,
    /// `C` in `|l₀'| / l₀² ≤ C` near 0.
    pub regularity_constant: f64,
    /// Smallest admissible scale, `C + 1`.
    pub c_min: f64,
    pub gap_margin: f64,
    /// The unperturbed gap holding the window.
    pub gap: (f64, f64),
    pub inner_bc: BoundaryCondition,
    pub outer_bc: BoundaryCondition,
}

impl TruncationPlan {
    pub fn inner_start(&self) -> f64 {
        self.rho_inner.unwrap_or(0.0)
    }

    pub fn outer_end(&self) -> f64 {
        self.rho_outer * self.outer_margin
    }

    /// Counting interval in the unscaled variable `r`.
    pub fn r_range(&self, c: f64) -> (f64, f64) {
        (c * self.inner_start(), c * self.outer_end())
    }
}

/// Search range for the truncation points in `ϱ`.
const RHO_SEARCH: (f64, f64) = (1e-9, 1e9);
const RHO_SEARCH_POINTS: usize = 4096;
pub const DEFAULT_OUTER_MARGIN: f64 = 4.0;

fn bisect_bool(mut good: f64, mut bad: f64, ok: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Choose truncation points for counting eigenvalues of the background
/// perturbed by `l₀(r / c) σ₁` in `[λ₁, λ₂]`.
///
/// `regularity_constant` is the certified `C` from
/// [`validate_template`](crate::potentials::validate_template).
#[allow(clippy::too_many_arguments)]
pub fn plan_truncation(
    background: &DiracSystem,
    template: &PerturbationTemplate,
    lambda1: f64,
    lambda2: f64,
    regularity_constant: f64,
    gap_margin: f64,
    settings: &IntegrationSettings,
) -> Result<TruncationPlan> {
    check_background(background)?;
    if !(lambda1 <= lambda2) {
        return Err(Error::InvalidArgument(format!(
            "need λ₁ <= λ₂, got {lambda1} > {lambda2}"
        )));
    }
    if !(gap_margin > 0.0 && gap_margin < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gap margin must lie in (0, 1), got {gap_margin}"
        )));
    }
    if !(regularity_constant >= 0.0 && regularity_constant.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad regularity constant {regularity_constant}"
        )));
    }
    let gap = enclosing_gap(background, lambda1 - gap_margin, lambda2 + gap_margin, settings)?;

    let threshold = (background.potential().sup_norm() + lambda1.abs().max(lambda2.abs()) + 1.0).powi(2);
    let c_min = regularity_constant + 1.0;
    let grid: Vec<f64> = geometric_grid(RHO_SEARCH.0, RHO_SEARCH.1, RHO_SEARCH_POINTS).collect();

    // outer cut: last grid point where |l₀| >= δ∞, refined
    let small = |rho: f64| template.eval(rho).abs() < gap_margin;
    let rho_outer = match grid.iter().rposition(|&r| !small(r)) {
        None => grid[0],
        Some(i) if i == grid.len() - 1 => {
            return Err(Error::Precondition(format!(
                "template does not fall below the gap margin {gap_margin} for ϱ <= {}",
                RHO_SEARCH.1
            )))
        }
        Some(i) => bisect_bool(grid[i + 1], grid[i], small),
    };

    // inner cut: l₀² - |l₀'| / c₀ >= threshold on (0, ϱ₀)
    let inner_ok = |rho: f64| {
        let l = template.eval(rho);
        l * l - template.derivative(rho).abs() / c_min >= threshold
    };
    let rho_inner = if template.is_singular() {
        if !inner_ok(grid[0]) {
            return Err(Error::Precondition(format!(
                "no ϱ₀ >= {} satisfies l₀² - |l₀'|/c₀ >= {threshold}",
                RHO_SEARCH.0
            )));
        }
        let j = grid
            .iter()
            .position(|&r| !inner_ok(r))
            .ok_or_else(|| Error::Precondition("inner criterion holds on the whole search range".into()))?;
        Some(bisect_bool(grid[j - 1], grid[j], inner_ok))
    } else {
        None
    };

    if let Some(r0) = rho_inner {
        if !(r0 < rho_outer) {
            return Err(Error::Precondition(format!(
                "inner cut {r0} is not below the outer cut {rho_outer}"
            )));
        }
    }

    Ok(TruncationPlan {
        rho_inner,
        rho_outer,
        outer_margin: DEFAULT_OUTER_MARGIN,
        threshold,
        regularity_constant,
        c_min,
        gap_margin,
        gap,
        inner_bc: BoundaryCondition::sum_vanishes(),
        outer_bc: BoundaryCondition::lower_vanishes(),
    })
}

pub(crate) fn check_background(background: &DiracSystem) -> Result<()> {
    match background.constant_coupling() {
        Some(0.0) => Ok(()),
        _ => Err(Error::InvalidArgument(
            "background system must have zero constant coupling".into(),
        )),
    }
}

/// The unperturbed gap whose interior holds `[lo, hi]`.
pub fn enclosing_gap(background: &DiracSystem, lo: f64, hi: f64, settings: &IntegrationSettings) -> Result<(f64, f64)> {
    let bands = band_edges(background, (lo - 1.0, hi + 1.0), settings, &EdgeSettings::default())?;
    match bands.gap_containing(lo, hi) {
        Some(g) if g.left > bands.window.0 && g.right < bands.window.1 => Ok((g.left, g.right)),
        Some(g) => {
            // clipped by the scan window; widen until both edges are seen
            let wide = band_edges(
                background,
                (
                    g.left - 8.0 * (1.0 + g.right - g.left),
                    g.right + 8.0 * (1.0 + g.right - g.left),
                ),
                settings,
                &EdgeSettings::default(),
            )?;
            wide.gap_containing(lo, hi)
                .map(|g| (g.left, g.right))
                .ok_or_else(|| Error::Precondition(format!("[{lo}, {hi}] is not inside a spectral gap")))
        }
        None => Err(Error::Precondition(format!(
            "[{lo}, {hi}] is not compactly inside a spectral gap of the unperturbed system"
        ))),
    }
}

/// Eigenvalues in `(λ₁, λ₂]` of the background perturbed by `l₀(r / c) σ₁`,
/// counted on the truncated interval of `plan`.
pub fn count_halfline(
    background: &DiracSystem,
    template: &Arc<PerturbationTemplate>,
    c: f64,
    lambda1: f64,
    lambda2: f64,
    plan: &TruncationPlan,
    settings: &IntegrationSettings,
) -> Result<CountResult> {
    check_background(background)?;
    if !(c >= plan.c_min) {
        return Err(Error::Precondition(format!(
            "scale c = {c} is below c₀ = {}",
            plan.c_min
        )));
    }
    let (r_inner, r_outer) = plan.r_range(c);
    let sys = background.with_profile(Arc::clone(template), c);
    let mut result = count_interval(
        &sys,
        r_inner,
        r_outer,
        plan.inner_bc,
        plan.outer_bc,
        lambda1,
        lambda2,
        settings,
    )?;
    result.geometry = Geometry::HalfLine { c, r_inner, r_outer };
    result.error_budget += 2 * CUT_BUDGET;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCheck {
    pub whole: u64,
    pub pieces: Vec<u64>,
    /// `|Σ N_j - N|`.
    pub lhs: u64,
    /// `2 (n + 1)` for `n` cut points.
    pub bound: u64,
    pub ok: bool,
}

/// Compare the count on `[a, b]` with the sum of counts on the pieces
/// obtained by cutting at `cuts` with `cut_bc` on both sides of every cut.
#[allow(clippy::too_many_arguments)]
pub fn split_count_check(
    sys: &DiracSystem,
    a: f64,
    b: f64,
    cuts: &[f64],
    bcs: (BoundaryCondition, BoundaryCondition),
    cut_bc: BoundaryCondition,
    lambda1: f64,
    lambda2: f64,
    settings: &IntegrationSettings,
) -> Result<SplitCheck> {
    let mut points = vec![a];
    points.extend_from_slice(cuts);
    points.push(b);
    if points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "cut points must be increasing and inside (a, b)".into(),
        ));
    }
    let whole = count_interval(sys, a, b, bcs.0, bcs.1, lambda1, lambda2, settings)?.count;
    let last = points.len() - 2;
    let pieces = points
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let left = if i == 0 { bcs.0 } else { cut_bc };
            let right = if i == last { bcs.1 } else { cut_bc };
            Ok(count_interval(sys, w[0], w[1], left, right, lambda1, lambda2, settings)?.count)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: u64 = pieces.iter().sum();
    let lhs = total.abs_diff(whole);
    let bound = 2 * (cuts.len() as u64 + 1);
    Ok(SplitCheck {
        whole,
        pieces,
        lhs,
        bound,
        ok: lhs <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{Coupling, PeriodicPotential};
    use proptest::prelude::*;

    fn free() -> DiracSystem {
        DiracSystem::new(1.0, PeriodicPotential::zero(1.0).unwrap(), Coupling::Constant(0.0)).unwrap()
    }

    fn two_step() -> DiracSystem {
        let p = PeriodicPotential::piecewise_constant(&[(0.5, 0.0), (0.5, 4.0)]).unwrap();
        DiracSystem::new(1.0, p, Coupling::Constant(0.0)).unwrap()
    }

    fn s() -> IntegrationSettings {
        IntegrationSettings::default()
    }

    fn bc0() -> BoundaryCondition {
        BoundaryCondition::lower_vanishes()
    }

    #[test]
    fn boundary_condition_angle_reduction() {
        assert_eq!(BoundaryCondition::new(PI + 0.5).angle(), 0.5);
        assert!((BoundaryCondition::new(-0.25).angle() - (PI - 0.25)).abs() < 1e-15);
        let b = BoundaryCondition::sum_vanishes();
        // u₁ sin β + u₂ cos β ∝ u₁ + u₂
        assert!((b.angle().sin() - b.angle().cos()).abs() < 1e-15);
    }

    /// Dense-λ oracle: locate eigenvalues of the free system on [0, L] one by
    /// one as sign changes of the boundary mismatch sin(θ(b) - β_b).
    fn dense_eigenvalue_count(sys: &DiracSystem, len: f64, lambda1: f64, lambda2: f64) -> u64 {
        let n = 4000;
        let mut count = 0;
        let mut prev = None::<f64>;
        for i in 0..=n {
            let lambda = lambda1 + (lambda2 - lambda1) * i as f64 / n as f64;
            let th = shoot_angle(sys, 0.0, len, bc0(), lambda, &s()).unwrap();
            let cell = (th / PI).floor();
            if let Some(p) = prev {
                count += (cell - p) as u64;
            }
            prev = Some(cell);
        }
        count
    }

    #[test]
    fn free_system_on_fifty() {
        let r = count_interval(&free(), 0.0, 50.0, bc0(), bc0(), 1.5, 2.5, &s()).unwrap();
        assert!(r.count == 18 || r.count == 19, "{}", r.count);
        let limit = (5.25f64.sqrt() - 1.25f64.sqrt()) / PI;
        assert!((r.count as f64 / 50.0 - limit).abs() <= 1.0 / 50.0);
        assert_eq!(r.count, dense_eigenvalue_count(&free(), 50.0, 1.5, 2.5));
        assert_eq!(r.error_budget, 0);
    }

    #[test]
    fn empty_and_nested_windows() {
        let r = count_interval(&two_step(), 0.0, 20.0, bc0(), bc0(), 3.3, 3.3, &s()).unwrap();
        assert_eq!(r.count, 0);
        let mut prev = 0;
        for hi in [3.5, 4.0, 5.0, 6.5] {
            let n = count_interval(&two_step(), 0.0, 20.0, bc0(), bc0(), 3.0, hi, &s())
                .unwrap()
                .count;
            assert!(n >= prev);
            prev = n;
        }
        assert!(count_interval(&two_step(), 0.0, 20.0, bc0(), bc0(), 3.0, 2.0, &s()).is_err());
        assert!(count_interval(&two_step(), 1.0, 1.0, bc0(), bc0(), 2.0, 3.0, &s()).is_err());
    }

    #[test]
    fn endpoint_on_eigenvalue_is_flagged() {
        // free system on [0, L] with u₂ = 0 at both ends: eigenvalues where
        // sin(ω L) = 0, ω = sqrt(λ² - 1); pick ω L = 10π
        let len = 10.0;
        let lambda = ((PI).powi(2) + 1.0).sqrt();
        let r = count_interval(&free(), 0.0, len, bc0(), bc0(), 1.5, lambda, &s()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.error_budget, 1);
    }

    #[test]
    fn shoot_angle_stays_in_well_at_zero() {
        // λ = 0 in the mass gap: θ' = -cos 2θ has an attracting fixed point at -π/4
        let th = shoot_angle(&free(), 0.0, 1.0, bc0(), 0.0, &s()).unwrap();
        let exact = -(1f64.tanh()).atan();
        assert!((th - exact).abs() < 1e-12);
        assert!(th > -FRAC_PI_4 && th <= 0.0);
    }

    #[test]
    fn length_limit_on_free_system() {
        let lengths = [25.0, 50.0, 100.0, 200.0];
        let t = length_limit_table(&free(), bc0(), bc0(), 1.5, 2.5, &lengths, &s()).unwrap();
        assert!((t.limit - 0.3734583).abs() < 1e-6);
        for &(len, _, ratio) in &t.rows {
            assert!((ratio - t.limit).abs() <= 2.0 / len);
        }
        let gap = length_limit_table(&two_step(), bc0(), bc0(), 1.8, 2.2, &lengths, &s()).unwrap();
        assert_eq!(gap.limit, 0.0);
        assert!(gap.rows.iter().all(|r| r.1 <= 2));
    }

    #[test]
    fn truncation_plan_for_inverse_first_power() {
        let t = PerturbationTemplate::inverse_power(1.0).unwrap();
        let plan = plan_truncation(&two_step(), &t, 1.8, 2.2, 1.0, 0.1, &s()).unwrap();
        assert!((plan.threshold - 51.84).abs() < 1e-12);
        assert_eq!(plan.c_min, 2.0);
        let expected = (1.0f64 - 0.5).sqrt() / 7.2;
        assert!((plan.rho_inner.unwrap() - expected).abs() < 1e-9 * expected);
        assert!((plan.rho_outer - 10.0).abs() < 1e-8);
        assert!(plan.gap.0 < 1.7 && plan.gap.1 > 2.3);
    }

    #[test]
    fn bounded_template_gives_degenerate_plan() {
        let t = PerturbationTemplate::tabulated(vec![0.0, 1.0, 2.0], vec![0.05, 0.02, 0.0]).unwrap();
        let plan = plan_truncation(&free(), &t, -0.5, 0.5, 0.0, 0.1, &s()).unwrap();
        assert_eq!(plan.rho_inner, None);
        assert!(plan.rho_outer <= 1e-8);
    }

    #[test]
    fn window_touching_gap_edge_is_rejected() {
        let t = PerturbationTemplate::inverse_power(1.0).unwrap();
        let err = plan_truncation(&free(), &t, 0.5, 0.95, 1.0, 0.1, &s()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let err = plan_truncation(&free(), &t, 1.5, 2.0, 1.0, 0.1, &s()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        // hypothesis (H) fails for β < 1: no inner cut can be certified
        let weak = PerturbationTemplate::inverse_power(0.5).unwrap();
        assert!(plan_truncation(&free(), &weak, -0.5, 0.5, 1.0, 0.1, &s()).is_err());
    }

    #[test]
    fn halfline_free_background_has_no_bulk_eigenvalues() {
        let t = Arc::new(PerturbationTemplate::inverse_power(1.0).unwrap());
        let plan = plan_truncation(&free(), &t, -0.5, 0.5, 1.0, 0.1, &s()).unwrap();
        let settings = s().with_tol(1e-8);
        for c in [25.0, 50.0] {
            let r = count_halfline(&free(), &t, c, -0.5, 0.5, &plan, &settings).unwrap();
            assert!(r.count <= 4, "c = {c}: {}", r.count);
            assert!(r.error_budget >= 4);
        }
        assert!(matches!(
            count_halfline(&free(), &t, 1.5, -0.5, 0.5, &plan, &settings),
            Err(Error::Precondition(_))
        ));
        let r = count_halfline(&free(), &t, 30.0, 0.1, 0.1, &plan, &settings).unwrap();
        assert_eq!(r.count, 0);
    }

    #[test]
    fn split_examples() {
        let none = split_count_check(&free(), 0.0, 50.0, &[], (bc0(), bc0()), bc0(), 1.5, 2.5, &s()).unwrap();
        assert_eq!(none.lhs, 0);
        assert_eq!(none.bound, 2);
        let one = split_count_check(&free(), 0.0, 50.0, &[25.0], (bc0(), bc0()), bc0(), 1.5, 2.5, &s()).unwrap();
        assert!(one.ok && one.lhs <= 4);
        assert!(split_count_check(&free(), 0.0, 50.0, &[60.0], (bc0(), bc0()), bc0(), 1.5, 2.5, &s()).is_err());
    }

    #[test]
    fn inner_condition_sensitivity_is_small() {
        let t = Arc::new(PerturbationTemplate::inverse_power(1.0).unwrap());
        let base = plan_truncation(&two_step(), &t, 5.0, 5.5, 1.0, 0.05, &s()).unwrap();
        let settings = s().with_tol(1e-8);
        let n0 = count_halfline(&two_step(), &t, 25.0, 5.0, 5.5, &base, &settings)
            .unwrap()
            .count;
        for beta in [0.0, 1.0, 2.0] {
            let plan = TruncationPlan {
                inner_bc: BoundaryCondition::new(beta),
                ..base.clone()
            };
            let n = count_halfline(&two_step(), &t, 25.0, 5.0, 5.5, &plan, &settings)
                .unwrap()
                .count;
            assert!(n.abs_diff(n0) <= 2);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shooting_angle_strictly_increasing(lambda in -6.0f64..6.0, d in 1e-3f64..1.0, l in -1.5f64..1.5, len in 0.5f64..8.0) {
            let sys = two_step().with_constant_coupling(l);
            let a = shoot_angle(&sys, 0.0, len, bc0(), lambda, &s()).unwrap();
            let b = shoot_angle(&sys, 0.0, len, bc0(), lambda + d, &s()).unwrap();
            prop_assert!(b > a);
        }

        /// Shifting q by a constant shifts every eigenvalue by the same amount.
        #[test]
        fn constant_shift_moves_counts(shift in -3.0f64..3.0, lo in -4.0f64..4.0, w in 0.0f64..3.0) {
            let shifted = DiracSystem::new(1.0, two_step().potential().shifted(shift), Coupling::Constant(0.3)).unwrap();
            let base = two_step().with_constant_coupling(0.3);
            let n = count_interval(&base, 0.0, 15.0, bc0(), bc0(), lo, lo + w, &s()).unwrap();
            let m = count_interval(&shifted, 0.0, 15.0, bc0(), bc0(), lo + shift, lo + w + shift, &s()).unwrap();
            prop_assert_eq!(n.count, m.count);
        }
    }
}
