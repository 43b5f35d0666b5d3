//! The eigenvalue-density integral for slowly decaying perturbations, and
//! sweeps comparing it with counted eigenvalues.
//!
//! For the background perturbed by `l₀(r / c) σ₁`, the number of eigenvalues
//! in a gap window `[λ₁, λ₂]` grows like `c · ρ` with
//!
//! ```text
//! ρ = 1 / (απ) ∫₀^∞ k(λ₂, l₀(ϱ)) - k(λ₁, l₀(ϱ)) dϱ
//! ```
//!
//! where `k(λ, l)` is the quasimomentum of the background with constant
//! coupling `l`. The integrand is continuous but has square-root kinks where
//! a band edge of the `l`-coupled system crosses `λ₁` or `λ₂`; the quadrature
//! locates those points first and integrates between them.

use std::f64::consts::PI;
use std::sync::Arc;

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::counting::{check_background, count_halfline, TruncationPlan};
use crate::error::{Error, Result};
use crate::floquet::{discriminant, quasimomentum};
use crate::integrate::IntegrationSettings;
use crate::potentials::{geometric_grid, DiracSystem, PerturbationTemplate};

/// Integrand values at or below this are treated as zero.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSettings {
    /// Absolute error target for the integral (before the `1/(απ)` factor).
    pub abs_tol: f64,
    /// Panels each smooth segment starts with.
    pub min_panels: usize,
    pub max_depth: u32,
    /// Geometric scan points for the support search.
    pub support_points: usize,
    /// Geometric scan points inside the support for kink detection.
    pub kink_points: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            min_panels: 2,
            max_depth: 40,
            support_points: 256,
            kink_points: 512,
        }
    }
}

impl QuadratureSettings {
    /// Same rule on twice as many initial panels.
    pub fn with_doubled_nodes(mut self) -> Self {
        self.min_panels *= 2;
        self
    }
}

/// `k(λ₂, l₀(ϱ)) - k(λ₁, l₀(ϱ))`.
pub fn density_integrand(
    background: &DiracSystem,
    template: &PerturbationTemplate,
    lambda1: f64,
    lambda2: f64,
    rho: f64,
    settings: &IntegrationSettings,
) -> Result<f64> {
    coupled_integrand(background, lambda1, lambda2, template.eval(rho), settings)
}

/// `k(λ₂, l) - k(λ₁, l)` for the background with constant coupling `l`.
pub fn coupled_integrand(
    background: &DiracSystem,
    lambda1: f64,
    lambda2: f64,
    l: f64,
    settings: &IntegrationSettings,
) -> Result<f64> {
    if !(lambda1 <= lambda2) {
        return Err(Error::InvalidArgument(format!(
            "need λ₁ <= λ₂, got {lambda1} > {lambda2}"
        )));
    }
    if lambda1 == lambda2 {
        return Ok(0.0);
    }
    let sys = background.with_constant_coupling(l);
    let d = quasimomentum(&sys, lambda2, settings)? - quasimomentum(&sys, lambda1, settings)?;
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportBounds {
    /// `None` when the integrand vanishes on the whole search window.
    pub bracket: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Scan grid over the search window; a zero lower end is only meaningful
/// for bounded templates and is kept as an explicit first point.
fn search_grid(search: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = search;
    if lo == 0.0 {
        std::iter::once(0.0)
            .chain(geometric_grid(hi * 1e-9, hi, n - 1))
            .collect()
    } else {
        geometric_grid(lo, hi, n).collect()
    }
}

fn bisect_sign(mut a: f64, mut b: f64, fa_pos: bool, f: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    // keeps f(a) == fa_pos and f(b) != fa_pos; returns the midpoint of the final bracket
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b || (b - a).abs() <= 1e-13 * mid.abs() {
            break;
        }
        if f(mid)? == fa_pos {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bracket in `ϱ` outside which the density integrand vanishes on the
/// search grid.
pub fn support_bounds(
    background: &DiracSystem,
    template: &PerturbationTemplate,
    lambda1: f64,
    lambda2: f64,
    search: (f64, f64),
    settings: &IntegrationSettings,
    quad: &QuadratureSettings,
) -> Result<SupportBounds> {
    check_background(background)?;
    let (lo, hi) = search;
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad search window [{lo}, {hi}]")));
    }
    if lo == 0.0 && template.is_singular() {
        return Err(Error::InvalidArgument(
            "search window for a singular template must start above 0".into(),
        ));
    }
    if quad.support_points < 3 {
        return Err(Error::InvalidArgument("support scan needs at least 3 points".into()));
    }
    let grid = search_grid(search, quad.support_points);
    let active = |rho: f64| -> Result<bool> {
        Ok(density_integrand(background, template, lambda1, lambda2, rho, settings)? > ZERO_TOL)
    };
    let flags = grid.par_iter().map(|&r| active(r)).collect::<Result<Vec<bool>>>()?;
    let (Some(first), Some(last)) = (flags.iter().position(|&f| f), flags.iter().rposition(|&f| f)) else {
        return Ok(SupportBounds {
            bracket: None,
            warnings: Vec::new(),
        });
    };
    let mut warnings = Vec::new();
    let rho_lo = if first == 0 {
        if grid[0] > 0.0 {
            warnings.push(format!(
                "integrand is nonzero at the lower search bound ϱ = {}",
                grid[0]
            ));
        }
        grid[0]
    } else {
        bisect_sign(grid[first - 1], grid[first], false, active)?
    };
    let rho_hi = if last == grid.len() - 1 {
        warnings.push(format!(
            "integrand is nonzero at the upper search bound ϱ = {}",
            grid[last]
        ));
        grid[last]
    } else {
        bisect_sign(grid[last], grid[last + 1], true, active)?
    };
    Ok(SupportBounds {
        bracket: Some((rho_lo, rho_hi)),
        warnings,
    })
}

/// Default search window for a plan: the integrand provably vanishes below
/// the inner cut and beyond the outer one.
pub fn search_window(plan: &TruncationPlan) -> (f64, f64) {
    let lo = plan.rho_inner.map_or(0.0, |r| 0.5 * r);
    (lo, (2.0 * plan.rho_outer).max(lo + 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityPrediction {
    /// Eigenvalues per unit `c`.
    pub value: f64,
    pub support: Option<(f64, f64)>,
    /// Points inside the support where a band edge crosses `λ₁` or `λ₂`.
    pub kinks: Vec<f64>,
    /// Integrand evaluations spent by the quadrature.
    pub nodes: usize,
    /// Estimated absolute error of `value`.
    pub error_estimate: f64,
    pub warnings: Vec<String>,
}

/// `1/(απ) ∫ k(λ₂, l₀(ϱ)) - k(λ₁, l₀(ϱ)) dϱ` over the support in `search`.
#[allow(clippy::too_many_arguments)]
pub fn predicted_density(
    background: &DiracSystem,
    template: &PerturbationTemplate,
    lambda1: f64,
    lambda2: f64,
    search: (f64, f64),
    settings: &IntegrationSettings,
    quad: &QuadratureSettings,
) -> Result<DensityPrediction> {
    if !(quad.abs_tol > 0.0) || quad.min_panels == 0 || quad.kink_points < 2 {
        return Err(Error::InvalidArgument("bad quadrature settings".into()));
    }
    let support = support_bounds(background, template, lambda1, lambda2, search, settings, quad)?;
    let mut warnings = support.warnings;
    let Some((a, b)) = support.bracket else {
        return Ok(DensityPrediction {
            value: 0.0,
            support: None,
            kinks: Vec::new(),
            nodes: 0,
            error_estimate: 0.0,
            warnings,
        });
    };

    let kinks = locate_kinks(
        background,
        template,
        lambda1,
        lambda2,
        (a, b),
        settings,
        quad.kink_points,
    )?;
    let mut points = vec![a];
    points.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    points.push(b);
    points.dedup();

    let f = |rho: f64| density_integrand(background, template, lambda1, lambda2, rho, settings);
    let total = b - a;
    let pieces = points
        .par_windows(2)
        .map(|w| {
            let tol = quad.abs_tol * (w[1] - w[0]) / total;
            integrate_segment(&f, w[0], w[1], tol, quad)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum = Quad::default();
    for p in pieces {
        sum.value += p.value;
        sum.error += p.error;
        sum.nodes += p.nodes;
        sum.capped |= p.capped;
    }
    if sum.capped {
        warnings.push(format!(
            "quadrature hit depth {} before reaching the tolerance",
            quad.max_depth
        ));
    }
    let scale = 1.0 / (background.period() * PI);
    debug!(
        "density integral {} ± {} with {} nodes",
        sum.value, sum.error, sum.nodes
    );
    Ok(DensityPrediction {
        value: (sum.value * scale).max(0.0),
        support: Some((a, b)),
        kinks,
        nodes: sum.nodes,
        error_estimate: sum.error * scale,
        warnings,
    })
}

/// Roots of `|D(λᵢ, l₀(ϱ))| - 2` on `[a, b]`, sorted.
fn locate_kinks(
    background: &DiracSystem,
    template: &PerturbationTemplate,
    lambda1: f64,
    lambda2: f64,
    (a, b): (f64, f64),
    settings: &IntegrationSettings,
    n: usize,
) -> Result<Vec<f64>> {
    let grid: Vec<f64> = if a > 0.0 {
        geometric_grid(a, b, n).collect()
    } else {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    };
    let mut kinks = Vec::new();
    for lambda in [lambda1, lambda2] {
        let in_band = |rho: f64| -> Result<bool> {
            let sys = background.with_constant_coupling(template.eval(rho));
            Ok(discriminant(&sys, lambda, settings)?.abs() <= 2.0)
        };
        let flags = grid.par_iter().map(|&r| in_band(r)).collect::<Result<Vec<_>>>()?;
        for i in 1..grid.len() {
            if flags[i] != flags[i - 1] {
                kinks.push(bisect_sign(grid[i - 1], grid[i], flags[i - 1], in_band)?);
            }
        }
    }
    kinks.sort_by(f64::total_cmp);
    Ok(kinks)
}

#[derive(Debug, Clone, Copy, Default)]
struct Quad {
    value: f64,
    error: f64,
    nodes: usize,
    capped: bool,
}

// 7-point Gauss / 15-point Kronrod pair on [-1, 1]; odd indices of XGK are
// the Gauss nodes. Digits kept as published.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x)? + f(c + x)?;
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

fn integrate_segment(
    f: &impl Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
    quad: &QuadratureSettings,
) -> Result<Quad> {
    let n = quad.min_panels;
    let mut out = Quad::default();
    for i in 0..n {
        let x0 = a + (b - a) * i as f64 / n as f64;
        let x1 = if i + 1 == n {
            b
        } else {
            a + (b - a) * (i + 1) as f64 / n as f64
        };
        adapt(f, x0, x1, tol / n as f64, quad.max_depth, &mut out)?;
    }
    Ok(out)
}

fn adapt(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64, depth: u32, out: &mut Quad) -> Result<()> {
    let (value, error) = gauss_kronrod(f, a, b)?;
    out.nodes += 15;
    let mid = 0.5 * (a + b);
    if error <= tol || mid <= a || mid >= b {
        out.value += value;
        out.error += error;
        return Ok(());
    }
    if depth == 0 {
        out.value += value;
        out.error += error;
        out.capped = true;
        return Ok(());
    }
    adapt(f, a, mid, 0.5 * tol, depth - 1, out)?;
    adapt(f, mid, b, 0.5 * tol, depth - 1, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentSettings {
    pub integration: IntegrationSettings,
    pub quadrature: QuadratureSettings,
    /// Accepted range for `N / (c · predicted)` at the largest `c`.
    pub acceptance_band: (f64, f64),
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            integration: IntegrationSettings::default().with_tol(1e-7),
            quadrature: QuadratureSettings::default(),
            acceptance_band: (0.85, 1.15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub c: f64,
    pub count: u64,
    pub n_over_c: f64,
    pub predicted: f64,
    /// `N / (c · predicted)`, absent when the prediction is 0.
    pub ratio: Option<f64>,
    pub budget_over_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// `|N/c - predicted|` per row.
    pub errors: Vec<f64>,
    /// Whether `errors` never increases (ties allowed).
    pub error_non_increasing: bool,
    pub final_ratio: Option<f64>,
    pub final_ratio_in_band: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFailure {
    pub c: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub prediction: DensityPrediction,
    /// Absent for fewer than two successful rows.
    pub verdict: Option<Verdict>,
    pub failures: Vec<RowFailure>,
}

/// Slack when comparing successive errors, absorbing last-bit differences
/// between equal ratios such as 3/25 and 6/50.
const TREND_SLACK: f64 = 1e-12;

/// Count eigenvalues for each scale in `c_list` and compare with the
/// predicted density.
pub fn convergence_experiment(
    background: &DiracSystem,
    template: &Arc<PerturbationTemplate>,
    lambda1: f64,
    lambda2: f64,
    c_list: &[f64],
    plan: &TruncationPlan,
    settings: &ExperimentSettings,
) -> Result<ConvergenceReport> {
    if c_list.is_empty() {
        return Err(Error::InvalidArgument("c_list is empty".into()));
    }
    if c_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("c_list must be strictly increasing".into()));
    }
    if !(c_list[0] >= plan.c_min) {
        return Err(Error::Precondition(format!(
            "smallest c = {} is below c₀ = {}",
            c_list[0], plan.c_min
        )));
    }
    let prediction = predicted_density(
        background,
        template,
        lambda1,
        lambda2,
        search_window(plan),
        &settings.integration,
        &settings.quadrature,
    )?;
    info!(
        "predicted density {} on support {:?}",
        prediction.value, prediction.support
    );
    let predicted = prediction.value;

    let outcomes: Vec<_> = c_list
        .par_iter()
        .map(|&c| {
            count_halfline(background, template, c, lambda1, lambda2, plan, &settings.integration).map(|r| {
                ConvergenceRow {
                    c,
                    count: r.count,
                    n_over_c: r.count as f64 / c,
                    predicted,
                    ratio: (predicted > 0.0).then(|| r.count as f64 / (c * predicted)),
                    budget_over_c: r.error_budget as f64 / c,
                }
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&c, outcome) in c_list.iter().zip(outcomes) {
        match outcome {
            Ok(row) => {
                info!("c = {c}: N = {}", row.count);
                rows.push(row);
            }
            Err(e) => failures.push(RowFailure {
                c,
                message: e.to_string(),
            }),
        }
    }

    let verdict = (rows.len() >= 2).then(|| {
        let errors: Vec<f64> = rows.iter().map(|r| (r.n_over_c - predicted).abs()).collect();
        let error_non_increasing = errors.windows(2).all(|w| w[1] <= w[0] + TREND_SLACK);
        let final_ratio = rows.last().and_then(|r| r.ratio);
        let (lo, hi) = settings.acceptance_band;
        Verdict {
            errors,
            error_non_increasing,
            final_ratio,
            final_ratio_in_band: final_ratio.map(|r| r >= lo && r <= hi),
        }
    });
    Ok(ConvergenceReport {
        rows,
        prediction,
        verdict,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::plan_truncation;
    use crate::potentials::{Coupling, PeriodicPotential};

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

    fn inverse() -> PerturbationTemplate {
        PerturbationTemplate::inverse_power(1.0).unwrap()
    }

    #[test]
    fn integrand_trivial_cases() {
        for rho in [0.01, 0.3, 1.0, 40.0] {
            assert_eq!(
                density_integrand(&free(), &inverse(), -0.5, 0.5, rho, &s()).unwrap(),
                0.0
            );
            assert_eq!(
                density_integrand(&two_step(), &inverse(), 5.2, 5.2, rho, &s()).unwrap(),
                0.0
            );
        }
        assert!(density_integrand(&two_step(), &inverse(), 5.3, 5.2, 1.0, &s()).is_err());
    }

    #[test]
    fn integrand_positive_where_a_band_crosses() {
        // bisection oracle: find l where λ = 5.25 enters a band of the
        // l-coupled two-step system, then evaluate just inside
        let band = |l: f64| {
            discriminant(&two_step().with_constant_coupling(l), 5.25, &s())
                .unwrap()
                .abs()
                <= 2.0
        };
        assert!(!band(0.0));
        let l_in = (1..400).map(|i| i as f64 * 0.025).find(|&l| band(l)).unwrap();
        let v = density_integrand(&two_step(), &inverse(), 5.1, 5.4, 1.0 / l_in, &s()).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn empty_support_cases() {
        let sb = support_bounds(
            &free(),
            &inverse(),
            -0.5,
            0.5,
            (1e-3, 1e3),
            &s(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        assert_eq!(sb.bracket, None);
        // bounded template smaller than the distance to the gap edges
        let small = PerturbationTemplate::tabulated(vec![0.0, 1.0], vec![0.3, 0.0]).unwrap();
        let sb = support_bounds(
            &free(),
            &small,
            -0.5,
            0.5,
            (0.0, 2.0),
            &s(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        assert_eq!(sb.bracket, None);
        let p = predicted_density(
            &free(),
            &inverse(),
            -0.5,
            0.5,
            (1e-3, 1e3),
            &s(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        assert_eq!(p.value, 0.0);
        assert_eq!(p.nodes, 0);
    }

    #[test]
    fn two_step_support_is_a_finite_bracket() {
        let sb = support_bounds(
            &two_step(),
            &inverse(),
            5.1,
            5.4,
            (0.05, 40.0),
            &s(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        let (lo, hi) = sb.bracket.unwrap();
        assert!(sb.warnings.is_empty());
        // edges from an independent bisection on the closed-form monodromy
        assert!(
            (lo - 0.259962473860473).abs() < 1e-9 && (hi - 0.455430233976729).abs() < 1e-9,
            "{lo} {hi}"
        );
        // vanishes just outside, nonzero just inside
        let f = |r| density_integrand(&two_step(), &inverse(), 5.1, 5.4, r, &s()).unwrap();
        assert!(f(lo * 0.999) <= ZERO_TOL && f(hi * 1.001) <= ZERO_TOL);
        assert!(f(lo * 1.001) > 0.0 && f(hi * 0.999) > 0.0);
    }

    #[test]
    fn support_touching_search_bound_warns() {
        let sb = support_bounds(
            &two_step(),
            &inverse(),
            5.1,
            5.4,
            (0.3, 40.0),
            &s(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        assert_eq!(sb.warnings.len(), 1);
        assert_eq!(sb.bracket.unwrap().0, 0.3);
    }

    #[test]
    fn gauss_kronrod_on_known_integrals() {
        let q = QuadratureSettings {
            abs_tol: 1e-12,
            ..Default::default()
        };
        let r = integrate_segment(&|x: f64| Ok(x.sqrt()), 0.0, 1.0, 1e-12, &q).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-11);
        let r = integrate_segment(&|x: f64| Ok(x.cos()), 0.0, PI / 2.0, 1e-12, &q).unwrap();
        assert!((r.value - 1.0).abs() < 1e-13);
        assert!(!r.capped);
    }

    #[test]
    fn change_of_variables_identity() {
        // ∫ f(1/ϱ) dϱ = ∫ f(l) / l² dl with f(l) = k(λ₂, l) - k(λ₁, l)
        let (l1, l2) = (5.1, 5.4);
        let quad = QuadratureSettings {
            abs_tol: 1e-10,
            ..Default::default()
        };
        let p = predicted_density(&two_step(), &inverse(), l1, l2, (0.05, 40.0), &s(), &quad).unwrap();
        let (a, b) = p.support.unwrap();
        let mut pts: Vec<f64> = p.kinks.iter().map(|&k| 1.0 / k).collect();
        pts.extend([1.0 / b, 1.0 / a]);
        pts.sort_by(f64::total_cmp);
        let g = |l: f64| Ok(coupled_integrand(&two_step(), l1, l2, l, &s())? / (l * l));
        let in_l: f64 = pts
            .windows(2)
            .map(|w| integrate_segment(&g, w[0], w[1], 1e-11, &quad).unwrap().value)
            .sum();
        assert!((in_l / PI - p.value).abs() < 1e-6, "{} vs {}", in_l / PI, p.value);
    }

    /// Uniform midpoint sum of the integrand, no kink handling.
    fn riemann(sys: &DiracSystem, l1: f64, l2: f64, (a, b): (f64, f64), n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| density_integrand(sys, &inverse(), l1, l2, a + (i as f64 + 0.5) * h, &s()).unwrap())
            .sum::<f64>()
            * h
            / PI
    }

    #[test]
    fn quadrature_matches_riemann_sum() {
        let p = predicted_density(
            &two_step(),
            &inverse(),
            5.1,
            5.4,
            (0.05, 40.0),
            &s(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        let (a, b) = p.support.unwrap();
        let r = riemann(&two_step(), 5.1, 5.4, (a * 0.99, b * 1.01), 8000);
        assert!((r - p.value).abs() < 1e-5, "{r} vs {}", p.value);
        assert!((p.value - 0.049993).abs() < 1e-5);
    }

    #[test]
    fn doubling_nodes_is_stable() {
        let q = QuadratureSettings::default();
        let a = predicted_density(&two_step(), &inverse(), 5.1, 5.4, (0.05, 40.0), &s(), &q).unwrap();
        let b = predicted_density(
            &two_step(),
            &inverse(),
            5.1,
            5.4,
            (0.05, 40.0),
            &s(),
            &q.with_doubled_nodes(),
        )
        .unwrap();
        assert!(b.nodes >= a.nodes);
        assert!((a.value - b.value).abs() <= 2.0 * a.error_estimate.max(b.error_estimate) + 1e-14);
    }

    #[test]
    fn integrand_vanishes_inside_inner_cut() {
        let plan = plan_truncation(&two_step(), &inverse(), 5.0, 5.5, 1.0, 0.05, &s()).unwrap();
        let r0 = plan.rho_inner.unwrap();
        for rho in geometric_grid(r0 * 1e-4, r0, 64) {
            assert_eq!(
                density_integrand(&two_step(), &inverse(), 5.0, 5.5, rho, &s()).unwrap(),
                0.0
            );
        }
        for rho in geometric_grid(plan.rho_outer, plan.rho_outer * 100.0, 64) {
            assert_eq!(
                density_integrand(&two_step(), &inverse(), 5.0, 5.5, rho, &s()).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn experiment_on_free_background() {
        let t = Arc::new(inverse());
        let plan = plan_truncation(&free(), &t, -0.5, 0.5, 1.0, 0.1, &s()).unwrap();
        let report = convergence_experiment(
            &free(),
            &t,
            -0.5,
            0.5,
            &[25.0, 50.0],
            &plan,
            &ExperimentSettings::default(),
        )
        .unwrap();
        assert_eq!(report.prediction.value, 0.0);
        assert!(report.failures.is_empty());
        for row in &report.rows {
            assert!(row.ratio.is_none());
            assert!(row.n_over_c <= 10.0 / row.c);
        }
        let single =
            convergence_experiment(&free(), &t, -0.5, 0.5, &[25.0], &plan, &ExperimentSettings::default()).unwrap();
        assert!(single.verdict.is_none());
        assert!(convergence_experiment(
            &free(),
            &t,
            -0.5,
            0.5,
            &[50.0, 25.0],
            &plan,
            &ExperimentSettings::default()
        )
        .is_err());
        assert!(matches!(
            convergence_experiment(&free(), &t, -0.5, 0.5, &[1.0], &plan, &ExperimentSettings::default()),
            Err(Error::Precondition(_))
        ));
    }
}
