//! Floquet analysis of the constant-coupling periodic system.
//!
//! The quasimomentum `k(λ)` is normalized by the rotation number of the
//! Prüfer angle, `θ(x) = k x / α + O(1)`, so it is an absolute quantity: it
//! equals `nπ` on the n-th instability interval and satisfies
//! `D = 2 cos k` on stability intervals.
//!
//! The one-period map `θ(0) ↦ θ(α)` is the lift of a circle map of period π,
//! so for any starting angle `|θ(Nα) - θ(0) - N k| < π`. A short winding
//! estimate over a few periods therefore pins down the branch, and the
//! monodromy matrix supplies the fractional part exactly.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{monodromy, propagate_prufer, transfer_matrix, IntegrationSettings, TransferMatrix};
use crate::potentials::DiracSystem;

/// Periods used for the branch-selecting winding estimate. The estimate is
/// within `π / BRANCH_PERIODS` of `k`.
const BRANCH_PERIODS: usize = 4;

/// Trace of the monodromy matrix.
pub fn discriminant(sys: &DiracSystem, lambda: f64, settings: &IntegrationSettings) -> Result<f64> {
    sys.require_constant()?;
    Ok(monodromy(sys, lambda, settings)?.trace())
}

/// Quasimomentum `k(λ)` in radians per period.
pub fn quasimomentum(sys: &DiracSystem, lambda: f64, settings: &IntegrationSettings) -> Result<f64> {
    sys.require_constant()?;
    let mono = monodromy(sys, lambda, settings)?;
    let periods = BRANCH_PERIODS as f64;
    let wound = propagate_prufer(sys, lambda, 0.0, 0.0, periods * sys.period(), settings)?;
    Ok(quasimomentum_from(&mono, wound.theta / periods))
}

/// Combine a monodromy matrix with a winding estimate `k_hat` that is known
/// to be within π/2 of the true quasimomentum.
pub(crate) fn quasimomentum_from(mono: &TransferMatrix, k_hat: f64) -> f64 {
    let d = mono.trace();
    if d.abs() < 2.0 {
        // In Prüfer coordinates (cos θ, -sin θ) an elliptic monodromy turns
        // vectors by +ψ when the lower-left entry is negative.
        let phi = (0.5 * d).acos();
        let psi = if mono.c < 0.0 { phi } else { TAU - phi };
        let j = ((k_hat - psi) / TAU).round();
        j * TAU + psi
    } else {
        // + 0.0 turns -0 into 0 in the gap with k = 0
        PI * (k_hat / PI).round() + 0.0
    }
}

/// `(θ(nα) - θ(0)) / n` for the solution starting at `θ(0) = 0`.
pub fn rotation_number(
    sys: &DiracSystem,
    lambda: f64,
    n_periods: usize,
    settings: &IntegrationSettings,
) -> Result<f64> {
    if n_periods == 0 {
        return Err(Error::InvalidArgument("n_periods must be at least 1".into()));
    }
    let n = n_periods as f64;
    let end = propagate_prufer(sys, lambda, 0.0, 0.0, n * sys.period(), settings)?;
    Ok(end.theta / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    /// `D = +2`: periodic edge.
    Periodic,
    /// `D = -2`: antiperiodic edge.
    Antiperiodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandEdge {
    pub lambda: f64,
    pub kind: EdgeKind,
}

/// Stability interval with `n π < k < (n + 1) π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub left: f64,
    pub right: f64,
    pub index: i64,
}

/// Instability interval (clipped to the window) on which `k = nπ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub left: f64,
    pub right: f64,
    pub index: i64,
}

impl Gap {
    pub fn quasimomentum(&self) -> f64 {
        self.index as f64 * PI
    }

    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.left < lo && hi < self.right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandStructure {
    pub coupling: f64,
    pub window: (f64, f64),
    pub edges: Vec<BandEdge>,
    pub bands: Vec<Band>,
    pub gaps: Vec<Gap>,
    pub warnings: Vec<String>,
}

impl BandStructure {
    /// The gap whose interior contains `[lo, hi]`, if any. Gaps are clipped to
    /// the window, so the window should extend past the interval of interest.
    pub fn gap_containing(&self, lo: f64, hi: f64) -> Option<&Gap> {
        self.gaps.iter().find(|g| g.contains(lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSettings {
    /// Scan density in grid points per unit λ.
    pub points_per_unit: f64,
    /// Bisection stops when the bracket is narrower than this.
    pub bisect_tol: f64,
    /// `||D| - 2|` below this at a local extremum is reported as a possible
    /// degenerate edge.
    pub degenerate_tol: f64,
}

impl Default for EdgeSettings {
    fn default() -> Self {
        Self {
            points_per_unit: 512.0,
            bisect_tol: 1e-10,
            degenerate_tol: 1e-6,
        }
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: &impl Fn(f64) -> Result<f64>, tol: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for the minimizer of `f` on `[lo, hi]`.
fn golden_min(mut lo: f64, mut hi: f64, f: &impl Fn(f64) -> Result<f64>, tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Locate the band edges (roots of `D ∓ 2`) of the constant-coupling system
/// inside `window` and label the intervals between them.
pub fn band_edges(
    sys: &DiracSystem,
    window: (f64, f64),
    settings: &IntegrationSettings,
    edge_settings: &EdgeSettings,
) -> Result<BandStructure> {
    let l = sys.require_constant()?;
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad λ window [{lo}, {hi}]")));
    }
    let n = ((hi - lo) * edge_settings.points_per_unit).ceil().max(1.0) as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let disc = |x: f64| discriminant(sys, x, settings);
    let values: Vec<f64> = grid.iter().map(|&x| disc(x)).collect::<Result<_>>()?;

    let mut edges = Vec::new();
    let mut warnings = Vec::new();
    let tol = edge_settings.bisect_tol;
    let plus = |x: f64| disc(x).map(|d| d - 2.0);
    let minus = |x: f64| disc(x).map(|d| d + 2.0);
    for i in 0..n - 1 {
        let (x0, x1, d0, d1) = (grid[i], grid[i + 1], values[i], values[i + 1]);
        if (d0 - 2.0) * (d1 - 2.0) < 0.0 {
            edges.push(BandEdge {
                lambda: bisect(x0, x1, &plus, tol)?,
                kind: EdgeKind::Periodic,
            });
        }
        if (d0 + 2.0) * (d1 + 2.0) < 0.0 {
            edges.push(BandEdge {
                lambda: bisect(x0, x1, &minus, tol)?,
                kind: EdgeKind::Antiperiodic,
            });
        }
        if d0 == 2.0 || d0 == -2.0 {
            let kind = if d0 > 0.0 {
                EdgeKind::Periodic
            } else {
                EdgeKind::Antiperiodic
            };
            edges.push(BandEdge { lambda: x0, kind });
        }
    }

    // Local extrema of |D| - 2 near zero hide thin bands/gaps or closed gaps.
    let excess = |x: f64| disc(x).map(|d| d.abs() - 2.0);
    let neg_excess = |x: f64| disc(x).map(|d| 2.0 - d.abs());
    for i in 1..n - 1 {
        let g: Vec<f64> = values[i - 1..=i + 1].iter().map(|d| d.abs() - 2.0).collect();
        let same_sign = g.iter().all(|v| *v > 0.0) || g.iter().all(|v| *v < 0.0);
        if !same_sign {
            continue;
        }
        let gap_side = g[1] > 0.0;
        let is_min = g[1] <= g[0] && g[1] <= g[2];
        let is_max = g[1] >= g[0] && g[1] >= g[2];
        if !((gap_side && is_min) || (!gap_side && is_max)) {
            continue;
        }
        let (a, b) = (grid[i - 1], grid[i + 1]);
        let (x_ext, f_ext) = if gap_side {
            golden_min(a, b, &excess, tol)?
        } else {
            golden_min(a, b, &neg_excess, tol)?
        };
        let d_ext = disc(x_ext)?;
        let kind = if d_ext > 0.0 {
            EdgeKind::Periodic
        } else {
            EdgeKind::Antiperiodic
        };
        if f_ext < 0.0 {
            // the extremum crosses |D| = 2: two edges the grid stepped over
            let f = if gap_side {
                &excess as &dyn Fn(f64) -> Result<f64>
            } else {
                &neg_excess
            };
            let g = |x: f64| f(x);
            edges.push(BandEdge {
                lambda: bisect(a, x_ext, &g, tol)?,
                kind,
            });
            edges.push(BandEdge {
                lambda: bisect(x_ext, b, &g, tol)?,
                kind,
            });
        } else if f_ext < edge_settings.degenerate_tol {
            warnings.push(format!(
                "possible degenerate band edge near λ = {x_ext:.10} (|D| - 2 = {:.3e})",
                d_ext.abs() - 2.0
            ));
        }
    }

    edges.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    edges.dedup_by(|b, a| (b.lambda - a.lambda).abs() <= 10.0 * tol);

    let mut cuts = vec![lo];
    cuts.extend(edges.iter().map(|e| e.lambda).filter(|&x| x > lo && x < hi));
    cuts.push(hi);
    let mut bands = Vec::new();
    let mut gaps = Vec::new();
    let mut last_k = f64::NEG_INFINITY;
    for w in cuts.windows(2) {
        let (left, right) = (w[0], w[1]);
        if right - left <= 0.0 {
            continue;
        }
        let mid = 0.5 * (left + right);
        let k = quasimomentum(sys, mid, settings)?;
        if k < last_k {
            warnings.push(format!("quasimomentum decreased across λ = {left:.10}"));
        }
        last_k = k;
        let index = (k / PI).floor() as i64;
        if disc(mid)?.abs() < 2.0 {
            bands.push(Band { left, right, index });
        } else {
            gaps.push(Gap {
                left,
                right,
                index: (k / PI).round() as i64,
            });
        }
    }
    Ok(BandStructure {
        coupling: l,
        window,
        edges,
        bands,
        gaps,
        warnings,
    })
}

/// Monodromy eigen-data at a λ with simple multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetData {
    pub monodromy: TransferMatrix,
    pub discriminant: f64,
    /// `μ₁, μ₂` with `μ₁ μ₂ = 1`; conjugate pair on the unit circle in a band.
    pub multipliers: [Complex64; 2],
    /// Initial values of the Floquet solutions, unit norm.
    pub initial_vectors: [[Complex64; 2]; 2],
    /// Present when `|D| < 2`.
    pub quasimomentum: Option<f64>,
}

impl FloquetData {
    pub fn is_stable(&self) -> bool {
        self.discriminant.abs() < 2.0
    }

    /// Largest relative residual of `u(jα) = μʲ u(0)` for `j = 1..=periods`
    /// over both Floquet solutions.
    pub fn periodicity_residual(
        &self,
        sys: &DiracSystem,
        lambda: f64,
        periods: usize,
        settings: &IntegrationSettings,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (mu, v) in self.multipliers.iter().zip(&self.initial_vectors) {
            for j in 1..=periods {
                let t = transfer_matrix(sys, lambda, 0.0, j as f64 * sys.period(), settings)?;
                let u = apply_complex(&t, v);
                let expected = mu.powi(j as i32);
                let err = ((u[0] - expected * v[0]).norm()).max((u[1] - expected * v[1]).norm());
                worst = worst.max(err / expected.norm().max(1.0));
            }
        }
        Ok(worst)
    }
}

pub(crate) fn apply_complex(t: &TransferMatrix, v: &[Complex64; 2]) -> [Complex64; 2] {
    [v[0] * t.a + v[1] * t.b, v[0] * t.c + v[1] * t.d]
}

/// Floquet multipliers and solutions. Refuses `|D| = 2` where the monodromy
/// may be defective.
pub fn floquet_solution(sys: &DiracSystem, lambda: f64, settings: &IntegrationSettings) -> Result<FloquetData> {
    sys.require_constant()?;
    const DEGENERACY_TOL: f64 = 1e-9;
    let mono = monodromy(sys, lambda, settings)?;
    let d = mono.trace();
    if (d.abs() - 2.0).abs() < DEGENERACY_TOL {
        return Err(Error::DegenerateMonodromy(DEGENERACY_TOL));
    }
    let half = Complex64::new(0.5 * d, 0.0);
    let root = Complex64::new(0.25 * d * d - 1.0, 0.0).sqrt();
    let multipliers = [half + root, half - root];
    let initial_vectors = multipliers.map(|mu| eigenvector(&mono, mu));
    let quasimomentum = if d.abs() < 2.0 {
        Some(quasimomentum(sys, lambda, settings)?)
    } else {
        None
    };
    Ok(FloquetData {
        monodromy: mono,
        discriminant: d,
        multipliers,
        initial_vectors,
        quasimomentum,
    })
}

fn eigenvector(m: &TransferMatrix, mu: Complex64) -> [Complex64; 2] {
    // rows of (M - μ) give two candidate null vectors; keep the larger one
    let v1 = [Complex64::new(m.b, 0.0), mu - m.a];
    let v2 = [mu - m.d, Complex64::new(m.c, 0.0)];
    let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
    let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
    let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
    let s = 1.0 / n.sqrt();
    [v[0] * s, v[1] * s]
}
