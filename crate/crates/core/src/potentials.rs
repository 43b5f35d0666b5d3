//! Periodic background potentials, decaying perturbation templates and the
//! Dirac systems built from them.
//!
//! A [`DiracSystem`] describes the first-order system
//!
//! ```text
//! -i σ₂ u' + m σ₃ u + q(x) u + l(x) σ₁ u = λ u
//! ```
//!
//! where `q` is periodic and the off-diagonal coupling `l` is either a
//! constant or a scaled template `l₀(x / c)`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// One piece of a piecewise-constant potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub length: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialShape {
    /// Constant pieces laid out from `x = 0`; lengths sum to the period.
    PiecewiseConstant(Vec<Segment>),
    /// `q(x) = Σ a_j cos(2π j x / α)` over `(j, a_j)` terms.
    CosineSeries(Vec<(u32, f64)>),
    /// Values at `x_i = i α / n`, linearly interpolated with wrap-around.
    Sampled(Vec<f64>),
}

/// A real α-periodic potential with a cached bound on `|q|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    period: f64,
    shape: PotentialShape,
    sup_norm: f64,
    // segment start offsets, piecewise-constant only
    starts: Vec<f64>,
}

impl PeriodicPotential {
    /// Build from `(length, value)` pieces. The period is the total length.
    pub fn piecewise_constant(segments: &[(f64, f64)]) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument(
                "piecewise-constant potential needs at least one segment".into(),
            ));
        }
        let mut segs = Vec::with_capacity(segments.len());
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for &(length, value) in segments {
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "segment length must be positive, got {length}"
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidArgument("segment value must be finite".into()));
            }
            starts.push(acc);
            acc += length;
            segs.push(Segment { length, value });
        }
        let sup_norm = segs.iter().map(|s| s.value.abs()).fold(0.0, f64::max);
        Ok(Self {
            period: acc,
            shape: PotentialShape::PiecewiseConstant(segs),
            sup_norm,
            starts,
        })
    }

    pub fn cosine_series(period: f64, terms: &[(u32, f64)]) -> Result<Self> {
        check_period(period)?;
        if terms.iter().any(|t| !t.1.is_finite()) {
            return Err(Error::InvalidArgument("cosine amplitudes must be finite".into()));
        }
        let sup_norm = terms.iter().map(|t| t.1.abs()).sum();
        Ok(Self {
            period,
            shape: PotentialShape::CosineSeries(terms.to_vec()),
            sup_norm,
            starts: Vec::new(),
        })
    }

    pub fn sampled(period: f64, values: &[f64]) -> Result<Self> {
        check_period(period)?;
        if values.is_empty() {
            return Err(Error::InvalidArgument(
                "sampled potential needs at least one sample".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        let sup_norm = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Ok(Self {
            period,
            shape: PotentialShape::Sampled(values.to_vec()),
            sup_norm,
            starts: Vec::new(),
        })
    }

    /// The zero potential as a single constant piece.
    pub fn zero(period: f64) -> Result<Self> {
        check_period(period)?;
        Self::piecewise_constant(&[(period, 0.0)])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn shape(&self) -> &PotentialShape {
        &self.shape
    }

    /// Upper bound for `|q(x)|` over all `x`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.shape, PotentialShape::PiecewiseConstant(_))
    }

    /// Replace the cached sup-norm bound; it may only be raised.
    pub fn with_sup_norm(mut self, bound: f64) -> Result<Self> {
        if !(bound >= self.sup_norm) {
            return Err(Error::InvalidArgument(format!(
                "sup-norm override {bound} is below the computed bound {}",
                self.sup_norm
            )));
        }
        self.sup_norm = bound;
        Ok(self)
    }

    /// Add a constant to every value of the potential.
    pub fn shifted(&self, shift: f64) -> Self {
        let shape = match &self.shape {
            PotentialShape::PiecewiseConstant(segs) => PotentialShape::PiecewiseConstant(
                segs.iter()
                    .map(|s| Segment {
                        length: s.length,
                        value: s.value + shift,
                    })
                    .collect(),
            ),
            PotentialShape::CosineSeries(terms) => {
                let mut terms = terms.clone();
                match terms.iter_mut().find(|t| t.0 == 0) {
                    Some(t) => t.1 += shift,
                    None => terms.push((0, shift)),
                }
                PotentialShape::CosineSeries(terms)
            }
            PotentialShape::Sampled(v) => PotentialShape::Sampled(v.iter().map(|x| x + shift).collect()),
        };
        let sup_norm = match &shape {
            PotentialShape::PiecewiseConstant(s) => s.iter().map(|s| s.value.abs()).fold(0.0, f64::max),
            PotentialShape::CosineSeries(t) => t.iter().map(|t| t.1.abs()).sum(),
            PotentialShape::Sampled(v) => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
        };
        Self {
            period: self.period,
            shape,
            sup_norm,
            starts: self.starts.clone(),
        }
    }

    /// `q(x mod α)`.
    pub fn eval(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.period);
        match &self.shape {
            PotentialShape::PiecewiseConstant(segs) => segs[self.segment_index(y)].value,
            PotentialShape::CosineSeries(terms) => terms
                .iter()
                .map(|&(j, a)| a * (2.0 * PI * f64::from(j) * y / self.period).cos())
                .sum(),
            PotentialShape::Sampled(v) => {
                let n = v.len();
                let t = y / self.period * n as f64;
                let i = (t.floor() as usize).min(n - 1);
                let frac = t - i as f64;
                v[i] * (1.0 - frac) + v[(i + 1) % n] * frac
            }
        }
    }

    fn segment_index(&self, y: f64) -> usize {
        // last start <= y
        match self.starts.binary_search_by(|s| s.partial_cmp(&y).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Points in `(x0, x1)` where `q` is not smooth, in increasing order.
    /// Piece boundaries for piecewise-constant, sample nodes for sampled,
    /// period boundaries for cosine series.
    pub fn breakpoints(&self, x0: f64, x1: f64) -> Vec<f64> {
        let offsets: Vec<f64> = match &self.shape {
            PotentialShape::PiecewiseConstant(_) => self.starts.clone(),
            PotentialShape::CosineSeries(_) => vec![0.0],
            PotentialShape::Sampled(v) => {
                let n = v.len();
                (0..n).map(|i| i as f64 * self.period / n as f64).collect()
            }
        };
        let first = (x0 / self.period).floor() as i64;
        let last = (x1 / self.period).ceil() as i64;
        let mut out = Vec::new();
        for p in first..=last {
            let base = p as f64 * self.period;
            for &o in &offsets {
                let x = base + o;
                if x > x0 && x < x1 {
                    out.push(x);
                }
            }
        }
        out
    }
}

fn check_period(period: f64) -> Result<()> {
    if period > 0.0 && period.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("period must be positive, got {period}")))
    }
}

/// The decaying profile `l₀` whose rescaling `l₀(r / c)` perturbs the
/// periodic system.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationTemplate {
    /// `l₀(ϱ) = ϱ^(-β)`.
    InversePower { beta: f64 },
    /// Bounded continuous profile from a table, linearly interpolated and
    /// held constant outside the tabulated range.
    Tabulated { rho: Vec<f64>, values: Vec<f64> },
}

impl PerturbationTemplate {
    pub fn inverse_power(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self::InversePower { beta })
        } else {
            Err(Error::Template(format!(
                "inverse-power exponent must be positive, got {beta}"
            )))
        }
    }

    pub fn tabulated(rho: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if rho.len() < 2 || rho.len() != values.len() {
            return Err(Error::Template(
                "table needs at least two (rho, value) rows of equal length".into(),
            ));
        }
        if rho[0] < 0.0 || rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Template(
                "table abscissae must be nonnegative and strictly increasing".into(),
            ));
        }
        if values.iter().chain(rho.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Template("table entries must be finite".into()));
        }
        Ok(Self::Tabulated { rho, values })
    }

    /// Whether `l₀(ϱ) → ∞` as `ϱ → 0`.
    pub fn is_singular(&self) -> bool {
        matches!(self, Self::InversePower { .. })
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            Self::InversePower { beta } => rho.powf(-beta),
            Self::Tabulated { rho: xs, values } => interpolate(xs, values, rho),
        }
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        match self {
            Self::InversePower { beta } => -beta * rho.powf(-beta - 1.0),
            Self::Tabulated { rho: xs, values } => {
                let h = 1e-6 * rho.abs().max(1e-3);
                let lo = (rho - h).max(xs[0].min(rho));
                let hi = rho + h;
                (interpolate(xs, values, hi) - interpolate(xs, values, lo)) / (hi - lo)
            }
        }
    }

    /// Largest `|l₀|` on `[rho_lo, rho_hi]`, exact for the supported kinds.
    pub fn max_abs_on(&self, rho_lo: f64, rho_hi: f64) -> f64 {
        match self {
            Self::InversePower { .. } => self.eval(rho_lo).abs().max(self.eval(rho_hi).abs()),
            Self::Tabulated { rho: xs, values } => {
                let mut m = self.eval(rho_lo).abs().max(self.eval(rho_hi).abs());
                for (x, v) in xs.iter().zip(values) {
                    if *x > rho_lo && *x < rho_hi {
                        m = m.max(v.abs());
                    }
                }
                m
            }
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&t| t <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Result of checking the regularity condition `limsup |l₀'| / l₀² < ∞` near 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HCheckReport {
    pub passes: bool,
    /// `max |l₀'| / l₀²` over the grid on `[rho_min, rho_hat]`.
    pub c_estimate: f64,
    /// The same estimate with `rho_min` halved once and twice.
    pub refined_estimates: [f64; 2],
    /// `c_estimate` rounded up to six significant digits.
    pub c_certified: f64,
}

const H_STABILITY_RTOL: f64 = 1e-9;

/// Estimate the constant in `|l₀'(ϱ)| / l₀²(ϱ) ≤ C` on `(rho_min, rho_hat)`.
///
/// The check passes when the estimate does not grow as `rho_min` is halved
/// twice, i.e. the ratio stays bounded towards 0.
pub fn validate_template(
    template: &PerturbationTemplate,
    rho_min: f64,
    rho_hat: f64,
    grid_n: usize,
) -> Result<HCheckReport> {
    if !(rho_min > 0.0 && rho_min < rho_hat && rho_hat.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < rho_min < rho_hat, got rho_min = {rho_min}, rho_hat = {rho_hat}"
        )));
    }
    if grid_n < 2 {
        return Err(Error::InvalidArgument("grid_n must be at least 2".into()));
    }
    let base = ratio_sup(template, rho_min, rho_hat, grid_n)?;
    let half = ratio_sup(template, rho_min / 2.0, rho_hat, grid_n + 1)?;
    let quarter = ratio_sup(template, rho_min / 4.0, rho_hat, grid_n + 2)?;
    let slack = 1.0 + H_STABILITY_RTOL;
    let passes = half <= base * slack && quarter <= half * slack;
    Ok(HCheckReport {
        passes,
        c_estimate: base,
        refined_estimates: [half, quarter],
        c_certified: round_up_sig(base, 6),
    })
}

fn ratio_sup(template: &PerturbationTemplate, lo: f64, hi: f64, n: usize) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for rho in geometric_grid(lo, hi, n) {
        let l = template.eval(rho);
        if l == 0.0 {
            return Err(Error::Template(format!(
                "l0 vanishes at rho = {rho}; ratio |l0'|/l0^2 undefined"
            )));
        }
        sup = sup.max(template.derivative(rho).abs() / (l * l));
    }
    Ok(sup)
}

/// `n` points from `lo` to `hi` inclusive, equally spaced in `log ϱ`.
pub(crate) fn geometric_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n).map(move |i| {
        if i == 0 {
            lo
        } else if i == n - 1 {
            hi
        } else {
            (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()
        }
    })
}

fn round_up_sig(x: f64, digits: i32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.log10().floor() as i32);
    // absorb last-bit noise so exact values like 1.0 stay put
    (x * scale * (1.0 - 1e-12)).ceil() / scale
}

/// How the σ₁ coefficient varies along the line.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Constant(f64),
    /// `l(r) = l₀(r / scale)`.
    Profile {
        template: Arc<PerturbationTemplate>,
        scale: f64,
    },
}

impl Coupling {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Coupling::Constant(l) => *l,
            Coupling::Profile { template, scale } => template.eval(x / scale),
        }
    }
}

/// `-i σ₂ d/dx + m σ₃ + q(x) + l(x) σ₁` with periodic `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracSystem {
    mass: f64,
    potential: Arc<PeriodicPotential>,
    coupling: Coupling,
}

impl DiracSystem {
    pub fn new(mass: f64, potential: PeriodicPotential, coupling: Coupling) -> Result<Self> {
        Self::with_shared(mass, Arc::new(potential), coupling)
    }

    pub fn with_shared(mass: f64, potential: Arc<PeriodicPotential>, coupling: Coupling) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {mass}")));
        }
        match &coupling {
            Coupling::Constant(l) if !l.is_finite() => {
                return Err(Error::InvalidArgument("coupling must be finite".into()))
            }
            Coupling::Profile { scale, .. } if !(*scale > 0.0 && scale.is_finite()) => {
                return Err(Error::InvalidArgument(format!(
                    "profile scale must be positive, got {scale}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            mass,
            potential,
            coupling,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential(&self) -> &PeriodicPotential {
        &self.potential
    }

    pub fn shared_potential(&self) -> &Arc<PeriodicPotential> {
        &self.potential
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn period(&self) -> f64 {
        self.potential.period()
    }

    /// The constant coupling, if the system has one.
    pub fn constant_coupling(&self) -> Option<f64> {
        match self.coupling {
            Coupling::Constant(l) => Some(l),
            Coupling::Profile { .. } => None,
        }
    }

    /// Same background with a different coupling.
    pub fn with_coupling(&self, coupling: Coupling) -> Self {
        Self {
            mass: self.mass,
            potential: Arc::clone(&self.potential),
            coupling,
        }
    }

    pub fn with_constant_coupling(&self, l: f64) -> Self {
        self.with_coupling(Coupling::Constant(l))
    }

    pub fn with_profile(&self, template: Arc<PerturbationTemplate>, scale: f64) -> Self {
        self.with_coupling(Coupling::Profile { template, scale })
    }

    /// Both coefficients are constant on each potential piece.
    pub(crate) fn has_exact_stepper(&self) -> bool {
        self.potential.is_piecewise_constant() && matches!(self.coupling, Coupling::Constant(_))
    }

    /// Require a constant coupling; band quantities are only defined then.
    pub(crate) fn require_constant(&self) -> Result<f64> {
        self.constant_coupling()
            .ok_or_else(|| Error::InvalidArgument("operation needs a constant coupling, not a profile".into()))
    }
}

/// Evaluate the periodic potential.
pub fn eval_potential(potential: &PeriodicPotential, x: f64) -> f64 {
    potential.eval(x)
}
