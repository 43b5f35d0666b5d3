//! Propagation of the first-order Dirac system.
//!
//! Writing `τu = λu` componentwise gives `u' = A(x) u` with the traceless
//! coefficient matrix
//!
//! ```text
//! A = [[-l,  λ + m - q],
//!      [m + q - λ,   l]]
//! ```
//!
//! Two representations of a solution are provided: 2×2 transfer matrices and
//! the Prüfer form `u = R (cos θ, -sin θ)`, whose angle obeys
//! `θ' = λ - q - m cos 2θ + l sin 2θ` and `(log R)' = -l cos 2θ - m sin 2θ`.
//!
//! When the potential is piecewise constant and the coupling is constant,
//! both are computed from exact matrix exponentials and carry no truncation
//! error. Everything else uses classical RK4 on a fixed mesh aligned with
//! the potential's breakpoints; the mesh is refined by step doubling until
//! two successive results agree to the requested tolerance.

use std::f64::consts::FRAC_PI_4;
use std::ops::Mul;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::DiracSystem;

/// Real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Maps solution values `u(x₀) ↦ u(x₁)`; its columns are the solutions with
/// initial values `e₁`, `e₂`.
pub type TransferMatrix = Mat2;

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn add(&self, o: &Mat2) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, o: &Mat2) -> f64 {
        (self.a - o.a)
            .abs()
            .max((self.b - o.b).abs())
            .max((self.c - o.c).abs())
            .max((self.d - o.d).abs())
    }

    pub fn to_array(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.c, self.d]]
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

/// Coefficient matrix of `u' = A u` at a point where the potential is `q`
/// and the coupling is `l`.
pub fn coefficient_matrix(lambda: f64, l: f64, q: f64, mass: f64) -> Mat2 {
    Mat2::new(-l, lambda + mass - q, mass + q - lambda, l)
}

/// `exp(h A)` for traceless `A`, from `A² = -det(A) I`.
pub fn constant_step(a: &Mat2, h: f64) -> TransferMatrix {
    // for traceless A, det A = -a² - bc
    let det = -a.a * a.a - a.b * a.c;
    if det > 0.0 {
        let w = det.sqrt();
        let (s, c) = (w * h).sin_cos();
        Mat2::IDENTITY.scale(c).add(&a.scale(s / w))
    } else if det < 0.0 {
        let w = (-det).sqrt();
        Mat2::IDENTITY.scale((w * h).cosh()).add(&a.scale((w * h).sinh() / w))
    } else {
        Mat2::IDENTITY.add(&a.scale(h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact stepper when the coefficients are piecewise constant, RK4 otherwise.
    #[default]
    Auto,
    /// Always RK4, even where the exact stepper applies.
    Rk4,
}

/// Fixed-step integration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrationSettings {
    /// Agreement required between two successive mesh refinements.
    pub tol: f64,
    /// Initial number of RK4 steps per period.
    pub steps_per_period: usize,
    /// How many times the mesh may be halved before giving up.
    pub max_refinements: u32,
    pub method: Method,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            steps_per_period: 64,
            max_refinements: 10,
            method: Method::Auto,
        }
    }
}

impl IntegrationSettings {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.steps_per_period == 0 {
            return Err(Error::InvalidArgument(
                "integration needs tol > 0 and steps_per_period >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Prüfer coordinates of a real solution, `u = R (cos θ, -sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferState {
    /// Unwrapped angle; never reduced mod π.
    pub theta: f64,
    pub log_r: f64,
}

/// Prüfer angle of a nonzero vector in `(-π, π]`.
pub fn vector_angle(v: [f64; 2]) -> f64 {
    (-v[1]).atan2(v[0])
}

/// Intervals between consecutive breakpoints of the potential on `[x0, x1]`.
fn smooth_pieces(sys: &DiracSystem, x0: f64, x1: f64) -> Vec<(f64, f64)> {
    let mut pts = vec![x0];
    pts.extend(sys.potential().breakpoints(x0, x1));
    pts.push(x1);
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Potential value to use inside the piece `[xa, xb]`: the piece value for
/// piecewise-constant potentials, so a step ending on a jump does not pick
/// up the next piece.
struct PieceCoefficients<'a> {
    sys: &'a DiracSystem,
    frozen_q: Option<f64>,
}

impl<'a> PieceCoefficients<'a> {
    fn new(sys: &'a DiracSystem, xa: f64, xb: f64) -> Self {
        let frozen_q = sys
            .potential()
            .is_piecewise_constant()
            .then(|| sys.potential().eval(0.5 * (xa + xb)));
        Self { sys, frozen_q }
    }

    #[inline]
    fn q(&self, x: f64) -> f64 {
        self.frozen_q.unwrap_or_else(|| self.sys.potential().eval(x))
    }

    #[inline]
    fn l(&self, x: f64) -> f64 {
        self.sys.coupling().at(x)
    }
}

fn check_range(x0: f64, x1: f64) -> Result<()> {
    if !(x0.is_finite() && x1.is_finite()) || x1 < x0 {
        return Err(Error::InvalidArgument(format!("need x0 <= x1, got [{x0}, {x1}]")));
    }
    Ok(())
}

fn use_exact(sys: &DiracSystem, settings: &IntegrationSettings) -> bool {
    settings.method == Method::Auto && sys.has_exact_stepper()
}

/// Transfer matrix of the system from `x0` to `x1`.
pub fn transfer_matrix(
    sys: &DiracSystem,
    lambda: f64,
    x0: f64,
    x1: f64,
    settings: &IntegrationSettings,
) -> Result<TransferMatrix> {
    check_range(x0, x1)?;
    settings.validate()?;
    if x1 == x0 {
        return Ok(Mat2::IDENTITY);
    }
    if use_exact(sys, settings) {
        return Ok(exact_transfer(sys, lambda, x0, x1));
    }
    refine(
        settings,
        sys.period(),
        |h| rk4_transfer(sys, lambda, x0, x1, h),
        |a, b| a.max_diff(b) / a.max_abs().max(1.0),
    )
}

/// One-period transfer matrix starting at 0.
pub fn monodromy(sys: &DiracSystem, lambda: f64, settings: &IntegrationSettings) -> Result<TransferMatrix> {
    transfer_matrix(sys, lambda, 0.0, sys.period(), settings)
}

/// Step-doubling driver: evaluates `run` on successively halved meshes until
/// two consecutive results are within `tol` under `dist`.
fn refine<T>(
    settings: &IntegrationSettings,
    period: f64,
    run: impl Fn(f64) -> T,
    dist: impl Fn(&T, &T) -> f64,
) -> Result<T> {
    let mut steps = settings.steps_per_period;
    let mut prev = run(period / steps as f64);
    for _ in 0..settings.max_refinements {
        steps *= 2;
        let next = run(period / steps as f64);
        if dist(&next, &prev) <= settings.tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::StepUnderflow {
        tol: settings.tol,
        steps,
    })
}

fn exact_transfer(sys: &DiracSystem, lambda: f64, x0: f64, x1: f64) -> TransferMatrix {
    let l = sys.constant_coupling().unwrap_or(0.0);
    let m = sys.mass();
    smooth_pieces(sys, x0, x1)
        .into_iter()
        .fold(Mat2::IDENTITY, |acc, (xa, xb)| {
            let q = sys.potential().eval(0.5 * (xa + xb));
            constant_step(&coefficient_matrix(lambda, l, q, m), xb - xa) * acc
        })
}

fn rk4_transfer(sys: &DiracSystem, lambda: f64, x0: f64, x1: f64, h_target: f64) -> TransferMatrix {
    let m = sys.mass();
    let mut y = Mat2::IDENTITY;
    for (xa, xb) in smooth_pieces(sys, x0, x1) {
        let coef = PieceCoefficients::new(sys, xa, xb);
        let n = ((xb - xa) / h_target).ceil().max(1.0) as usize;
        let h = (xb - xa) / n as f64;
        let at = |x: f64| coefficient_matrix(lambda, coef.l(x), coef.q(x), m);
        for i in 0..n {
            let x = xa + i as f64 * h;
            let (a0, a1, a2) = (at(x), at(x + 0.5 * h), at(x + h));
            let k1 = a0 * y;
            let k2 = a1 * y.add(&k1.scale(0.5 * h));
            let k3 = a1 * y.add(&k2.scale(0.5 * h));
            let k4 = a2 * y.add(&k3.scale(h));
            y = y.add(&k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4).scale(h / 6.0));
        }
    }
    y
}

/// Advance the Prüfer angle from `theta0` at `x0` to `x1`.
pub fn propagate_prufer(
    sys: &DiracSystem,
    lambda: f64,
    theta0: f64,
    x0: f64,
    x1: f64,
    settings: &IntegrationSettings,
) -> Result<PruferState> {
    check_range(x0, x1)?;
    settings.validate()?;
    let start = PruferState {
        theta: theta0,
        log_r: 0.0,
    };
    if x1 == x0 {
        return Ok(start);
    }
    if use_exact(sys, settings) {
        return Ok(exact_prufer(sys, lambda, start, x0, x1));
    }
    refine(
        settings,
        sys.period(),
        |h| rk4_prufer(sys, lambda, start, x0, x1, h),
        |a, b| (a.theta - b.theta).abs(),
    )
}

/// Tracks the exactly propagated vector in small enough sub-steps that the
/// angle moves by less than π/4 per step, so unwrapping is unambiguous.
fn exact_prufer(sys: &DiracSystem, lambda: f64, start: PruferState, x0: f64, x1: f64) -> PruferState {
    let l = sys.constant_coupling().unwrap_or(0.0);
    let m = sys.mass();
    let mut theta = start.theta;
    let mut log_r = start.log_r;
    let mut v = [theta.cos(), -theta.sin()];
    for (xa, xb) in smooth_pieces(sys, x0, x1) {
        let q = sys.potential().eval(0.5 * (xa + xb));
        // |θ'| <= |λ - q| + sqrt(m² + l²)
        let speed = (lambda - q).abs() + m.hypot(l);
        let n = ((xb - xa) * speed / FRAC_PI_4).ceil().max(1.0) as usize;
        let step = constant_step(&coefficient_matrix(lambda, l, q, m), (xb - xa) / n as f64);
        for _ in 0..n {
            let w = step.apply(v);
            theta += wrapped_delta(vector_angle(v), vector_angle(w));
            let norm = w[0].hypot(w[1]);
            log_r += norm.ln();
            v = [w[0] / norm, w[1] / norm];
        }
    }
    PruferState { theta, log_r }
}

/// Signed angle change in `(-π, π]` between two directions.
pub(crate) fn wrapped_delta(from: f64, to: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (to - from).rem_euclid(two_pi);
    if d > std::f64::consts::PI {
        d - two_pi
    } else {
        d
    }
}

fn rk4_prufer(sys: &DiracSystem, lambda: f64, start: PruferState, x0: f64, x1: f64, h_target: f64) -> PruferState {
    let m = sys.mass();
    let (mut theta, mut log_r) = (start.theta, start.log_r);
    let mut carry = 0.0;
    for (xa, xb) in smooth_pieces(sys, x0, x1) {
        let coef = PieceCoefficients::new(sys, xa, xb);
        let n = ((xb - xa) / h_target).ceil().max(1.0) as usize;
        let h = (xb - xa) / n as f64;
        let rhs = |x: f64, th: f64| {
            let (s, c) = (2.0 * th).sin_cos();
            let l = coef.l(x);
            (lambda - coef.q(x) - m * c + l * s, -l * c - m * s)
        };
        for i in 0..n {
            let x = xa + i as f64 * h;
            let k1 = rhs(x, theta);
            let k2 = rhs(x + 0.5 * h, theta + 0.5 * h * k1.0);
            let k3 = rhs(x + 0.5 * h, theta + 0.5 * h * k2.0);
            let k4 = rhs(x + h, theta + h * k3.0);
            // compensated sum: θ grows linearly and long runs would otherwise
            // lose the tolerance to rounding
            let dt = h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) - carry;
            let next = theta + dt;
            carry = (next - theta) - dt;
            theta = next;
            log_r += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
    }
    PruferState { theta, log_r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{Coupling, PeriodicPotential, PerturbationTemplate};
    use proptest::prelude::*;
    use std::sync::Arc;

    /// Scaling-and-squaring with a Taylor series, independent of the closed form.
    fn expm_oracle(a: &Mat2, h: f64) -> Mat2 {
        let mut s = 0;
        let mut x = a.scale(h);
        while x.max_abs() > 0.05 {
            x = x.scale(0.5);
            s += 1;
        }
        let mut term = Mat2::IDENTITY;
        let mut sum = Mat2::IDENTITY;
        for k in 1..20 {
            term = (term * x).scale(1.0 / k as f64);
            sum = sum.add(&term);
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    fn free() -> DiracSystem {
        DiracSystem::new(1.0, PeriodicPotential::zero(1.0).unwrap(), Coupling::Constant(0.0)).unwrap()
    }

    fn two_step() -> DiracSystem {
        let p = PeriodicPotential::piecewise_constant(&[(0.5, 0.0), (0.5, 4.0)]).unwrap();
        DiracSystem::new(1.0, p, Coupling::Constant(0.0)).unwrap()
    }

    #[test]
    fn coefficient_matrix_examples() {
        assert_eq!(coefficient_matrix(0.0, 0.0, 0.0, 1.0), Mat2::new(0.0, 1.0, 1.0, 0.0));
        let a = coefficient_matrix(2.0, 0.5, 4.0, 1.0);
        assert_eq!(a, Mat2::new(-0.5, -1.0, 3.0, 0.5));
        assert_eq!(a.trace(), 0.0);
    }

    /// Substitute a numerically integrated solution back into the original
    /// two-component equation `-i σ₂ u' + (m σ₃ + q + l σ₁) u = λ u`.
    #[test]
    fn coefficient_matrix_solves_original_equation() {
        let (lambda, l, q, m) = (2.0, 0.5, 4.0, 1.0);
        let a = coefficient_matrix(lambda, l, q, m);
        let u = |x: f64| constant_step(&a, x).apply([0.3, -0.8]);
        let h = 1e-5;
        for &x in &[0.1, 0.4, 0.9] {
            let (up, um, u0) = (u(x + h), u(x - h), u(x));
            let du = [(up[0] - um[0]) / (2.0 * h), (up[1] - um[1]) / (2.0 * h)];
            // -iσ₂ = [[0, -1], [1, 0]]
            let r1 = -du[1] + (m + q) * u0[0] + l * u0[1] - lambda * u0[0];
            let r2 = du[0] + l * u0[0] + (q - m) * u0[1] - lambda * u0[1];
            assert!(r1.abs() < 1e-8 && r2.abs() < 1e-8, "{r1} {r2}");
        }
    }

    #[test]
    fn constant_step_examples() {
        let e = constant_step(&Mat2::new(0.0, 1.0, 1.0, 0.0), 1.0);
        let oracle = expm_oracle(&Mat2::new(0.0, 1.0, 1.0, 0.0), 1.0);
        assert!(e.max_diff(&oracle) < 1e-13);
        assert!((e.a - 1.5430806348152437).abs() < 1e-15);
        assert!((e.b - 1.1752011936438014).abs() < 1e-15);

        assert_eq!(constant_step(&Mat2::new(0.0, 0.0, 0.0, 0.0), 0.7), Mat2::IDENTITY);

        let a = Mat2::new(0.0, 3.0, -1.0, 0.0);
        let e = constant_step(&a, 0.5);
        assert!(e.max_diff(&expm_oracle(&a, 0.5)) < 1e-13);
        assert!((e.a - 0.6479).abs() < 5e-5 && (e.b - 1.3194).abs() < 5e-5);
        assert!((e.c + 0.4398).abs() < 5e-5 && (e.d - 0.6479).abs() < 5e-5);
    }

    #[test]
    fn parabolic_step_is_linear() {
        let a = Mat2::new(1.0, -1.0, 1.0, -1.0);
        let e = constant_step(&a, 2.0);
        assert_eq!(e, Mat2::new(3.0, -2.0, 2.0, -1.0));
        assert_eq!(e.det(), 1.0);
    }

    #[test]
    fn free_and_two_step_traces() {
        let s = IntegrationSettings::default();
        let t = transfer_matrix(&free(), 2.0, 0.0, 1.0, &s).unwrap();
        assert!((t.trace() - 2.0 * 3f64.sqrt().cos()).abs() < 1e-14);

        let m = monodromy(&two_step(), 2.0, &s).unwrap();
        let oracle = constant_step(&coefficient_matrix(2.0, 0.0, 4.0, 1.0), 0.5)
            * constant_step(&coefficient_matrix(2.0, 0.0, 0.0, 1.0), 0.5);
        assert!(m.max_diff(&oracle) < 1e-14);
        assert!((m.trace() - 2.774).abs() < 1e-3);
        assert!((m.det() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_range_is_identity_and_reversed_range_errors() {
        let s = IntegrationSettings::default();
        assert_eq!(transfer_matrix(&two_step(), 1.3, 0.4, 0.4, &s).unwrap(), Mat2::IDENTITY);
        assert!(transfer_matrix(&two_step(), 1.3, 0.5, 0.4, &s).is_err());
        let p = propagate_prufer(&two_step(), 1.3, 0.2, 0.4, 0.4, &s).unwrap();
        assert_eq!(p.theta, 0.2);
    }

    #[test]
    fn rk4_matches_exact_and_has_fourth_order() {
        let sys = two_step().with_constant_coupling(0.7);
        let exact = monodromy(&sys, 1.7, &IntegrationSettings::default()).unwrap();
        let e1 = rk4_transfer(&sys, 1.7, 0.0, 1.0, 1.0 / 16.0).max_diff(&exact);
        let e2 = rk4_transfer(&sys, 1.7, 0.0, 1.0, 1.0 / 32.0).max_diff(&exact);
        assert!(e1 / e2 >= 16.0 * 0.9, "ratio {}", e1 / e2);
        let forced = IntegrationSettings {
            method: Method::Rk4,
            tol: 1e-11,
            ..Default::default()
        };
        assert!(monodromy(&sys, 1.7, &forced).unwrap().max_diff(&exact) < 1e-10);
    }

    #[test]
    fn step_underflow_is_reported() {
        let s = IntegrationSettings {
            tol: 1e-300,
            max_refinements: 1,
            method: Method::Rk4,
            ..Default::default()
        };
        assert!(matches!(
            transfer_matrix(&two_step(), 3.0, 0.0, 1.0, &s),
            Err(Error::StepUnderflow { .. })
        ));
    }

    #[test]
    fn prufer_fixed_point() {
        let s = IntegrationSettings::default();
        // the fixed direction is repelling: rounding grows like e^(2x)
        for x1 in [0.3, 1.0, 7.5] {
            let p = propagate_prufer(&free(), 0.0, FRAC_PI_4, 0.0, x1, &s).unwrap();
            assert!((p.theta - FRAC_PI_4).abs() < 1e-14 * (2.0 * x1).exp());
        }
    }

    #[test]
    fn free_rotation_rate() {
        let s = IntegrationSettings::default();
        let p = propagate_prufer(&free(), 2.0, 0.0, 0.0, 100.0, &s).unwrap();
        assert!((p.theta / 100.0 - 3f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn log_amplitude_matches_matrix() {
        let sys = two_step().with_constant_coupling(-0.4);
        let s = IntegrationSettings::default();
        let t = transfer_matrix(&sys, 0.0, 0.0, 3.0, &s).unwrap();
        let p = propagate_prufer(&sys, 0.0, 0.3, 0.0, 3.0, &s).unwrap();
        let v = t.apply([0.3f64.cos(), -0.3f64.sin()]);
        assert!((p.log_r - v[0].hypot(v[1]).ln()).abs() < 1e-12);

        let forced = IntegrationSettings {
            method: Method::Rk4,
            tol: 1e-10,
            ..Default::default()
        };
        let p = propagate_prufer(&sys, 0.0, 0.3, 0.0, 3.0, &forced).unwrap();
        assert!((p.log_r - v[0].hypot(v[1]).ln()).abs() < 1e-8);
    }

    fn profile_system() -> DiracSystem {
        let t = Arc::new(PerturbationTemplate::inverse_power(1.0).unwrap());
        two_step().with_profile(t, 3.0)
    }

    #[test]
    fn profile_coupling_uses_rk4_and_keeps_det() {
        let sys = profile_system();
        let s = IntegrationSettings::default();
        let t = transfer_matrix(&sys, 5.2, 1.0, 6.0, &s).unwrap();
        assert!((t.det() - 1.0).abs() < 1e-9);
        let p = propagate_prufer(&sys, 5.2, 0.1, 1.0, 6.0, &s).unwrap();
        let v = t.apply([0.1f64.cos(), -0.1f64.sin()]);
        let d = wrapped_delta(vector_angle(v), p.theta).rem_euclid(std::f64::consts::PI);
        assert!(d.min(std::f64::consts::PI - d) < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn det_is_one_for_random_piecewise(
            lambda in -8.0f64..8.0,
            l in -3.0f64..3.0,
            vals in proptest::collection::vec((0.05f64..1.0, -5.0f64..5.0), 1..5),
        ) {
            let p = PeriodicPotential::piecewise_constant(&vals).unwrap();
            let sys = DiracSystem::new(1.0, p, Coupling::Constant(l)).unwrap();
            let t = monodromy(&sys, lambda, &IntegrationSettings::default()).unwrap();
            prop_assert!((t.det() - 1.0).abs() <= 1e-10 * t.max_abs().powi(2).max(1.0));
        }

        #[test]
        fn composition(lambda in -6.0f64..6.0, l in -2.0f64..2.0, x1 in 0.1f64..2.9) {
            let sys = two_step().with_constant_coupling(l);
            let s = IntegrationSettings::default();
            let full = transfer_matrix(&sys, lambda, 0.0, 3.0, &s).unwrap();
            let split = transfer_matrix(&sys, lambda, x1, 3.0, &s).unwrap()
                * transfer_matrix(&sys, lambda, 0.0, x1, &s).unwrap();
            prop_assert!(full.max_diff(&split) <= 1e-10 * full.max_abs().max(1.0));
        }

        #[test]
        fn prufer_agrees_with_matrix_direction(
            lambda in -6.0f64..6.0,
            l in -2.0f64..2.0,
            theta0 in -3.0f64..3.0,
            x1 in 0.1f64..5.0,
        ) {
            for sys in [two_step().with_constant_coupling(l), {
                let p = PeriodicPotential::cosine_series(1.0, &[(0, 1.0), (1, 2.0)]).unwrap();
                DiracSystem::new(1.0, p, Coupling::Constant(l)).unwrap()
            }] {
                let s = IntegrationSettings::default();
                let t = transfer_matrix(&sys, lambda, 0.0, x1, &s).unwrap();
                let p = propagate_prufer(&sys, lambda, theta0, 0.0, x1, &s).unwrap();
                let v = t.apply([theta0.cos(), -theta0.sin()]);
                let d = (p.theta - vector_angle(v)).rem_euclid(std::f64::consts::PI);
                prop_assert!(d.min(std::f64::consts::PI - d) < 1e-6);
            }
        }
    }
}
