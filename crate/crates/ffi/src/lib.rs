//! C interface to `dirac-gap`.
//!
//! Systems and templates are opaque heap handles created by `dg_*_new`
//! style functions and released with the matching `*_free`. Every fallible
//! function returns a [`DgStatus`] and writes results through out-pointers;
//! on failure [`dg_last_error_message`] describes the problem. Panics are
//! caught at the boundary and reported as [`DgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;
use std::sync::Arc;

use dirac_gap::asymptotics::{predicted_density, search_window, QuadratureSettings};
use dirac_gap::cli::SystemBlock;
use dirac_gap::counting::{count_halfline, count_interval, plan_truncation, BoundaryCondition, TruncationPlan};
use dirac_gap::floquet::{discriminant, quasimomentum, rotation_number};
use dirac_gap::integrate::IntegrationSettings;
use dirac_gap::potentials::{Coupling, DiracSystem, PeriodicPotential, PerturbationTemplate};
use dirac_gap::Error;

/// Tolerance used for half-line shooting runs.
const HALFLINE_TOL: f64 = 1e-7;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Precondition = 4,
    Numerical = 5,
    Panic = 6,
}

/// Opaque periodic Dirac system.
pub struct DgSystem(DiracSystem);

/// Opaque perturbation template.
pub struct DgTemplate(Arc<PerturbationTemplate>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(DgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::Template(_) => DgStatus::InvalidArgument,
            Error::Precondition(_) => DgStatus::Precondition,
            Error::StepUnderflow { .. } | Error::DegenerateMonodromy(_) | Error::Escalated(_) => DgStatus::Numerical,
            _ => DgStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DgStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DgStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn slice_in<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn dg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// System with a piecewise-constant potential taking `values[i]` on a
/// segment of length `lengths[i]`; the period is the total length.
///
/// # Safety
/// `lengths` and `values` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dg_system_new_piecewise(
    mass: f64,
    lengths: *const f64,
    values: *const f64,
    n: usize,
    coupling: f64,
    out: *mut *mut DgSystem,
) -> DgStatus {
    guard(|| {
        let lengths = slice_in(lengths, n, "lengths")?;
        let values = slice_in(values, n, "values")?;
        let segments: Vec<(f64, f64)> = lengths.iter().copied().zip(values.iter().copied()).collect();
        let pot = PeriodicPotential::piecewise_constant(&segments)?;
        let sys = DiracSystem::new(mass, pot, Coupling::Constant(coupling))?;
        write(out, Box::into_raw(Box::new(DgSystem(sys))), "out")
    })
}

/// System from the JSON `system` block of a run config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dg_system_from_json(json: *const c_char, out: *mut *mut DgSystem) -> DgStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure(DgStatus::Config, "json is not valid UTF-8".into()))?;
        let block: SystemBlock = serde_json::from_str(text).map_err(|e| Failure(DgStatus::Config, e.to_string()))?;
        let sys = block.build()?;
        write(out, Box::into_raw(Box::new(DgSystem(sys))), "out")
    })
}

/// # Safety
/// `sys` must come from a `dg_system_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dg_system_free(sys: *mut DgSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_discriminant(sys: *const DgSystem, lambda: f64, out: *mut f64) -> DgStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        write(
            out,
            discriminant(&sys.0, lambda, &IntegrationSettings::default())?,
            "out",
        )
    })
}

/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_quasimomentum(sys: *const DgSystem, lambda: f64, out: *mut f64) -> DgStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        write(
            out,
            quasimomentum(&sys.0, lambda, &IntegrationSettings::default())?,
            "out",
        )
    })
}

/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_rotation_number(
    sys: *const DgSystem,
    lambda: f64,
    periods: usize,
    out: *mut f64,
) -> DgStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        write(
            out,
            rotation_number(&sys.0, lambda, periods, &IntegrationSettings::default())?,
            "out",
        )
    })
}

/// Eigenvalues in `(lambda1, lambda2]` on `[a, b]` with boundary angles
/// `bc_left`, `bc_right` (condition `u1 sin β + u2 cos β = 0`).
///
/// # Safety
/// `sys` must be a live handle; `count` and `error_budget` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dg_count_interval(
    sys: *const DgSystem,
    a: f64,
    b: f64,
    bc_left: f64,
    bc_right: f64,
    lambda1: f64,
    lambda2: f64,
    count: *mut u64,
    error_budget: *mut u64,
) -> DgStatus {
    guard(|| {
        let sys = deref(sys, "sys")?;
        if count.is_null() || error_budget.is_null() {
            return Err(null("output pointer"));
        }
        let r = count_interval(
            &sys.0,
            a,
            b,
            BoundaryCondition::new(bc_left),
            BoundaryCondition::new(bc_right),
            lambda1,
            lambda2,
            &IntegrationSettings::default(),
        )?;
        write(count, r.count, "count")?;
        write(error_budget, r.error_budget, "error_budget")
    })
}

/// `l0(ϱ) = ϱ^(-beta)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dg_template_inverse_power(beta: f64, out: *mut *mut DgTemplate) -> DgStatus {
    guard(|| {
        let t = PerturbationTemplate::inverse_power(beta)?;
        write(out, Box::into_raw(Box::new(DgTemplate(Arc::new(t)))), "out")
    })
}

/// Linearly interpolated table, held constant outside its range.
///
/// # Safety
/// `rho` and `values` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dg_template_tabulated(
    rho: *const f64,
    values: *const f64,
    n: usize,
    out: *mut *mut DgTemplate,
) -> DgStatus {
    guard(|| {
        let rho = slice_in(rho, n, "rho")?.to_vec();
        let values = slice_in(values, n, "values")?.to_vec();
        let t = PerturbationTemplate::tabulated(rho, values)?;
        write(out, Box::into_raw(Box::new(DgTemplate(Arc::new(t)))), "out")
    })
}

/// # Safety
/// `t` must come from a `dg_template_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dg_template_free(t: *mut DgTemplate) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

fn plan(
    sys: &DgSystem,
    t: &DgTemplate,
    lambda1: f64,
    lambda2: f64,
    gap_margin: f64,
    c: f64,
) -> Result<TruncationPlan, Failure> {
    Ok(plan_truncation(
        &sys.0,
        &t.0,
        lambda1,
        lambda2,
        c,
        gap_margin,
        &IntegrationSettings::default(),
    )?)
}

/// Predicted eigenvalues per unit scale in `[lambda1, lambda2]` for the
/// background `sys` (zero coupling) perturbed by `l0(r / c)`.
/// `regularity_constant` bounds `|l0'| / l0^2` near 0.
///
/// # Safety
/// `sys` and `t` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_predicted_density(
    sys: *const DgSystem,
    t: *const DgTemplate,
    lambda1: f64,
    lambda2: f64,
    gap_margin: f64,
    regularity_constant: f64,
    out: *mut f64,
) -> DgStatus {
    guard(|| {
        let (sys, t) = (deref(sys, "sys")?, deref(t, "template")?);
        let p = plan(sys, t, lambda1, lambda2, gap_margin, regularity_constant)?;
        let d = predicted_density(
            &sys.0,
            &t.0,
            lambda1,
            lambda2,
            search_window(&p),
            &IntegrationSettings::default(),
            &QuadratureSettings::default(),
        )?;
        write(out, d.value, "out")
    })
}

/// Eigenvalues in `(lambda1, lambda2]` at scale `c` on the truncated half-line.
///
/// # Safety
/// `sys` and `t` must be live handles; `count` and `error_budget` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dg_count_halfline(
    sys: *const DgSystem,
    t: *const DgTemplate,
    c: f64,
    lambda1: f64,
    lambda2: f64,
    gap_margin: f64,
    regularity_constant: f64,
    count: *mut u64,
    error_budget: *mut u64,
) -> DgStatus {
    guard(|| {
        let (sys, t) = (deref(sys, "sys")?, deref(t, "template")?);
        if count.is_null() || error_budget.is_null() {
            return Err(null("output pointer"));
        }
        let p = plan(sys, t, lambda1, lambda2, gap_margin, regularity_constant)?;
        let settings = IntegrationSettings::default().with_tol(HALFLINE_TOL);
        let r = count_halfline(&sys.0, &t.0, c, lambda1, lambda2, &p, &settings)?;
        write(count, r.count, "count")?;
        write(error_budget, r.error_budget, "error_budget")
    })
}

/// Null-terminated version string.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
