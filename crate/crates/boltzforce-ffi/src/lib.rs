//! C ABI over the `boltzforce` solvers.
//!
//! Every function returns a [`BfStatus`]; on failure the message is kept
//! per thread and read back with [`bf_last_error`]. Handles are opaque and
//! owned by the caller, who releases them with the matching `_free`.
//! Panics never cross the boundary: they are reported as
//! [`BfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use boltzforce::fluid_solver::{FluidParams, FluidSolver, FluidState};
use boltzforce::harness::{self, RunConfig};
use boltzforce::kinetic_solver::{self, KineticSolver, KineticState};
use boltzforce::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    UnderResolved = 5,
    Numerical = 6,
    Panic = 7,
}

/// A parsed and validated run configuration.
pub struct BfConfig {
    inner: RunConfig,
}

/// Kinetic solver together with its current state.
pub struct BfKinetic {
    solver: KineticSolver,
    state: KineticState,
}

/// Limit fluid solver together with its current state.
pub struct BfFluid {
    solver: FluidSolver,
    state: FluidState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BfStatus {
    match e {
        Error::Invalid(_) => BfStatus::InvalidArgument,
        Error::Config { .. } => BfStatus::Config,
        Error::Io(_) => BfStatus::Io,
        Error::UnderResolved(_) => BfStatus::UnderResolved,
        Error::Numerical(_) => BfStatus::Numerical,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BfStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BfStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            BfStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::invalid(format!("{what} is not valid UTF-8"))))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(Fail::Null("buffer"));
    }
    if len != src.len() {
        return Err(Error::invalid(format!("buffer holds {len} values, expected {}", src.len())).into());
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn bf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a TOML config file; relative paths inside it resolve against
/// its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_config_load(path: *const c_char, out: *mut *mut BfConfig) -> BfStatus {
    guard(|| {
        let path = as_str(path, "path")?;
        let inner = harness::load_config(Path::new(path))?;
        write_out(out, BfConfig { inner })
    })
}

/// Parses a config from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_config_parse(text: *const c_char, out: *mut *mut BfConfig) -> BfStatus {
    guard(|| {
        let text = as_str(text, "text")?;
        let inner = harness::parse_config(text)?;
        inner.validate()?;
        write_out(out, BfConfig { inner })
    })
}

/// # Safety
/// `cfg` must come from `bf_config_*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_config_free(cfg: *mut BfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the operator checks; `all_pass` receives 1 when every check
/// passed. A failed check is not an error of the call.
///
/// # Safety
/// `cfg` must be a live config and `all_pass` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_check_operators(cfg: *const BfConfig, all_pass: *mut i32) -> BfStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let out = as_mut(all_pass, "all_pass")?;
        let report = harness::check_operators(&cfg.inner)?;
        *out = report.all_pass as i32;
        Ok(())
    })
}

/// Builds the kinetic solver at Knudsen number `eps` and sets its state
/// to the configured initial data.
///
/// # Safety
/// `cfg` must be a live config and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_new(cfg: *const BfConfig, eps: f64, out: *mut *mut BfKinetic) -> BfStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")).into());
        }
        let solver = cfg.inner.kinetic_solver(eps)?;
        let (state, _) = kinetic_solver::initial_state(&solver, &cfg.inner.initial)?;
        write_out(out, BfKinetic { solver, state })
    })
}

/// # Safety
/// `k` must come from `bf_kinetic_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_free(k: *mut BfKinetic) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Number of values in the state, N_v^{d_v} · N_x^{d_x}, velocity-major.
///
/// # Safety
/// `k` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_len(k: *const BfKinetic) -> usize {
    k.as_ref().map_or(0, |k| k.state.data.len())
}

/// # Safety
/// `k` must be a live handle and `t` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_time(k: *const BfKinetic, t: *mut f64) -> BfStatus {
    guard(|| {
        let k = as_ref(k, "kinetic")?;
        *as_mut(t, "t")? = k.state.t;
        Ok(())
    })
}

/// Copies the perturbation f (around M(t)) into `buf` of length `len`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_get_state(k: *const BfKinetic, buf: *mut f64, len: usize) -> BfStatus {
    guard(|| {
        let k = as_ref(k, "kinetic")?;
        copy_out(&k.state.data, buf, len)
    })
}

/// Replaces the state by `buf` at time `t`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_set_state(k: *mut BfKinetic, t: f64, buf: *const f64, len: usize) -> BfStatus {
    guard(|| {
        let k = as_mut(k, "kinetic")?;
        if buf.is_null() {
            return Err(Fail::Null("buffer"));
        }
        if len != k.state.data.len() {
            return Err(Error::invalid(format!("buffer holds {len} values, expected {}", k.state.data.len())).into());
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::invalid("t must be finite and non-negative").into());
        }
        let data = std::slice::from_raw_parts(buf, len);
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("state contains non-finite values").into());
        }
        k.state.data.copy_from_slice(data);
        k.state.t = t;
        Ok(())
    })
}

/// Advances the state by one step of size `dt`. On failure the state is
/// left unchanged.
///
/// # Safety
/// `k` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_step(k: *mut BfKinetic, dt: f64) -> BfStatus {
    guard(|| {
        let k = as_mut(k, "kinetic")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive").into());
        }
        k.state = k.solver.step(&k.state, dt)?;
        Ok(())
    })
}

/// Mass and energy of the reconstructed distribution F.
///
/// # Safety
/// `mass` and `energy` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bf_kinetic_moments(k: *const BfKinetic, mass: *mut f64, energy: *mut f64) -> BfStatus {
    guard(|| {
        let k = as_ref(k, "kinetic")?;
        let g = k.solver.global_moments(&k.state);
        *as_mut(mass, "mass")? = g.mass;
        *as_mut(energy, "energy")? = g.energy;
        Ok(())
    })
}

/// Builds the limit fluid solver with transport coefficients taken from
/// the config or computed from the collision operator, starting from the
/// configured well-prepared data.
///
/// # Safety
/// `cfg` must be a live config and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_new(cfg: *const BfConfig, out: *mut *mut BfFluid) -> BfStatus {
    guard(|| {
        let cfg = &as_ref(cfg, "cfg")?.inner;
        let space = cfg.spatial_grid()?;
        let tc = cfg.transport()?;
        let params = FluidParams {
            nu: tc.nu,
            kappa: tc.kappa,
            force_factor: cfg.fluid.force_factor,
        };
        let state = harness::fluid_initial(cfg, &space)?;
        let solver = FluidSolver::new(space.clone(), params, cfg.force_field(&space)?)?;
        write_out(out, BfFluid { solver, state })
    })
}

/// # Safety
/// `f` must come from `bf_fluid_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_free(f: *mut BfFluid) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of spatial points N_x^{d_x}.
///
/// # Safety
/// `f` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_len(f: *const BfFluid) -> usize {
    f.as_ref().map_or(0, |f| f.state.theta.len())
}

/// Viscosity and heat conductivity in use.
///
/// # Safety
/// `nu` and `kappa` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_coefficients(f: *const BfFluid, nu: *mut f64, kappa: *mut f64) -> BfStatus {
    guard(|| {
        let f = as_ref(f, "fluid")?;
        *as_mut(nu, "nu")? = f.solver.params.nu;
        *as_mut(kappa, "kappa")? = f.solver.params.kappa;
        Ok(())
    })
}

/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_step(f: *mut BfFluid, dt: f64) -> BfStatus {
    guard(|| {
        let f = as_mut(f, "fluid")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive").into());
        }
        f.state = f.solver.step(&f.state, dt)?;
        Ok(())
    })
}

/// # Safety
/// `t` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_time(f: *const BfFluid, t: *mut f64) -> BfStatus {
    guard(|| {
        let f = as_ref(f, "fluid")?;
        *as_mut(t, "t")? = f.state.t;
        Ok(())
    })
}

/// Copies velocity component `component` (0-based) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_get_velocity(f: *const BfFluid, component: usize, buf: *mut f64, len: usize) -> BfStatus {
    guard(|| {
        let f = as_ref(f, "fluid")?;
        let u = f.state.u.get(component).ok_or_else(|| {
            Fail::Lib(Error::invalid(format!(
                "component {component} out of range (have {})",
                f.state.u.len()
            )))
        })?;
        copy_out(u, buf, len)
    })
}

/// Copies the temperature θ into `buf`; the density is −θ.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bf_fluid_get_theta(f: *const BfFluid, buf: *mut f64, len: usize) -> BfStatus {
    guard(|| {
        let f = as_ref(f, "fluid")?;
        copy_out(&f.state.theta, buf, len)
    })
}
