//! C ABI over the ibdwaves solvers.
//!
//! Every function returns an [`IbdStatus`]; results are written through out
//! pointers. Handles are opaque and must be released with their `_free`
//! function. The message for the most recent failure on the calling thread is
//! available from [`ibd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ibdwaves::asymptotics;
use ibdwaves::evolution::{simulate_lds, track_front, FieldState, Grid1D, Scheme, SimOptions, Simulation};
use ibdwaves::scalarwaves::{self, WaveKind, WaveProfile};
use ibdwaves::systemwaves::{min_speed_search, solve_fptw, BvpConfig};
use ibdwaves::{Error, ModelParams};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IbdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    NoConvergence = 4,
    Nonexistence = 5,
    Unstable = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Which travelling wave to compute.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IbdWaveKind {
    Fptw = 0,
    Uptw = 1,
    Lptw = 2,
}

/// Which field of a profile or simulation to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IbdField {
    M = 0,
    I = 1,
}

/// Model parameters.
pub struct IbdParams(ModelParams);

/// A computed travelling wave.
pub struct IbdProfile(WaveProfile);

/// Snapshots of a simulation of the reduced system.
pub struct IbdSimulation(Simulation);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IbdStatus {
    match err {
        Error::InvalidParameter(_) | Error::RegimeMismatch(_) => IbdStatus::InvalidParameter,
        Error::Domain(_) | Error::Singularity(_) => IbdStatus::Domain,
        Error::Nonexistence(_) => IbdStatus::Nonexistence,
        Error::Cfl { .. } | Error::NonFinite { .. } => IbdStatus::Unstable,
        _ => IbdStatus::NoConvergence,
    }
}

fn guard<F: FnOnce() -> Result<(), IbdStatus>>(f: F) -> IbdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IbdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside ibdwaves".into());
            IbdStatus::Panic
        }
    }
}

fn lift<T>(r: ibdwaves::Result<T>) -> Result<T, IbdStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, IbdStatus> {
    if p.is_null() {
        set_error("null pointer argument".into());
        return Err(IbdStatus::NullPointer);
    }
    Ok(&*p)
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), IbdStatus> {
    if out.is_null() {
        set_error("null output pointer".into());
        return Err(IbdStatus::NullPointer);
    }
    out.write(v);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Copy the last error message into `buf` (NUL terminated, truncated to
/// `len`). Returns the full message length, or 0 when there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ibd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ibd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create parameters from the raw rates.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ibd_params_new(
    alpha2: f64,
    beta1: f64,
    beta2: f64,
    delta: f64,
    diffusivity: f64,
    out: *mut *mut IbdParams,
) -> IbdStatus {
    guard(|| {
        let p = lift(ModelParams::new(alpha2, beta1, beta2, delta, diffusivity))?;
        write(out, boxed(IbdParams(p)))
    })
}

/// Create parameters with unit rates at the given σ and δ.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ibd_params_unit_rates(sigma: f64, delta: f64, out: *mut *mut IbdParams) -> IbdStatus {
    guard(|| {
        let p = lift(ModelParams::unit_rates(sigma, delta))?;
        write(out, boxed(IbdParams(p)))
    })
}

/// Release parameters. Null is ignored.
///
/// # Safety
/// `params` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ibd_params_free(params: *mut IbdParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Read σ, a and b.
///
/// # Safety
/// `params` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_params_derived(
    params: *const IbdParams,
    sigma: *mut f64,
    a: *mut f64,
    b: *mut f64,
) -> IbdStatus {
    guard(|| {
        let p = &deref(params)?.0;
        write(sigma, p.sigma())?;
        write(a, p.a())?;
        write(b, p.b())
    })
}

/// Leading-order minimum speed of the upper wave at `sigma` (> 1). The
/// parameters' β₁ is adjusted to match `sigma`.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_uptw_min_speed(params: *const IbdParams, sigma: f64, out: *mut f64) -> IbdStatus {
    guard(|| {
        let p = lift(deref(params)?.0.with_sigma(sigma))?;
        let v = lift(asymptotics::uptw_min_speed(sigma, &p))?;
        write(out, v)
    })
}

/// Leading-order minimum speed of the lower wave at `sigma` (> 1).
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_lptw_min_speed(params: *const IbdParams, sigma: f64, out: *mut f64) -> IbdStatus {
    guard(|| {
        let p = lift(deref(params)?.0.with_sigma(sigma))?;
        let v = lift(asymptotics::lptw_min_speed(sigma, p.delta, &p))?;
        write(out, v)
    })
}

/// Leading-order speed of the full wave at `sigma` (< 1) by shooting.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_fptw_speed(params: *const IbdParams, sigma: f64, tol: f64, out: *mut f64) -> IbdStatus {
    guard(|| {
        let p = lift(deref(params)?.0.with_sigma(sigma))?;
        let r = lift(scalarwaves::solve_mvp1_speed(sigma, &p, tol))?;
        write(out, r.speed)
    })
}

/// Solve the full travelling-wave system for the wave of the given kind at
/// the parameters' δ. Upper and lower waves are returned at their minimum
/// speed.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_profile_solve(
    params: *const IbdParams,
    kind: IbdWaveKind,
    sigma: f64,
    out: *mut *mut IbdProfile,
) -> IbdStatus {
    guard(|| {
        let p = lift(deref(params)?.0.with_sigma(sigma))?;
        let cfg = BvpConfig::default();
        let profile = match kind {
            IbdWaveKind::Fptw => lift(solve_fptw(sigma, p.delta, &p, &cfg))?,
            IbdWaveKind::Uptw => lift(min_speed_search(WaveKind::Uptw, sigma, p.delta, &p, &cfg))?.profile,
            IbdWaveKind::Lptw => lift(min_speed_search(WaveKind::Lptw, sigma, p.delta, &p, &cfg))?.profile,
        };
        write(out, boxed(IbdProfile(profile)))
    })
}

/// Release a profile. Null is ignored.
///
/// # Safety
/// `profile` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ibd_profile_free(profile: *mut IbdProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Number of grid points and wave speed.
///
/// # Safety
/// `profile` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_profile_info(profile: *const IbdProfile, len: *mut usize, speed: *mut f64) -> IbdStatus {
    guard(|| {
        let w = &deref(profile)?.0;
        write(len, w.len())?;
        write(speed, w.speed)
    })
}

/// Copy the travelling coordinate and both fields into caller buffers of
/// capacity `cap`. Any buffer may be null to skip it.
///
/// # Safety
/// `profile` must be a live handle; non-null buffers must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ibd_profile_copy(
    profile: *const IbdProfile,
    z: *mut f64,
    m: *mut f64,
    i: *mut f64,
    cap: usize,
) -> IbdStatus {
    guard(|| {
        let w = &deref(profile)?.0;
        if cap < w.len() {
            set_error(format!("buffer holds {cap} values, profile has {}", w.len()));
            return Err(IbdStatus::BufferTooSmall);
        }
        for (dst, src) in [(z, &w.z), (m, &w.m), (i, &w.i)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
            }
        }
        Ok(())
    })
}

/// Simulate the reduced system from a step initial condition (`m0`, `i0` on
/// x < 0) on `n` points over [`x_min`, `x_max`] until `t_end`, storing a
/// snapshot every `interval`.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_simulate(
    params: *const IbdParams,
    m0: f64,
    i0: f64,
    x_min: f64,
    x_max: f64,
    n: usize,
    t_end: f64,
    interval: f64,
    out: *mut *mut IbdSimulation,
) -> IbdStatus {
    guard(|| {
        let p = &deref(params)?.0;
        let grid = lift(Grid1D::new(x_min, x_max, n))?;
        let init = lift(FieldState::heaviside(grid, m0, i0))?;
        let opts = SimOptions::aligned(p, &init.grid, Scheme::Imex, interval);
        let sim = lift(simulate_lds(&init, p, t_end, &opts))?;
        write(out, boxed(IbdSimulation(sim)))
    })
}

/// Release a simulation. Null is ignored.
///
/// # Safety
/// `sim` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ibd_simulation_free(sim: *mut IbdSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of grid points and snapshots.
///
/// # Safety
/// `sim` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_simulation_info(
    sim: *const IbdSimulation,
    points: *mut usize,
    snapshots: *mut usize,
) -> IbdStatus {
    guard(|| {
        let s = &deref(sim)?.0;
        write(points, s.last().grid.n)?;
        write(snapshots, s.snapshots.len())
    })
}

/// Copy one field of the final snapshot into `buf` of capacity `cap`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ibd_simulation_final(
    sim: *const IbdSimulation,
    field: IbdField,
    buf: *mut f64,
    cap: usize,
) -> IbdStatus {
    guard(|| {
        let s = &deref(sim)?.0;
        let values = &s.last().fields[field as usize];
        if cap < values.len() {
            set_error(format!("buffer holds {cap} values, field has {}", values.len()));
            return Err(IbdStatus::BufferTooSmall);
        }
        if buf.is_null() {
            set_error("null output buffer".into());
            return Err(IbdStatus::NullPointer);
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// Fitted speed of the rightmost crossing of `level` by `field`, using the
/// trailing `fit_window` fraction of the snapshots.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_simulation_front_speed(
    sim: *const IbdSimulation,
    field: IbdField,
    level: f64,
    fit_window: f64,
    out: *mut f64,
) -> IbdStatus {
    guard(|| {
        let s = &deref(sim)?.0;
        let trace = lift(track_front(&s.snapshots, field as usize, level, fit_window))?;
        match trace.fitted_speed {
            Some(v) => write(out, v),
            None => {
                set_error(format!("no front at level {level}"));
                Err(IbdStatus::Nonexistence)
            }
        }
    })
}
