//! C ABI over `langevin_coupling`.
//!
//! Every entry point returns an [`LcStatus`]; results go through out-pointers.
//! On failure, [`lc_last_error_message`] returns a description that stays
//! valid until the next failing call on the same thread. Handles are opaque
//! and must be released with their `_free` function.
//!
//! Pointer arguments may be null (reported as `LC_STATUS_NULL_POINTER`);
//! otherwise they must point to valid memory of the documented length.

// Entry points null-check every pointer before use; the length contract
// above is the caller's responsibility, as for any C API.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use langevin_coupling::coupling::{simulate, SimConfig, TrajectoryStats};
use langevin_coupling::divergence::{dv_duality_check, kl_girsanov_estimate, renyi_girsanov_estimate};
use langevin_coupling::potential::{default_check_radius, verify_certificate, Certificate, PotentialSpec};
use langevin_coupling::schedule::{make_schedule, ScheduleParams};
use langevin_coupling::{Error, LyapunovF};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Internal = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: LcStatus, msg: impl Into<String>) -> LcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> LcStatus {
    let status = match &e {
        Error::DimensionMismatch { .. } => LcStatus::DimensionMismatch,
        Error::NonFinite(_) => LcStatus::NonFinite,
        Error::Io(_) | Error::Json(_) => LcStatus::Internal,
        _ => LcStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard<F: FnOnce() -> Result<(), LcStatus>>(f: F) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(LcStatus::Panic, "panic inside langevin_coupling"),
    }
}

fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, LcStatus> {
    // SAFETY: caller promises `p` is either null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| fail(LcStatus::NullPointer, format!("{name} is null")))
}

fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], LcStatus> {
    if p.is_null() {
        return Err(fail(LcStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: caller promises `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn certificate(m: f64, big_m: f64, r: f64) -> Result<Certificate, LcStatus> {
    Certificate::new(m, big_m, r).map_err(from_error)
}

/// Message for the last failing call on this thread, or null.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------- potential

pub struct LcPotential {
    inner: PotentialSpec,
}

#[no_mangle]
pub extern "C" fn lc_potential_quadratic(dim: usize, kappa: f64, out_potential: *mut *mut LcPotential) -> LcStatus {
    guard(|| {
        let o = out(out_potential, "out_potential")?;
        let inner = PotentialSpec::quadratic(dim, kappa).map_err(from_error)?;
        *o = Box::into_raw(Box::new(LcPotential { inner }));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_potential_double_well(dim: usize, out_potential: *mut *mut LcPotential) -> LcStatus {
    guard(|| {
        let o = out(out_potential, "out_potential")?;
        let inner = PotentialSpec::double_well(dim).map_err(from_error)?;
        *o = Box::into_raw(Box::new(LcPotential { inner }));
        Ok(())
    })
}

/// Builds a potential by name (`"quadratic"`, `"double_well"`). Parameter
/// names and values are parallel arrays of length `n_params`.
#[no_mangle]
pub extern "C" fn lc_potential_from_name(
    name: *const c_char,
    dim: usize,
    param_names: *const *const c_char,
    param_values: *const f64,
    n_params: usize,
    out_potential: *mut *mut LcPotential,
) -> LcStatus {
    guard(|| {
        let o = out(out_potential, "out_potential")?;
        if name.is_null() {
            return Err(fail(LcStatus::NullPointer, "name is null"));
        }
        // SAFETY: non-null, caller promises a NUL-terminated string.
        let name = unsafe { CStr::from_ptr(name) }
            .to_str()
            .map_err(|_| fail(LcStatus::InvalidArgument, "name is not UTF-8"))?;
        let mut params = std::collections::BTreeMap::new();
        if n_params > 0 {
            if param_names.is_null() {
                return Err(fail(LcStatus::NullPointer, "param_names is null"));
            }
            let values = slice(param_values, n_params, "param_values")?;
            // SAFETY: caller promises `n_params` string pointers.
            let names = unsafe { std::slice::from_raw_parts(param_names, n_params) };
            for (&k, &v) in names.iter().zip(values) {
                if k.is_null() {
                    return Err(fail(LcStatus::NullPointer, "parameter name is null"));
                }
                // SAFETY: non-null NUL-terminated string.
                let k = unsafe { CStr::from_ptr(k) }
                    .to_str()
                    .map_err(|_| fail(LcStatus::InvalidArgument, "parameter name is not UTF-8"))?;
                params.insert(k.to_string(), v);
            }
        }
        let inner = PotentialSpec::from_name(name, dim, &params).map_err(from_error)?;
        *o = Box::into_raw(Box::new(LcPotential { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from an `lc_potential_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lc_potential_free(p: *mut LcPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub extern "C" fn lc_potential_grad(p: *const LcPotential, x: *const f64, dim: usize, out_grad: *mut f64) -> LcStatus {
    guard(|| {
        // SAFETY: caller promises a live handle or null.
        let p = unsafe { p.as_ref() }.ok_or_else(|| fail(LcStatus::NullPointer, "potential is null"))?;
        let x = slice(x, dim, "x")?;
        if out_grad.is_null() {
            return Err(fail(LcStatus::NullPointer, "out_grad is null"));
        }
        let g = p.inner.grad(x).map_err(from_error)?;
        // SAFETY: caller promises `dim` writable doubles; `grad` checked dim.
        unsafe { ptr::copy_nonoverlapping(g.as_ptr(), out_grad, g.len()) };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LcCertificateResult {
    /// 1 when the certificate held on every sampled pair.
    pub pass: i32,
    /// Smallest near-field margin; NaN when no near pair was sampled.
    pub worst_near_margin: f64,
    /// Smallest far-field margin; NaN when no far pair was sampled.
    pub worst_far_margin: f64,
    pub n_pairs: usize,
}

/// Samples pairs in the ball of radius `radius` (`radius <= 0` selects the
/// default) and checks the far-field convexity certificate `(m, M, R)`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn lc_verify_certificate(
    p: *const LcPotential,
    m: f64,
    big_m: f64,
    r: f64,
    n_pairs: usize,
    radius: f64,
    seed: u64,
    out_result: *mut LcCertificateResult,
) -> LcStatus {
    guard(|| {
        // SAFETY: caller promises a live handle or null.
        let p = unsafe { p.as_ref() }.ok_or_else(|| fail(LcStatus::NullPointer, "potential is null"))?;
        let o = out(out_result, "out_result")?;
        let c = certificate(m, big_m, r)?;
        let radius = if radius > 0.0 { radius } else { default_check_radius(&c) };
        let rep = verify_certificate(&p.inner, &c, n_pairs, radius, seed).map_err(from_error)?;
        *o = LcCertificateResult {
            pass: rep.pass as i32,
            worst_near_margin: rep.worst_near_margin.unwrap_or(f64::NAN),
            worst_far_margin: rep.worst_far_margin.unwrap_or(f64::NAN),
            n_pairs: rep.n_pairs,
        };
        Ok(())
    })
}

// ---------------------------------------------------------------- lyapunov

#[no_mangle]
pub extern "C" fn lc_lyapunov_eval(c_f: f64, r_f: f64, r: f64, out_value: *mut f64) -> LcStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = LyapunovF::new(c_f, r_f).and_then(|f| f.eval(r)).map_err(from_error)?;
        Ok(())
    })
}

// ---------------------------------------------------------------- schedule

pub struct LcSchedule {
    inner: ScheduleParams,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LcConstants {
    pub horizon: f64,
    pub nu: f64,
    pub c0: f64,
    pub c1: f64,
    pub dist: f64,
    pub m_xx: f64,
    pub kl_bound: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_of_t: f64,
    pub j_value: f64,
}

#[no_mangle]
pub extern "C" fn lc_schedule_new(m: f64, big_m: f64, r: f64, horizon: f64, dist: f64, out_schedule: *mut *mut LcSchedule) -> LcStatus {
    guard(|| {
        let o = out(out_schedule, "out_schedule")?;
        let inner = make_schedule(&certificate(m, big_m, r)?, horizon, dist).map_err(from_error)?;
        *o = Box::into_raw(Box::new(LcSchedule { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`lc_schedule_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lc_schedule_free(s: *mut LcSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn schedule<'a>(s: *const LcSchedule) -> Result<&'a ScheduleParams, LcStatus> {
    // SAFETY: caller promises a live handle or null.
    unsafe { s.as_ref() }
        .map(|s| &s.inner)
        .ok_or_else(|| fail(LcStatus::NullPointer, "schedule is null"))
}

#[no_mangle]
pub extern "C" fn lc_schedule_constants(s: *const LcSchedule, out_constants: *mut LcConstants) -> LcStatus {
    guard(|| {
        let sp = schedule(s)?;
        let o = out(out_constants, "out_constants")?;
        *o = LcConstants {
            horizon: sp.horizon,
            nu: sp.nu,
            c0: sp.c0,
            c1: sp.c1,
            dist: sp.dist,
            m_xx: sp.m_xx,
            kl_bound: sp.kl_bound(),
            alpha: sp.alpha(),
            beta: sp.beta(),
            c_of_t: sp.c_of_t(),
            j_value: sp.j_value(),
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_schedule_renyi_bound(s: *const LcSchedule, q: f64, out_value: *mut f64) -> LcStatus {
    guard(|| {
        let sp = schedule(s)?;
        *out(out_value, "out_value")? = sp.renyi_bound(q).map_err(from_error)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_schedule_eta(s: *const LcSchedule, t: f64, out_value: *mut f64) -> LcStatus {
    guard(|| {
        let sp = schedule(s)?;
        *out(out_value, "out_value")? = sp.eta(t).map_err(from_error)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_schedule_envelope(s: *const LcSchedule, t: f64, out_value: *mut f64) -> LcStatus {
    guard(|| {
        let sp = schedule(s)?;
        *out(out_value, "out_value")? = sp.envelope(t).map_err(from_error)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_schedule_moment_integral(s: *const LcSchedule, k: u32, out_value: *mut f64) -> LcStatus {
    guard(|| {
        let sp = schedule(s)?;
        *out(out_value, "out_value")? = sp.moment_integral(k).map_err(from_error)?;
        Ok(())
    })
}

// ---------------------------------------------------------------- simulation

pub struct LcSimulation {
    stats: TrajectoryStats,
    schedule: ScheduleParams,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcSeries {
    Grid = 0,
    MeanAbsZ = 1,
    SeAbsZ = 2,
    MeanSqrtFZ = 3,
    SeSqrtFZ = 4,
    MeanFZ = 5,
    Envelope = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LcSimulationSummary {
    pub coupled_fraction_at_t: f64,
    pub max_sup_z: f64,
    pub n_sup_exceed: usize,
    pub girsanov_integral: f64,
    pub girsanov_se: f64,
    pub kl_mc: f64,
    pub kl_mc_se: f64,
    pub kl_bound: f64,
    pub n_paths: usize,
    pub n_diverged: usize,
    /// 1 when the diverged fraction exceeded the threshold.
    pub failed: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LcRenyiEstimate {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub theorem_bound: f64,
    pub heavy_tail: i32,
}

/// Runs the coupled simulation from `x0`, `x0_prime` (each `dim` doubles)
/// under the certificate `(m, M, R)`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn lc_simulate(
    p: *const LcPotential,
    m: f64,
    big_m: f64,
    r: f64,
    x0: *const f64,
    x0_prime: *const f64,
    dim: usize,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    grid_stride: usize,
    out_simulation: *mut *mut LcSimulation,
) -> LcStatus {
    guard(|| {
        // SAFETY: caller promises a live handle or null.
        let p = unsafe { p.as_ref() }.ok_or_else(|| fail(LcStatus::NullPointer, "potential is null"))?;
        let o = out(out_simulation, "out_simulation")?;
        let x0 = slice(x0, dim, "x0")?.to_vec();
        let x0_prime = slice(x0_prime, dim, "x0_prime")?.to_vec();
        let cert = certificate(m, big_m, r)?;
        let cfg = SimConfig::new(p.inner.clone(), cert, x0, x0_prime, horizon, dt, n_paths, seed);
        cfg.validate().map_err(from_error)?;
        let schedule = make_schedule(&cert, horizon, cfg.initial_distance()).map_err(from_error)?;
        let stats = simulate(&cfg, &schedule, grid_stride).map_err(from_error)?;
        *o = Box::into_raw(Box::new(LcSimulation { stats, schedule }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`lc_simulate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lc_simulation_free(s: *mut LcSimulation) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn simulation<'a>(s: *const LcSimulation) -> Result<&'a LcSimulation, LcStatus> {
    // SAFETY: caller promises a live handle or null.
    unsafe { s.as_ref() }.ok_or_else(|| fail(LcStatus::NullPointer, "simulation is null"))
}

#[no_mangle]
pub extern "C" fn lc_simulation_grid_len(s: *const LcSimulation, out_len: *mut usize) -> LcStatus {
    guard(|| {
        *out(out_len, "out_len")? = simulation(s)?.stats.grid.len();
        Ok(())
    })
}

/// Copies one recorded series into `buf`, which must hold `grid_len` doubles.
#[no_mangle]
pub extern "C" fn lc_simulation_series(s: *const LcSimulation, which: LcSeries, buf: *mut f64, buf_len: usize) -> LcStatus {
    guard(|| {
        let st = &simulation(s)?.stats;
        let src = match which {
            LcSeries::Grid => &st.grid,
            LcSeries::MeanAbsZ => &st.mean_abs_z,
            LcSeries::SeAbsZ => &st.se_abs_z,
            LcSeries::MeanSqrtFZ => &st.mean_sqrt_f_z,
            LcSeries::SeSqrtFZ => &st.se_sqrt_f_z,
            LcSeries::MeanFZ => &st.mean_f_z,
            LcSeries::Envelope => &st.envelope,
        };
        if buf.is_null() {
            return Err(fail(LcStatus::NullPointer, "buf is null"));
        }
        if buf_len < src.len() {
            return Err(fail(
                LcStatus::DimensionMismatch,
                format!("buffer holds {buf_len}, need {}", src.len()),
            ));
        }
        // SAFETY: checked non-null and large enough.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_simulation_summary(s: *const LcSimulation, out_summary: *mut LcSimulationSummary) -> LcStatus {
    guard(|| {
        let sim = simulation(s)?;
        let o = out(out_summary, "out_summary")?;
        let st = &sim.stats;
        let kl = kl_girsanov_estimate(st, &sim.schedule).map_err(from_error)?;
        *o = LcSimulationSummary {
            coupled_fraction_at_t: st.coupled_fraction_at_t,
            max_sup_z: st.max_sup_z,
            n_sup_exceed: st.n_sup_exceed,
            girsanov_integral: st.girsanov_integral,
            girsanov_se: st.girsanov_se,
            kl_mc: kl.value,
            kl_mc_se: kl.se,
            kl_bound: sim.schedule.kl_bound(),
            n_paths: st.n_paths,
            n_diverged: st.n_diverged,
            failed: st.failed as i32,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lc_simulation_renyi(
    s: *const LcSimulation,
    q: f64,
    resamples: usize,
    seed: u64,
    out_estimate: *mut LcRenyiEstimate,
) -> LcStatus {
    guard(|| {
        let sim = simulation(s)?;
        let o = out(out_estimate, "out_estimate")?;
        let r = renyi_girsanov_estimate(&sim.stats.per_path_girsanov, q, resamples, seed).map_err(from_error)?;
        *o = LcRenyiEstimate {
            value: r.value,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            theorem_bound: sim.schedule.renyi_bound(q).map_err(from_error)?,
            heavy_tail: r.heavy_tail as i32,
        };
        Ok(())
    })
}

// ---------------------------------------------------------------- duality

/// Donsker–Varadhan slack for discrete distributions of length `n`.
#[no_mangle]
pub extern "C" fn lc_dv_slack(p: *const f64, r: *const f64, phi: *const f64, n: usize, out_value: *mut f64) -> LcStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = dv_duality_check(slice(p, n, "p")?, slice(r, n, "r")?, slice(phi, n, "phi")?).map_err(from_error)?;
        Ok(())
    })
}
