//! C ABI over the dalmc library.
//!
//! Every function returns a [`DalmcStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with the matching
//! `_free` function. The message of the most recent failure on the calling
//! thread is available from [`dalmc_last_error`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dalmc::config::ExperimentConfig;
use dalmc::paths::{self, DiffusionPath};
use dalmc::sampler::{self, SamplerConfig, Trajectory};
use dalmc::theory::{self, PlannerInput};
use dalmc::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DalmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidParameter = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    MissingConstant = 7,
    ChainFailure = 8,
    BufferTooSmall = 9,
    Unsupported = 10,
    Panic = 11,
}

/// A diffusion path built from a TOML experiment config.
pub struct DalmcPath {
    inner: DiffusionPath,
}

/// Final states of a sampler run.
pub struct DalmcRun {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> DalmcStatus {
    match err {
        Error::Config { .. } => DalmcStatus::Config,
        Error::InvalidParameter(_) | Error::TimeOutOfRange { .. } | Error::NotSpd(_) => {
            DalmcStatus::InvalidParameter
        }
        Error::DimensionMismatch { .. } => DalmcStatus::DimensionMismatch,
        Error::MissingConstant(_) | Error::InfiniteScheduleConstant(_) => DalmcStatus::MissingConstant,
        Error::ChainFailure { .. } => DalmcStatus::ChainFailure,
        Error::Unsupported(_) => DalmcStatus::Unsupported,
        _ => DalmcStatus::Numerical,
    }
}

struct Fail(DalmcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null() -> Fail {
    Fail(DalmcStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DalmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DalmcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DalmcStatus::Panic
        }
    }
}

unsafe fn path_ref<'a>(p: *const DalmcPath) -> Result<&'a DiffusionPath, Fail> {
    p.as_ref().map(|p| &p.inner).ok_or_else(null)
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn point<'a>(x: *const f64, len: usize, dim: usize) -> Result<&'a [f64], Fail> {
    if x.is_null() {
        return Err(null());
    }
    if len != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: len }.into());
    }
    Ok(std::slice::from_raw_parts(x, len))
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to fit).
/// Returns the full message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dalmc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Build a path from the `target`, `base` and `schedule` tables of a TOML
/// experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dalmc_path_from_toml(toml: *const c_char, out: *mut *mut DalmcPath) -> DalmcStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null());
        }
        let out = out_ref(out)?;
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| Fail(DalmcStatus::InvalidUtf8, e.to_string()))?;
        let exp = ExperimentConfig::from_toml(text)?.validate()?;
        *out = Box::into_raw(Box::new(DalmcPath { inner: exp.path }));
        Ok(())
    })
}

/// Release a path. Null is ignored.
///
/// # Safety
/// `path` must come from [`dalmc_path_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dalmc_path_free(path: *mut DalmcPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// # Safety
/// `path` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_path_dim(path: *const DalmcPath, out: *mut usize) -> DalmcStatus {
    guard(|| {
        *out_ref(out)? = path_ref(path)?.dim();
        Ok(())
    })
}

/// Schedule value λ at time t.
///
/// # Safety
/// `path` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_path_lambda(path: *const DalmcPath, t: f64, out: *mut f64) -> DalmcStatus {
    guard(|| {
        *out_ref(out)? = path_ref(path)?.lambda(t)?;
        Ok(())
    })
}

/// log μ_t(x).
///
/// # Safety
/// `x` must point to `len` doubles; `path` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_path_log_density(
    path: *const DalmcPath,
    t: f64,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> DalmcStatus {
    guard(|| {
        let p = path_ref(path)?;
        let x = point(x, len, p.dim())?;
        *out_ref(out)? = p.marginal_log_density(t, x)?;
        Ok(())
    })
}

/// ∇log μ_t(x), written to `out[0..len]`.
///
/// # Safety
/// `x` and `out` must each point to `len` doubles; `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dalmc_path_score(
    path: *const DalmcPath,
    t: f64,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> DalmcStatus {
    guard(|| {
        let p = path_ref(path)?;
        let x = point(x, len, p.dim())?;
        if out.is_null() {
            return Err(null());
        }
        let s = p.marginal_score(t, x)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(s.as_slice());
        Ok(())
    })
}

/// Upper bound L_t on the Lipschitz constant of the marginal score.
///
/// # Safety
/// `path` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_lipschitz_bound(path: *const DalmcPath, t: f64, out: *mut f64) -> DalmcStatus {
    guard(|| {
        *out_ref(out)? = paths::lipschitz_bound(path_ref(path)?, t)?.value;
        Ok(())
    })
}

/// Closed-form upper bound on the action of the path.
///
/// # Safety
/// `path` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_action_bound(path: *const DalmcPath, out: *mut f64) -> DalmcStatus {
    guard(|| {
        *out_ref(out)? = paths::action_bound(path_ref(path)?)?.value;
        Ok(())
    })
}

/// Run the sampler with uniform steps and no score perturbation.
///
/// # Safety
/// `path` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_run(
    path: *const DalmcPath,
    kappa: f64,
    steps: usize,
    chains: usize,
    seed: u64,
    out: *mut *mut DalmcRun,
) -> DalmcStatus {
    guard(|| {
        let p = path_ref(path)?;
        let out = out_ref(out)?;
        let traj = sampler::dalmc_run(p, &SamplerConfig::new(kappa, steps, chains, seed))?;
        *out = Box::into_raw(Box::new(DalmcRun { inner: traj }));
        Ok(())
    })
}

/// Release a run. Null is ignored.
///
/// # Safety
/// `run` must come from [`dalmc_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dalmc_run_free(run: *mut DalmcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of chains, dimension and number of flagged chains of a run.
///
/// # Safety
/// `run` must be valid; each out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn dalmc_run_shape(
    run: *const DalmcRun,
    chains: *mut usize,
    dim: *mut usize,
    flagged: *mut usize,
) -> DalmcStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(null)?.inner;
        if let Some(c) = chains.as_mut() {
            *c = r.chains();
        }
        if let Some(d) = dim.as_mut() {
            *d = r.dim;
        }
        if let Some(f) = flagged.as_mut() {
            *f = r.flagged.len();
        }
        Ok(())
    })
}

/// Copy final states row-major (chain by coordinate) into `buf`, which must
/// hold chains × dim doubles.
///
/// # Safety
/// `run` must be valid and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dalmc_run_samples(run: *const DalmcRun, buf: *mut f64, len: usize) -> DalmcStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(null)?.inner;
        if buf.is_null() {
            return Err(null());
        }
        let need = r.chains() * r.dim;
        if len < need {
            return Err(Fail(
                DalmcStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {need}"),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (row, s) in out.chunks_mut(r.dim).zip(&r.final_samples) {
            row.copy_from_slice(s);
        }
        Ok(())
    })
}

/// Step plan for the Gaussian-base complexity bound.
///
/// # Safety
/// `kappa` and `steps` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dalmc_plan_gaussian(
    eps: f64,
    d: usize,
    m2: f64,
    l_max: f64,
    kappa: *mut f64,
    steps: *mut u64,
) -> DalmcStatus {
    guard(|| {
        let kappa = out_ref(kappa)?;
        let steps = out_ref(steps)?;
        let plan = theory::plan_gaussian(&PlannerInput::new(eps, d, m2).with_l_max(l_max))?;
        *kappa = plan.kappa;
        *steps = plan.steps;
        Ok(())
    })
}
