//! C interface. Every call returns a `TpcStatus`; on failure the message is
//! available from `tpc_last_error_message` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::Deserialize;
use threepc::compressors::CompressCtx;
use threepc::config::{ProblemSpec, StepsizeSpec};
use threepc::engine::{self, G0Mode, RunConfig, RunOutput, StopRule};
use threepc::problems::{gen_quadratic, Problem};
use threepc::{theory, CompressorSpec, DenseVector, Error, MethodSpec, RngStream, SmoothnessConstants, Termination};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Domain = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpcTermination {
    Converged = 0,
    MaxRounds = 1,
    Diverged = 2,
    BitBudget = 3,
    TimeLimit = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TpcConstants {
    pub l_minus: f64,
    pub l_plus: f64,
    pub l_pm: f64,
    /// NaN when the problem has no strong convexity constant.
    pub mu: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TpcTheoryParams {
    pub a: f64,
    pub b: f64,
    /// NaN when the method has no free parameter.
    pub s_star: f64,
    /// Nonzero when the constants bound the aggregated error.
    pub aggregated: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TpcRecord {
    pub t: u64,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub g_t: f64,
    pub bits_cum_per_worker: f64,
    pub transmitted_fraction: f64,
}

/// Opaque problem handle.
pub struct TpcProblem {
    inner: Box<dyn Problem>,
}

/// Opaque handle to a finished run.
pub struct TpcRun {
    out: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TpcStatus {
    match err {
        Error::Parameter(_) => TpcStatus::InvalidArgument,
        Error::Config(_) | Error::Json(_) | Error::Parse { .. } => TpcStatus::Config,
        Error::Domain(_) => TpcStatus::Domain,
        Error::Io(_) | Error::Snapshot(_) | Error::Csv(_) => TpcStatus::Io,
    }
}

struct Fail(TpcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(TpcStatus::Config, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TpcStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TpcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            TpcStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(TpcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn constants_to_c(c: &SmoothnessConstants) -> TpcConstants {
    TpcConstants {
        l_minus: c.l_minus,
        l_plus: c.l_plus,
        l_pm: c.l_pm,
        mu: c.mu.unwrap_or(f64::NAN),
    }
}

fn constants_from_c(c: &TpcConstants) -> SmoothnessConstants {
    SmoothnessConstants {
        l_minus: c.l_minus,
        l_plus: c.l_plus,
        l_pm: c.l_pm,
        mu: (!c.mu.is_nan()).then_some(c.mu),
    }
}

fn params_from_c(p: &TpcTheoryParams) -> threepc::TheoryParams {
    threepc::TheoryParams {
        a: p.a,
        b: p.b,
        s_star: (!p.s_star.is_nan()).then_some(p.s_star),
        aggregated: p.aggregated != 0,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tpc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generate a synthetic quadratic.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tpc_problem_quadratic_new(
    n: usize,
    d: usize,
    lambda: f64,
    s: f64,
    seed: u64,
    out: *mut *mut TpcProblem,
) -> TpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = gen_quadratic(n, d, lambda, s, &RngStream::new(seed).derive("quadratic", 0))?;
        *out = Box::into_raw(Box::new(TpcProblem { inner: Box::new(p) }));
        Ok(())
    })
}

/// Build any problem from its JSON description (the `problem` object of a
/// run config). Relative paths are taken from the working directory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpc_problem_from_json(json: *const c_char, seed: u64, out: *mut *mut TpcProblem) -> TpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: ProblemSpec = serde_json::from_str(read_str(json, "json")?)?;
        let inner = spec.build(seed, None)?;
        *out = Box::into_raw(Box::new(TpcProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must be a live handle; `d` and `n` may be null.
#[no_mangle]
pub unsafe extern "C" fn tpc_problem_shape(problem: *const TpcProblem, d: *mut usize, n: *mut usize) -> TpcStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if !d.is_null() {
            *d = p.inner.dim();
        }
        if !n.is_null() {
            *n = p.inner.n_clients();
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpc_problem_constants(problem: *const TpcProblem, out: *mut TpcConstants) -> TpcStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = constants_to_c(&p.inner.constants());
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn tpc_problem_free(problem: *mut TpcProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// `(A, B)` of a method given as JSON, at dimension `d` with `n` workers.
///
/// # Safety
/// `method_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpc_theory_params(
    method_json: *const c_char,
    d: usize,
    n: usize,
    out: *mut TpcTheoryParams,
) -> TpcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m: MethodSpec = serde_json::from_str(read_str(method_json, "method_json")?)?;
        let tp = m.theory_params(d, n)?;
        *out = TpcTheoryParams {
            a: tp.a,
            b: tp.b,
            s_star: tp.s_star.unwrap_or(f64::NAN),
            aggregated: tp.aggregated as u8,
        };
        Ok(())
    })
}

/// Theoretical stepsize; `pl` selects the strongly convex rule.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tpc_stepsize(
    constants: *const TpcConstants,
    params: *const TpcTheoryParams,
    pl: bool,
    out: *mut f64,
) -> TpcStatus {
    guard(|| {
        let c = constants_from_c(constants.as_ref().ok_or_else(|| null("constants"))?);
        let tp = params_from_c(params.as_ref().ok_or_else(|| null("params"))?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = if pl {
            theory::stepsize_pl(&c, &tp)?
        } else {
            theory::stepsize_noncvx(&c, &tp)
        };
        Ok(())
    })
}

/// Apply a compressor given as JSON to `x[0..d]`, writing `out[0..d]`.
/// Randomized compressors draw from `seed`.
///
/// # Safety
/// `x` and `out` must each point to `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn tpc_compress(
    compressor_json: *const c_char,
    x: *const f64,
    d: usize,
    worker: usize,
    n_workers: usize,
    seed: u64,
    out: *mut f64,
) -> TpcStatus {
    guard(|| {
        if x.is_null() || out.is_null() {
            return Err(null("x or out"));
        }
        let spec: CompressorSpec = serde_json::from_str(read_str(compressor_json, "compressor_json")?)?;
        spec.validate(d, n_workers)?;
        if worker >= n_workers {
            return Err(Fail(TpcStatus::OutOfRange, format!("worker {worker} >= {n_workers}")));
        }
        let input = DenseVector::from_vec(std::slice::from_raw_parts(x, d).to_vec());
        let shared = RngStream::new(seed).derive("shared", 0);
        let private = RngStream::new(seed).derive("worker", worker as u64);
        let ctx = CompressCtx {
            worker,
            n_workers,
            private: &private,
            shared: &shared,
            coin: None,
        };
        let c = spec.compress(&input, &ctx)?.to_dense(&input);
        std::slice::from_raw_parts_mut(out, d).copy_from_slice(c.as_slice());
        Ok(())
    })
}

fn one() -> f64 {
    1.0
}

fn rounds() -> usize {
    1000
}

/// Run settings accepted by `tpc_run`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    method: MethodSpec,
    #[serde(default)]
    stepsize: StepsizeSpec,
    #[serde(default = "one")]
    stepsize_multiplier: f64,
    #[serde(default = "rounds")]
    max_rounds: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    g0_mode: G0Mode,
    #[serde(default)]
    stop: StopRule,
}

/// Train on `problem`. `config_json` holds `method` and optionally
/// `stepsize`, `stepsize_multiplier`, `max_rounds`, `seed`, `g0_mode`, `stop`.
///
/// # Safety
/// `problem` must be a live handle, `config_json` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpc_run(
    problem: *const TpcProblem,
    config_json: *const c_char,
    out: *mut *mut TpcRun,
) -> TpcStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let req: RunRequest = serde_json::from_str(read_str(config_json, "config_json")?)?;
        let tp = req.method.theory_params(p.inner.dim(), p.inner.n_clients())?;
        let gamma = req.stepsize.resolve(&p.inner.constants(), &tp)?;
        let cfg = RunConfig {
            stepsize_multiplier: req.stepsize_multiplier,
            seed: req.seed,
            g0_mode: req.g0_mode,
            stop: req.stop,
            ..RunConfig::new(req.method, gamma, req.max_rounds)
        };
        let run = engine::run(p.inner.as_ref(), &cfg)?;
        *out = Box::into_raw(Box::new(TpcRun { out: run }));
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tpc_run_record_count(run: *const TpcRun) -> usize {
    run.as_ref().map_or(0, |r| r.out.records.len())
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpc_run_record(run: *const TpcRun, index: usize, out: *mut TpcRecord) -> TpcStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rec = r.out.records.get(index).ok_or_else(|| {
            Fail(
                TpcStatus::OutOfRange,
                format!("record {index} of {}", r.out.records.len()),
            )
        })?;
        *out = TpcRecord {
            t: rec.t as u64,
            f: rec.f,
            grad_norm_sq: rec.grad_norm_sq,
            g_t: rec.g_t,
            bits_cum_per_worker: rec.bits_cum_per_worker,
            transmitted_fraction: rec.transmitted_fraction,
        };
        Ok(())
    })
}

/// Copy the final iterate into `out`, which must hold exactly `len == d` doubles.
///
/// # Safety
/// `run` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tpc_run_final_iterate(run: *const TpcRun, out: *mut f64, len: usize) -> TpcStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = r.out.x_final.as_slice();
        if len != x.len() {
            return Err(Fail(
                TpcStatus::OutOfRange,
                format!("buffer holds {len}, iterate has {}", x.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(x);
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpc_run_termination(run: *const TpcRun, out: *mut TpcTermination) -> TpcStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match r.out.termination {
            Termination::Converged => TpcTermination::Converged,
            Termination::MaxRounds => TpcTermination::MaxRounds,
            Termination::Diverged => TpcTermination::Diverged,
            Termination::BitBudget => TpcTermination::BitBudget,
            Termination::TimeLimit => TpcTermination::TimeLimit,
        };
        Ok(())
    })
}

/// Effective stepsize used by the run, or NaN for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tpc_run_stepsize(run: *const TpcRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.out.stepsize)
}

/// # Safety
/// `run` must be null or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn tpc_run_free(run: *mut TpcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
