//! C ABI over `homlab`.
//!
//! Conventions:
//! - every fallible function returns a [`HomlabStatus`] and writes results
//!   through out-pointers, which are left untouched on failure;
//! - models and cell solutions are opaque handles released with the matching
//!   `*_free` function (passing `NULL` is a no-op);
//! - the message of the most recent failure on the calling thread is
//!   available from [`homlab_last_error_message`];
//! - panics never cross the boundary; they surface as `HOMLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use homlab::analysis::rate_fit;
use homlab::cell::{solve_cell, CellOptions, PeriodicCellSolution};
use homlab::pipeline::{run_pipeline, RunOptions};
use homlab::{make_preset, validate, CoefficientModel, Config, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    Compatibility = 5,
    Coercivity = 6,
    Spectral = 7,
    InsufficientData = 8,
    Io = 9,
    Panic = 99,
}

/// Coefficient model `(A, W, f)`.
pub struct HomlabModel {
    inner: CoefficientModel,
}

/// Solved periodic cell problems.
pub struct HomlabCellSolution {
    inner: PeriodicCellSolution,
}

/// Preset validation on a sampling lattice.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct HomlabValidation {
    pub max_symmetry_defect: f64,
    pub min_rayleigh: f64,
    pub max_rayleigh: f64,
    pub max_periodicity_defect: f64,
    pub mean_w: f64,
    /// 1 when every check passed.
    pub passed: c_int,
}

/// Least-squares fit of `log v = slope · log ε + intercept`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct HomlabRate {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> HomlabStatus {
    match err {
        Error::Config(_) | Error::Usage(_) => HomlabStatus::Config,
        Error::Assembly { .. } | Error::Solver { .. } | Error::Breakdown { .. } => HomlabStatus::Solver,
        Error::Compatibility { .. } => HomlabStatus::Compatibility,
        Error::Coercivity { .. } => HomlabStatus::Coercivity,
        Error::Spectral(_) => HomlabStatus::Spectral,
        Error::InsufficientData(_) => HomlabStatus::InsufficientData,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => HomlabStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (HomlabStatus, String)>) -> HomlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HomlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HomlabStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (HomlabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (HomlabStatus, String) {
    (HomlabStatus::NullPointer, format!("{name} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (HomlabStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HomlabStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, (HomlabStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (HomlabStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn homlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator, so a caller can size a second call.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn homlab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a model from preset names (`identity`, `layered`, `smooth-iso`;
/// `zero`, `sine1`, `sine-mix`; `one`, `sine-sine`).
///
/// # Safety
/// The name arguments must be NULL or NUL-terminated strings; `out_model`
/// must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_model_new(
    a_preset: *const c_char,
    w_preset: *const c_char,
    f_preset: *const c_char,
    out_model: *mut *mut HomlabModel,
) -> HomlabStatus {
    guard(|| {
        let a = str_arg(a_preset, "a_preset")?;
        let w = str_arg(w_preset, "w_preset")?;
        let f = str_arg(f_preset, "f_preset")?;
        let out_model = out(out_model, "out_model")?;
        let inner = make_preset(a, w, f).map_err(lib_err)?;
        *out_model = Box::into_raw(Box::new(HomlabModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`homlab_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homlab_model_free(model: *mut HomlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `A(y)` in row-major order.
///
/// # Safety
/// `model` must be a live handle; `out_a` must be NULL or point to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn homlab_model_eval_a(model: *const HomlabModel, y1: f64, y2: f64, out_a: *mut f64) -> HomlabStatus {
    guard(|| {
        let m = obj(model, "model")?;
        if out_a.is_null() {
            return Err(null("out_a"));
        }
        let a = m.inner.a([y1, y2]);
        let out_a = std::slice::from_raw_parts_mut(out_a, 4);
        out_a.copy_from_slice(&[a[0][0], a[0][1], a[1][0], a[1][1]]);
        Ok(())
    })
}

/// `W(y)`.
///
/// # Safety
/// `model` must be a live handle; `out_w` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_model_eval_w(model: *const HomlabModel, y1: f64, y2: f64, out_w: *mut f64) -> HomlabStatus {
    guard(|| {
        let m = obj(model, "model")?;
        *out(out_w, "out_w")? = m.inner.w([y1, y2]);
        Ok(())
    })
}

/// Samples the model on a `lattice_n × lattice_n` lattice and checks
/// symmetry, ellipticity, periodicity and the mean of `W`.
///
/// # Safety
/// `model` must be a live handle; `out_report` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_model_validate(
    model: *const HomlabModel,
    lattice_n: usize,
    out_report: *mut HomlabValidation,
) -> HomlabStatus {
    guard(|| {
        let m = obj(model, "model")?;
        let out_report = out(out_report, "out_report")?;
        if lattice_n == 0 {
            return Err((HomlabStatus::InvalidArgument, "lattice_n must be positive".into()));
        }
        let r = validate(&m.inner, lattice_n);
        *out_report = HomlabValidation {
            max_symmetry_defect: r.max_symmetry_defect,
            min_rayleigh: r.min_rayleigh,
            max_rayleigh: r.max_rayleigh,
            max_periodicity_defect: r.max_periodicity_defect,
            mean_w: r.mean_w,
            passed: r.passed as c_int,
        };
        Ok(())
    })
}

/// Solves the cell problems on an `n × n` periodic grid (`n ≥ 4`).
///
/// # Safety
/// `model` must be a live handle; `out_solution` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_cell_solve(
    model: *const HomlabModel,
    n: usize,
    out_solution: *mut *mut HomlabCellSolution,
) -> HomlabStatus {
    guard(|| {
        let m = obj(model, "model")?;
        let out_solution = out(out_solution, "out_solution")?;
        if n < 4 {
            return Err((HomlabStatus::InvalidArgument, format!("cell grid n must be at least 4, got {n}")));
        }
        let inner = solve_cell(&m.inner, &CellOptions::new(n)).map_err(lib_err)?;
        *out_solution = Box::into_raw(Box::new(HomlabCellSolution { inner }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be NULL or a handle from [`homlab_cell_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homlab_cell_free(solution: *mut HomlabCellSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// `Â` in row-major order.
///
/// # Safety
/// `solution` must be a live handle; `out_a_hat` must be NULL or point to 4
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn homlab_cell_effective_matrix(solution: *const HomlabCellSolution, out_a_hat: *mut f64) -> HomlabStatus {
    guard(|| {
        let s = obj(solution, "solution")?;
        if out_a_hat.is_null() {
            return Err(null("out_a_hat"));
        }
        let a = s.inner.a_hat;
        std::slice::from_raw_parts_mut(out_a_hat, 4).copy_from_slice(&[a[0][0], a[0][1], a[1][0], a[1][1]]);
        Ok(())
    })
}

/// `M(Wχ_w)`.
///
/// # Safety
/// `solution` must be a live handle; `out_m` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_cell_effective_potential(solution: *const HomlabCellSolution, out_m: *mut f64) -> HomlabStatus {
    guard(|| {
        let s = obj(solution, "solution")?;
        *out(out_m, "out_m")? = s.inner.m_w_chi_w;
        Ok(())
    })
}

/// `χ_w(y)`, interpolated bilinearly from the grid.
///
/// # Safety
/// `solution` must be a live handle; `out_value` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_cell_chi_w(solution: *const HomlabCellSolution, y1: f64, y2: f64, out_value: *mut f64) -> HomlabStatus {
    guard(|| {
        let s = obj(solution, "solution")?;
        *out(out_value, "out_value")? = s.inner.chi_w_at([y1, y2]);
        Ok(())
    })
}

/// Fits `len` points `(eps[i], values[i])` on log-log axes. Points with a
/// non-positive value are dropped; at least three must remain.
///
/// # Safety
/// `eps` and `values` must point to `len` doubles; `out_rate` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_rate_fit(eps: *const f64, values: *const f64, len: usize, out_rate: *mut HomlabRate) -> HomlabStatus {
    guard(|| {
        if eps.is_null() {
            return Err(null("eps"));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let out_rate = out(out_rate, "out_rate")?;
        let eps = std::slice::from_raw_parts(eps, len);
        let values = std::slice::from_raw_parts(values, len);
        let points: Vec<(f64, f64)> = eps.iter().copied().zip(values.iter().copied()).collect();
        let r = rate_fit("ffi", &points).map_err(lib_err)?;
        *out_rate = HomlabRate { slope: r.slope, intercept: r.intercept, r2: r.r2 };
        Ok(())
    })
}

/// Runs the full pipeline on a config file, writing every artifact. When
/// `output_dir` is non-NULL it overrides the config's `output_dir`. On
/// failure `out_exit_code` (if non-NULL) receives the CLI exit code of the
/// failing stage.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `output_dir` NULL or a
/// NUL-terminated string; `out_exit_code` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn homlab_run_experiment(
    config_path: *const c_char,
    output_dir: *const c_char,
    out_exit_code: *mut c_int,
) -> HomlabStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let dir = if output_dir.is_null() { None } else { Some(str_arg(output_dir, "output_dir")?) };
        let exit = |code: c_int| {
            if let Some(e) = out_exit_code.as_mut() {
                *e = code;
            }
        };
        let mut cfg = Config::from_file(path.as_ref()).map_err(|e| {
            exit(2);
            lib_err(e)
        })?;
        if let Some(d) = dir {
            cfg.output_dir = PathBuf::from(d);
        }
        match run_pipeline(&cfg, RunOptions::default()) {
            Ok(_) => {
                exit(0);
                Ok(())
            }
            Err(e) => {
                exit(e.exit_code());
                Err((status_of(&e.source), e.to_string()))
            }
        }
    })
}
