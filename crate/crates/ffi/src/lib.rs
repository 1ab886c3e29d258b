//! C ABI for `tgvd`.
//!
//! Images are opaque [`TgvdImage`] handles owned by the caller and released
//! with [`tgvd_image_free`]. Every fallible call returns a [`TgvdStatus`];
//! on failure [`tgvd_last_error`] describes the error on the calling thread.
//! Panics are caught at the boundary and reported as [`TgvdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tgvd::cli::{load_image, save_image};
use tgvd::pipeline::{self, estimate_noise_mad, DenoiseOptions, Method, NoiseEstimate, ParamOverrides, StepOverrides};
use tgvd::solvers::{Algorithm, PreconditionerKind};
use tgvd::ScalarField;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgvdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// The solver stopped at `max_iters`; the output image is still set.
    NotConverged = 4,
    SolverFailure = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgvdMethod {
    Rof = 0,
    Dgtv = 1,
    Dgtgv = 2,
    Tgv = 3,
    Mtgv = 4,
    MtgvW = 5,
    Ctgv = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgvdSolver {
    ChambollePock = 0,
    DouglasRachford = 1,
    DouglasRachfordInexact = 2,
}

/// Denoising options. Parameters set to NaN (and `pcg_iters = 0`) take
/// their parameter-free defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TgvdOptions {
    pub method: TgvdMethod,
    pub solver: TgvdSolver,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub alpha: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub c: f64,
    pub pcg_iters: usize,
    /// Nonzero to use the block incomplete Cholesky preconditioner.
    pub use_preconditioner: u8,
}

/// Outcome of [`tgvd_denoise`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TgvdSummary {
    pub iterations: usize,
    pub relative_gap: f64,
    pub wall_time_s: f64,
    pub converged: u8,
    pub sigma_hat: f64,
}

/// Opaque grayscale image on `[0, 1]`.
pub struct TgvdImage {
    field: ScalarField,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> Result<TgvdStatus, (TgvdStatus, String)>) -> TgvdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            TgvdStatus::Panic
        }
    }
}

fn null() -> (TgvdStatus, String) {
    (TgvdStatus::NullPointer, "null pointer argument".into())
}

unsafe fn path_arg(path: *const c_char) -> Result<String, (TgvdStatus, String)> {
    if path.is_null() {
        return Err(null());
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(path) }
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (TgvdStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn boxed(field: ScalarField) -> *mut TgvdImage {
    Box::into_raw(Box::new(TgvdImage { field }))
}

/// Message for the most recent failure on this thread (empty if none).
/// The pointer is valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tgvd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn tgvd_status_message(status: TgvdStatus) -> *const c_char {
    let s: &'static CStr = match status {
        TgvdStatus::Ok => c"ok",
        TgvdStatus::NullPointer => c"null pointer",
        TgvdStatus::InvalidArgument => c"invalid argument",
        TgvdStatus::Io => c"i/o or format error",
        TgvdStatus::NotConverged => c"solver did not converge",
        TgvdStatus::SolverFailure => c"solver failure",
        TgvdStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies `rows * cols` row-major values into a new image.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut TgvdImage,
) -> TgvdStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return Err(null());
        }
        let len = rows
            .checked_mul(cols)
            .ok_or((TgvdStatus::InvalidArgument, "size overflow".to_string()))?;
        // SAFETY: caller guarantees `len` readable values.
        let values = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        let field =
            ScalarField::from_vec(rows, cols, values).map_err(|e| (TgvdStatus::InvalidArgument, e.to_string()))?;
        // SAFETY: checked non-null.
        unsafe { *out = boxed(field) };
        Ok(TgvdStatus::Ok)
    })
}

/// Releases an image; null is ignored.
///
/// # Safety
/// `image` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_free(image: *mut TgvdImage) {
    if !image.is_null() {
        // SAFETY: pointer was produced by `Box::into_raw`.
        drop(unsafe { Box::from_raw(image) });
    }
}

/// Loads an 8- or 16-bit PGM file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_load_pgm(path: *const c_char, out: *mut *mut TgvdImage) -> TgvdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        // SAFETY: forwarded caller contract.
        let path = unsafe { path_arg(path) }?;
        let field = load_image(&path).map_err(|e| (TgvdStatus::Io, e.to_string()))?;
        // SAFETY: checked non-null.
        unsafe { *out = boxed(field) };
        Ok(TgvdStatus::Ok)
    })
}

/// Saves as 8-bit binary PGM, clamping to `[0, 1]`.
///
/// # Safety
/// `image` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_save_pgm(image: *const TgvdImage, path: *const c_char) -> TgvdStatus {
    guard(|| {
        // SAFETY: caller passes a live handle or null.
        let image = unsafe { image.as_ref() }.ok_or_else(null)?;
        // SAFETY: forwarded caller contract.
        let path = unsafe { path_arg(path) }?;
        save_image(&image.field, &path).map_err(|e| (TgvdStatus::Io, e.to_string()))?;
        Ok(TgvdStatus::Ok)
    })
}

/// Number of rows, or 0 for null.
///
/// # Safety
/// `image` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_rows(image: *const TgvdImage) -> usize {
    // SAFETY: caller contract.
    unsafe { image.as_ref() }.map_or(0, |i| i.field.rows())
}

/// Number of columns, or 0 for null.
///
/// # Safety
/// `image` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_cols(image: *const TgvdImage) -> usize {
    // SAFETY: caller contract.
    unsafe { image.as_ref() }.map_or(0, |i| i.field.cols())
}

/// Copies the row-major pixel values into `out`, which holds `len` doubles.
///
/// # Safety
/// `image` must be a live handle; `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tgvd_image_copy_data(image: *const TgvdImage, out: *mut f64, len: usize) -> TgvdStatus {
    guard(|| {
        // SAFETY: caller contract.
        let image = unsafe { image.as_ref() }.ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let data = image.field.as_slice();
        if len < data.len() {
            return Err((
                TgvdStatus::InvalidArgument,
                format!("buffer holds {len} values, image has {}", data.len()),
            ));
        }
        // SAFETY: `out` holds at least `data.len()` values.
        unsafe { ptr::copy_nonoverlapping(data.as_ptr(), out, data.len()) };
        Ok(TgvdStatus::Ok)
    })
}

/// Default options: MTGV, Chambolle-Pock, relative gap `1e-4`,
/// 20000 iterations, all model parameters from the noise estimate.
#[no_mangle]
pub extern "C" fn tgvd_options_default() -> TgvdOptions {
    TgvdOptions {
        method: TgvdMethod::Mtgv,
        solver: TgvdSolver::ChambollePock,
        gap_tol: 1e-4,
        max_iters: 20_000,
        alpha: f64::NAN,
        alpha0: f64::NAN,
        alpha1: f64::NAN,
        delta1: f64::NAN,
        delta2: f64::NAN,
        c: f64::NAN,
        pcg_iters: 0,
        use_preconditioner: 1,
    }
}

fn finite(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

fn to_options(o: &TgvdOptions) -> (Method, DenoiseOptions) {
    let method = match o.method {
        TgvdMethod::Rof => Method::Rof,
        TgvdMethod::Dgtv => Method::Dgtv,
        TgvdMethod::Dgtgv => Method::Dgtgv,
        TgvdMethod::Tgv => Method::Tgv,
        TgvdMethod::Mtgv => Method::Mtgv,
        TgvdMethod::MtgvW => Method::MtgvW,
        TgvdMethod::Ctgv => Method::Ctgv,
    };
    let algorithm = match o.solver {
        TgvdSolver::ChambollePock => Algorithm::ChambollePock,
        TgvdSolver::DouglasRachford => Algorithm::DrExact,
        TgvdSolver::DouglasRachfordInexact => Algorithm::DrInexact,
    };
    let options = DenoiseOptions {
        algorithm,
        gap_tol: o.gap_tol,
        max_iters: o.max_iters,
        params: ParamOverrides {
            alpha: finite(o.alpha),
            alpha0: finite(o.alpha0),
            alpha1: finite(o.alpha1),
            delta1: finite(o.delta1),
            delta2: finite(o.delta2),
            c: finite(o.c),
        },
        steps: StepOverrides {
            pcg_iters: (o.pcg_iters > 0).then_some(o.pcg_iters),
            preconditioner: Some(if o.use_preconditioner != 0 {
                PreconditionerKind::IcholBlock
            } else {
                PreconditionerKind::None
            }),
            ..StepOverrides::default()
        },
    };
    (method, options)
}

/// Denoises `input`. On [`TgvdStatus::Ok`] and [`TgvdStatus::NotConverged`]
/// a new image is written to `out`; `summary` may be null.
///
/// # Safety
/// `input` must be a live handle, `options` readable (or null for
/// defaults), `out` writable, `summary` writable or null.
#[no_mangle]
pub unsafe extern "C" fn tgvd_denoise(
    input: *const TgvdImage,
    options: *const TgvdOptions,
    out: *mut *mut TgvdImage,
    summary: *mut TgvdSummary,
) -> TgvdStatus {
    guard(|| {
        // SAFETY: caller contract.
        let input = unsafe { input.as_ref() }.ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        // SAFETY: caller contract.
        let raw = unsafe { options.as_ref() }.copied().unwrap_or_else(|| tgvd_options_default());
        let (method, opts) = to_options(&raw);
        let u0 = &input.field;
        let estimate = match estimate_noise_mad(u0) {
            Ok(e) => e,
            Err(_) if opts.params.delta1.is_some() => NoiseEstimate::from_sigma(0.0, u0.rows(), u0.cols()),
            Err(e) => return Err((TgvdStatus::InvalidArgument, e.to_string())),
        };
        let outcome = pipeline::denoise(method, u0, &estimate, &opts).map_err(|e| {
            let status = match e {
                tgvd::PipelineError::Problem(_) | tgvd::PipelineError::Grid(_) | tgvd::PipelineError::TooSmall { .. } => {
                    TgvdStatus::InvalidArgument
                }
                tgvd::PipelineError::Solver(tgvd::SolverError::Config(_)) => TgvdStatus::InvalidArgument,
                _ => TgvdStatus::SolverFailure,
            };
            (status, e.to_string())
        })?;
        // SAFETY: caller contract.
        if let Some(s) = unsafe { summary.as_mut() } {
            *s = TgvdSummary {
                iterations: outcome.iterations(),
                relative_gap: outcome.relative_gap(),
                wall_time_s: outcome.wall_time().as_secs_f64(),
                converged: outcome.converged() as u8,
                sigma_hat: estimate.sigma,
            };
        }
        let (converged, gap) = (outcome.converged(), outcome.relative_gap());
        // SAFETY: checked non-null.
        unsafe { *out = boxed(outcome.image) };
        if converged {
            Ok(TgvdStatus::Ok)
        } else {
            set_error(format!("stopped at relative gap {gap:.3e}"));
            Ok(TgvdStatus::NotConverged)
        }
    })
}

/// PSNR in dB (peak 1) of `image` against `reference`; `+inf` if identical.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tgvd_psnr(image: *const TgvdImage, reference: *const TgvdImage, out: *mut f64) -> TgvdStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (a, b) = unsafe { (image.as_ref(), reference.as_ref()) };
        let (a, b) = a.zip(b).ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let db = pipeline::psnr(&a.field, &b.field).map_err(|e| (TgvdStatus::InvalidArgument, e.to_string()))?;
        // SAFETY: checked non-null.
        unsafe { *out = db };
        Ok(TgvdStatus::Ok)
    })
}

/// Noise standard deviation and norm estimated from the image.
///
/// # Safety
/// `image` must be live; `sigma` and `delta1` writable (either may be null).
#[no_mangle]
pub unsafe extern "C" fn tgvd_estimate_noise(image: *const TgvdImage, sigma: *mut f64, delta1: *mut f64) -> TgvdStatus {
    guard(|| {
        // SAFETY: caller contract.
        let image = unsafe { image.as_ref() }.ok_or_else(null)?;
        let e = estimate_noise_mad(&image.field).map_err(|e| (TgvdStatus::InvalidArgument, e.to_string()))?;
        // SAFETY: caller contract; null pointers are skipped.
        unsafe {
            if let Some(s) = sigma.as_mut() {
                *s = e.sigma;
            }
            if let Some(d) = delta1.as_mut() {
                *d = e.delta1;
            }
        }
        Ok(TgvdStatus::Ok)
    })
}
