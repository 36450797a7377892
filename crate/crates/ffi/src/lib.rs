//! C ABI over the pvgp forecasting engine.
//!
//! Every fallible function returns a [`PvgpStatus`]. On failure the
//! message is kept per thread and read back with
//! [`pvgp_last_error_message`]. Kernels and models are opaque handles
//! released with their `_free` function. Arrays of input rows are
//! row-major `n * dim` doubles whose first column is time (in 5-minute
//! steps) and must be strictly increasing for training data.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pvgp::geo::{latlon_to_tm, tm_to_latlon, TmParams};
use pvgp::gp::{fit_hyperparameters, FitOptions, GpModel, Inputs, TrainingSet};
use pvgp::kernels::{eval_composite, KernelSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvgpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numerical = 4,
    Panic = 5,
}

/// A parsed covariance kernel.
pub struct PvgpKernel {
    spec: KernelSpec,
}

/// A GP conditioned on training data.
pub struct PvgpModel {
    model: GpModel,
    log_likelihood: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PvgpStatus, msg: impl Into<String>) -> PvgpStatus {
    set_error(msg.into());
    status
}

fn from_error(e: pvgp::Error) -> PvgpStatus {
    let status = match &e {
        pvgp::Error::KernelSyntax { .. } | pvgp::Error::InvalidKernel(_) => PvgpStatus::Parse,
        e if e.is_numerical() => PvgpStatus::Numerical,
        _ => PvgpStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Run `f`, turning a panic into [`PvgpStatus::Panic`].
fn guard(f: impl FnOnce() -> PvgpStatus) -> PvgpStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        fail(PvgpStatus::Panic, format!("internal panic: {msg}"))
    })
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(PvgpStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// # Safety
/// `data` must point to `len` readable doubles (or be null when `len` is 0).
unsafe fn slice<'a>(data: *const f64, len: usize) -> &'a [f64] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(data, len)
    }
}

/// # Safety
/// `data` must point to `n * dim` readable doubles.
unsafe fn inputs(data: *const f64, n: usize, dim: usize) -> pvgp::Result<Inputs> {
    let len = n.checked_mul(dim).ok_or_else(|| pvgp::Error::InvalidInput("n * dim overflows".into()))?;
    Inputs::new(dim, slice(data, len).to_vec())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pvgp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse kernel text such as `periodic(matern12) + whitenoise()`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_kernel_parse(text: *const c_char, out: *mut *mut PvgpKernel) -> PvgpStatus {
    non_null!(text, out);
    guard(|| {
        let Ok(src) = CStr::from_ptr(text).to_str() else {
            return fail(PvgpStatus::InvalidArgument, "kernel text is not UTF-8");
        };
        let spec: KernelSpec = try_ffi!(src.parse());
        *out = Box::into_raw(Box::new(PvgpKernel { spec }));
        PvgpStatus::Ok
    })
}

/// # Safety
/// `kernel` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pvgp_kernel_free(kernel: *mut PvgpKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Canonical text of a kernel, with every parameter spelled out. Release
/// the string with [`pvgp_string_free`].
///
/// # Safety
/// `kernel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_kernel_to_string(kernel: *const PvgpKernel, out: *mut *mut c_char) -> PvgpStatus {
    non_null!(kernel, out);
    guard(|| {
        let text = (*kernel).spec.to_string();
        match CString::new(text) {
            Ok(c) => {
                *out = c.into_raw();
                PvgpStatus::Ok
            }
            Err(_) => fail(PvgpStatus::InvalidArgument, "kernel text contains NUL"),
        }
    })
}

/// # Safety
/// `s` must come from this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pvgp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Covariance between rows `xi` and `xj` of length `dim`. White noise
/// is added when the sample indices `i` and `j` are equal.
///
/// # Safety
/// `xi` and `xj` must hold `dim` doubles each, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_kernel_eval(
    kernel: *const PvgpKernel,
    xi: *const f64,
    xj: *const f64,
    dim: usize,
    i: usize,
    j: usize,
    out: *mut f64,
) -> PvgpStatus {
    non_null!(kernel, xi, xj, out);
    guard(|| {
        *out = try_ffi!(eval_composite(slice(xi, dim), slice(xj, dim), i, j, &(*kernel).spec));
        PvgpStatus::Ok
    })
}

fn training_set(x: *const f64, n: usize, dim: usize, y: *const f64) -> pvgp::Result<TrainingSet> {
    // SAFETY: callers pass the sizes the C caller promised.
    unsafe { TrainingSet::new(inputs(x, n, dim)?, slice(y, n).to_vec()) }
}

/// Condition `kernel` on `n` rows of `dim` inputs `x` and targets `y`.
///
/// # Safety
/// `x` must hold `n * dim` doubles, `y` `n` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_model_new(
    kernel: *const PvgpKernel,
    x: *const f64,
    n: usize,
    dim: usize,
    y: *const f64,
    out: *mut *mut PvgpModel,
) -> PvgpStatus {
    non_null!(kernel, x, y, out);
    guard(|| {
        let train = try_ffi!(training_set(x, n, dim, y));
        let model = try_ffi!(GpModel::new(train, &(*kernel).spec));
        let log_likelihood = model.log_marginal_likelihood();
        *out = Box::into_raw(Box::new(PvgpModel { model, log_likelihood }));
        PvgpStatus::Ok
    })
}

/// Fit the hyperparameters of `template` by maximum marginal likelihood
/// and condition the result on the data. Deterministic for a given seed.
///
/// # Safety
/// As [`pvgp_model_new`].
#[no_mangle]
pub unsafe extern "C" fn pvgp_model_fit(
    template: *const PvgpKernel,
    x: *const f64,
    n: usize,
    dim: usize,
    y: *const f64,
    restarts: usize,
    seed: u64,
    out: *mut *mut PvgpModel,
) -> PvgpStatus {
    non_null!(template, x, y, out);
    guard(|| {
        let train = try_ffi!(training_set(x, n, dim, y));
        let opts = FitOptions {
            restarts,
            seed,
            ..Default::default()
        };
        let fit = try_ffi!(fit_hyperparameters(&train, &(*template).spec, &opts));
        let model = try_ffi!(GpModel::new(train, &fit.spec));
        *out = Box::into_raw(Box::new(PvgpModel {
            model,
            log_likelihood: fit.log_likelihood,
        }));
        PvgpStatus::Ok
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pvgp_model_free(model: *mut PvgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Posterior mean and, when `variance` is not null, marginal variance of
/// the latent function at `m` query rows.
///
/// # Safety
/// `query` must hold `m * dim` doubles; `mean` (and `variance` if given)
/// must have room for `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn pvgp_model_predict(
    model: *const PvgpModel,
    query: *const f64,
    m: usize,
    dim: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> PvgpStatus {
    non_null!(model, query, mean);
    guard(|| {
        let q = try_ffi!(inputs(query, m, dim));
        let post = try_ffi!((*model).model.predict(&q));
        std::slice::from_raw_parts_mut(mean, m).copy_from_slice(post.mean.as_slice());
        if !variance.is_null() {
            let var = std::slice::from_raw_parts_mut(variance, m);
            for (k, v) in var.iter_mut().enumerate() {
                *v = post.cov[(k, k)];
            }
        }
        PvgpStatus::Ok
    })
}

/// Log marginal likelihood of the training targets (after centring and
/// scaling) under the model's kernel.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_model_log_likelihood(model: *const PvgpModel, out: *mut f64) -> PvgpStatus {
    non_null!(model, out);
    *out = (*model).log_likelihood;
    PvgpStatus::Ok
}

/// Copy of the model's kernel as a new handle.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_model_kernel(model: *const PvgpModel, out: *mut *mut PvgpKernel) -> PvgpStatus {
    non_null!(model, out);
    guard(|| {
        let spec = (*model).model.spec().clone();
        *out = Box::into_raw(Box::new(PvgpKernel { spec }));
        PvgpStatus::Ok
    })
}

/// Mean absolute error of two length-`n` series.
///
/// # Safety
/// `actual` and `predicted` must hold `n` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_mae(actual: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> PvgpStatus {
    non_null!(actual, predicted, out);
    guard(|| {
        *out = try_ffi!(pvgp::experiments::mae(slice(actual, n), slice(predicted, n)));
        PvgpStatus::Ok
    })
}

/// OSGB36 latitude and longitude (degrees) to British National Grid metres.
///
/// # Safety
/// `easting` and `northing` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_latlon_to_bng(lat: f64, lon: f64, easting: *mut f64, northing: *mut f64) -> PvgpStatus {
    non_null!(easting, northing);
    guard(|| {
        let (e, n) = try_ffi!(latlon_to_tm(lat, lon, &TmParams::BRITISH_NATIONAL_GRID));
        *easting = e;
        *northing = n;
        PvgpStatus::Ok
    })
}

/// British National Grid metres to OSGB36 latitude and longitude.
///
/// # Safety
/// `lat` and `lon` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvgp_bng_to_latlon(easting: f64, northing: f64, lat: *mut f64, lon: *mut f64) -> PvgpStatus {
    non_null!(lat, lon);
    guard(|| {
        let (a, b) = try_ffi!(tm_to_latlon(easting, northing, &TmParams::BRITISH_NATIONAL_GRID));
        *lat = a;
        *lon = b;
        PvgpStatus::Ok
    })
}
