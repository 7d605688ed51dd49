//! C ABI for loading trained softcheck models and scoring inputs.
//!
//! Every fallible function returns a [`SoftcheckStatus`]; on failure the
//! message is available from [`softcheck_last_error_message`] on the same
//! thread. Models are opaque handles created by [`softcheck_model_load`] and
//! released with [`softcheck_model_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, c_double, c_int, size_t};
use softcheck::matrix::Matrix;
use softcheck::{metrics, ChecksumSpec, Error, ModelFile, TrustLabel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftcheckStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Shape = 4,
    Data = 5,
    Numeric = 6,
    Sampling = 7,
    Parse = 8,
    UndefinedCorrelation = 9,
    Io = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftcheckChecksumKind {
    Linear = 0,
    Sinusoid = 1,
}

/// Opaque handle to a loaded model.
pub struct SoftcheckModel {
    file: ModelFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> SoftcheckStatus {
    match err {
        Error::Config(_) => SoftcheckStatus::Config,
        Error::Shape(_) => SoftcheckStatus::Shape,
        Error::Data(_) => SoftcheckStatus::Data,
        Error::Numeric { .. } => SoftcheckStatus::Numeric,
        Error::Sampling { .. } => SoftcheckStatus::Sampling,
        Error::Parse { .. } => SoftcheckStatus::Parse,
        Error::UndefinedCorrelation(_) => SoftcheckStatus::UndefinedCorrelation,
        Error::Io { .. } => SoftcheckStatus::Io,
    }
}

struct Fail(SoftcheckStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SoftcheckStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SoftcheckStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SoftcheckStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SoftcheckStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model_ref<'a>(model: *const SoftcheckModel) -> Result<&'a SoftcheckModel, Fail> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn input_matrix(x: *const c_double, n: size_t, d: size_t) -> Result<Matrix, Fail> {
    let len = n.checked_mul(d).ok_or_else(|| {
        Fail(SoftcheckStatus::Shape, "n * d overflows".to_string())
    })?;
    let data = slice(x, len, "x")?.to_vec();
    Ok(Matrix::from_vec(n, d, data)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn softcheck_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn softcheck_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads a model file and stores a new handle in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn softcheck_model_load(
    path: *const c_char,
    out: *mut *mut SoftcheckModel,
) -> SoftcheckStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Fail(SoftcheckStatus::InvalidUtf8, format!("path: {e}")))?;
        let file = ModelFile::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(SoftcheckModel { file }));
        Ok(())
    })
}

/// Releases a handle from [`softcheck_model_load`]. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a live handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn softcheck_model_free(model: *mut SoftcheckModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features `d`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn softcheck_model_input_dim(
    model: *const SoftcheckModel,
    out: *mut size_t,
) -> SoftcheckStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.file.params.input_dim();
        Ok(())
    })
}

/// Number of predicted targets `k`, excluding the check node.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn softcheck_model_output_dim(
    model: *const SoftcheckModel,
    out: *mut size_t,
) -> SoftcheckStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.file.params.output_dim();
        Ok(())
    })
}

/// Runs the network on `n` row-major inputs of width `d`.
///
/// Writes `n × k` normalized predictions to `y_hat` and `n` check node outputs to `c_hat`.
///
/// # Safety
/// `x` must hold `n * d` values, `y_hat` room for `n * k`, `c_hat` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn softcheck_model_forward(
    model: *const SoftcheckModel,
    x: *const c_double,
    n: size_t,
    d: size_t,
    y_hat: *mut c_double,
    c_hat: *mut c_double,
) -> SoftcheckStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = m.file.params.forward(&input_matrix(x, n, d)?)?;
        slice_mut(y_hat, out.y_hat.as_slice().len(), "y_hat")?.copy_from_slice(out.y_hat.as_slice());
        slice_mut(c_hat, n, "c_hat")?.copy_from_slice(&out.c_hat);
        Ok(())
    })
}

/// Per-sample checksum errors `(C(ŷ) − Ĉ)²` using the model's own checksum.
///
/// # Safety
/// `x` must hold `n * d` values and `errors` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn softcheck_model_checksum_errors(
    model: *const SoftcheckModel,
    x: *const c_double,
    n: size_t,
    d: size_t,
    errors: *mut c_double,
) -> SoftcheckStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = m.file.params.forward(&input_matrix(x, n, d)?)?;
        let dst = slice_mut(errors, n, "errors")?;
        for (slot, (row, c)) in dst.iter_mut().zip(out.y_hat.iter_rows().zip(&out.c_hat)) {
            *slot = softcheck::checksum_error(*c, row, &m.file.checksum)?;
        }
        Ok(())
    })
}

/// Threshold below which a fraction `tn_rate` of `errors` falls.
///
/// # Safety
/// `errors` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn softcheck_calibrate_threshold(
    errors: *const c_double,
    n: size_t,
    tn_rate: c_double,
    out: *mut c_double,
) -> SoftcheckStatus {
    guard(|| {
        let t = metrics::calibrate_threshold(slice(errors, n, "errors")?, tn_rate)?;
        *out.as_mut().ok_or_else(|| null("out"))? = t;
        Ok(())
    })
}

/// Fraction of OOD `errors` at or below `threshold`.
///
/// # Safety
/// `errors` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn softcheck_fnr99(
    errors: *const c_double,
    n: size_t,
    threshold: c_double,
    out: *mut c_double,
) -> SoftcheckStatus {
    guard(|| {
        let r = metrics::fnr99(slice(errors, n, "errors")?, threshold)?;
        *out.as_mut().ok_or_else(|| null("out"))? = r;
        Ok(())
    })
}

/// 1 when `checksum_error` exceeds `threshold` (flagged OOD), 0 otherwise.
#[no_mangle]
pub extern "C" fn softcheck_flag(checksum_error: c_double, threshold: c_double) -> c_int {
    match metrics::flag(checksum_error, threshold) {
        TrustLabel::Ood => 1,
        TrustLabel::Id => 0,
    }
}

/// Evaluates a checksum over `k` values. `w` is ignored for the linear kind.
///
/// # Safety
/// `y` must hold `k` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn softcheck_checksum(
    kind: SoftcheckChecksumKind,
    w: c_double,
    y: *const c_double,
    k: size_t,
    out: *mut c_double,
) -> SoftcheckStatus {
    guard(|| {
        let spec = match kind {
            SoftcheckChecksumKind::Linear => ChecksumSpec::Linear,
            SoftcheckChecksumKind::Sinusoid => ChecksumSpec::sinusoid(w)?,
        };
        let v = softcheck::checksum(&spec, slice(y, k, "y")?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}
