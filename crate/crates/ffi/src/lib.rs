//! C ABI over the embgeo library.
//!
//! Every fallible function returns an [`EmbgeoStatus`]; on failure the
//! thread-local message is available from [`embgeo_last_error_message`].
//! Matrices and checkpoints are opaque handles owned by the caller and
//! released with their `_free` function. Strings returned through out
//! parameters are released with [`embgeo_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use embgeo::diagnostics::geometry_report;
use embgeo::model::Checkpoint;
use embgeo::numerics::DenseMatrix;
use embgeo::regularizer::cosreg_fast;
use embgeo::theory::negdir::find_negative_direction;
use embgeo::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbgeoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    ZeroRow = 4,
    Indeterminate = 5,
    Training = 6,
    Io = 7,
    Parse = 8,
    Internal = 9,
    Panic = 10,
}

/// Row-major dense matrix.
pub struct EmbgeoMatrix {
    inner: DenseMatrix,
}

/// A trained model checkpoint.
pub struct EmbgeoCheckpoint {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> EmbgeoStatus {
    match err {
        Error::Domain(_) => EmbgeoStatus::Domain,
        Error::ZeroRow { .. } => EmbgeoStatus::ZeroRow,
        Error::Training { .. } => EmbgeoStatus::Training,
        Error::Indeterminate { .. } => EmbgeoStatus::Indeterminate,
        Error::Internal(_) => EmbgeoStatus::Internal,
        Error::Io(_) => EmbgeoStatus::Io,
        Error::Json(_) => EmbgeoStatus::Parse,
    }
}

/// Runs `f`, records any error or panic and converts it to a status.
fn guard<F>(f: F) -> EmbgeoStatus
where
    F: FnOnce() -> Result<(), (EmbgeoStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmbgeoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside embgeo");
            EmbgeoStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (EmbgeoStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (EmbgeoStatus, String) {
    (EmbgeoStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (EmbgeoStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next embgeo call on the same thread.
#[no_mangle]
pub extern "C" fn embgeo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn embgeo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles and `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn embgeo_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut EmbgeoMatrix,
) -> EmbgeoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = rows
            .checked_mul(cols)
            .ok_or((EmbgeoStatus::InvalidArgument, "rows * cols overflows".to_string()))?;
        let values = if len == 0 {
            Vec::new()
        } else {
            if data.is_null() {
                return Err(null("data"));
            }
            std::slice::from_raw_parts(data, len).to_vec()
        };
        let inner = DenseMatrix::new(rows, cols, values).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EmbgeoMatrix { inner }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn embgeo_matrix_free(m: *mut EmbgeoMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn embgeo_matrix_rows(m: *const EmbgeoMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.rows())
}

/// # Safety
/// `m` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn embgeo_matrix_cols(m: *const EmbgeoMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.cols())
}

/// Copies the row-major contents into `buf`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a valid handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn embgeo_matrix_copy_data(m: *const EmbgeoMatrix, buf: *mut f64, len: usize) -> EmbgeoStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let src = m.inner.as_slice();
        if len < src.len() {
            return Err((
                EmbgeoStatus::InvalidArgument,
                format!("buffer holds {len} values, matrix has {}", src.len()),
            ));
        }
        if !src.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, src.len()).copy_from_slice(src);
        }
        Ok(())
    })
}

/// Sum of pairwise cosines over ordered pairs of distinct rows, and the same
/// value divided by N².
///
/// # Safety
/// `m` must be a valid handle; the out pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn embgeo_cosreg(m: *const EmbgeoMatrix, r_sum: *mut f64, r_scaled: *mut f64) -> EmbgeoStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let v = cosreg_fast(&m.inner).map_err(lib_err)?;
        if let Some(p) = r_sum.as_mut() {
            *p = v.r_sum;
        }
        if let Some(p) = r_scaled.as_mut() {
            *p = v.r_scaled;
        }
        Ok(())
    })
}

/// Geometry report of the matrix as a JSON string; release it with
/// [`embgeo_string_free`].
///
/// # Safety
/// `m` must be a valid handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn embgeo_geometry_report_json(
    m: *const EmbgeoMatrix,
    pair_cap: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> EmbgeoStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let m = deref(m, "matrix")?;
        let report = geometry_report(&m.inner, pair_cap, seed).map_err(lib_err)?;
        let text = serde_json::to_string(&report).map_err(|e| (EmbgeoStatus::Internal, e.to_string()))?;
        let c = CString::new(text).map_err(|e| (EmbgeoStatus::Internal, e.to_string()))?;
        *out_json = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn embgeo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Searches for a unit vector with negative inner product against every row.
/// On success `feasible` is 1 and `direction` (of length `cols`) and `margin`
/// are filled, or `feasible` is 0 when the rows' hull contains the origin.
/// An exhausted iteration budget returns `Indeterminate`.
///
/// # Safety
/// `m` must be a valid handle, `feasible` a valid pointer, `direction` null
/// or `direction_len` writable doubles, and `margin` null or valid.
#[no_mangle]
pub unsafe extern "C" fn embgeo_negative_direction(
    m: *const EmbgeoMatrix,
    tolerance: f64,
    max_iters: usize,
    feasible: *mut i32,
    direction: *mut f64,
    direction_len: usize,
    margin: *mut f64,
) -> EmbgeoStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        if feasible.is_null() {
            return Err(null("feasible"));
        }
        if !direction.is_null() && direction_len < m.inner.cols() {
            return Err((
                EmbgeoStatus::InvalidArgument,
                format!("direction buffer holds {direction_len} values, need {}", m.inner.cols()),
            ));
        }
        let cert = find_negative_direction(&m.inner, tolerance, max_iters).map_err(lib_err)?;
        *feasible = i32::from(cert.feasible);
        if let (Some(v), false) = (cert.direction.as_ref(), direction.is_null()) {
            std::slice::from_raw_parts_mut(direction, v.len()).copy_from_slice(v);
        }
        if let (Some(mg), Some(out)) = (cert.margin, margin.as_mut()) {
            *out = mg;
        }
        Ok(())
    })
}

/// Loads and validates a checkpoint JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn embgeo_checkpoint_load(path: *const c_char, out: *mut *mut EmbgeoCheckpoint) -> EmbgeoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| (EmbgeoStatus::InvalidArgument, format!("path is not UTF-8: {e}")))?;
        let inner = Checkpoint::load(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EmbgeoCheckpoint { inner }));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn embgeo_checkpoint_free(c: *mut EmbgeoCheckpoint) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn embgeo_checkpoint_vocab_size(c: *const EmbgeoCheckpoint) -> usize {
    c.as_ref().map_or(0, |c| c.inner.params.vocab_size())
}

/// Regularization weight the checkpoint was trained with.
///
/// # Safety
/// `c` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn embgeo_checkpoint_gamma(c: *const EmbgeoCheckpoint) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.inner.config.gamma)
}

/// Copy of the tied embedding matrix as a new matrix handle.
///
/// # Safety
/// `c` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn embgeo_checkpoint_embedding(
    c: *const EmbgeoCheckpoint,
    out: *mut *mut EmbgeoMatrix,
) -> EmbgeoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let c = deref(c, "checkpoint")?;
        let inner = c.inner.params.embedding.clone();
        *out = Box::into_raw(Box::new(EmbgeoMatrix { inner }));
        Ok(())
    })
}
