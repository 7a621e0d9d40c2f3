//! C ABI over the core library.
//!
//! Sets are opaque `MvSet` handles. Every call returns an `MvStatus`; results
//! go through out-pointers. Strings handed out are NUL-terminated JSON and must
//! be released with `mv_string_free`. The message of the last failure on the
//! calling thread is available from `mv_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde_json::{json, Value};

use motivic_vitushkin::dsl::{cellset_from_text, CellSet};
use motivic_vitushkin::k::Field;
use motivic_vitushkin::measure::measure;
use motivic_vitushkin::mot_ring::parse_mot;
use motivic_vitushkin::riso;
use motivic_vitushkin::specialize::count_measure;
use motivic_vitushkin::vitushkin::check_crofton;
use motivic_vitushkin::MvError;

/// Status codes. Zero is success; the rest mirror the library error kinds.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Usage = 3,
    Syntax = 4,
    DomainError = 5,
    BaseFieldMismatch = 6,
    Unsupported = 7,
    DepthExceeded = 8,
    Uncertified = 9,
    PrecisionLoss = 10,
    Inconclusive = 11,
    HypothesisFailed = 12,
    Other = 13,
    Panic = 14,
}

/// Opaque definable set.
pub struct MvSet {
    inner: CellSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &MvError) -> MvStatus {
    match e {
        MvError::Usage(_) => MvStatus::Usage,
        MvError::Syntax { .. } => MvStatus::Syntax,
        MvError::DomainError(_) | MvError::NotAffine(_) | MvError::DepthTooSmall { .. } => MvStatus::DomainError,
        MvError::BaseFieldMismatch(_) => MvStatus::BaseFieldMismatch,
        MvError::Unsupported(_) | MvError::UnsupportedRamification(_) => MvStatus::Unsupported,
        MvError::DepthExceeded(_) => MvStatus::DepthExceeded,
        MvError::Uncertified => MvStatus::Uncertified,
        MvError::PrecisionLoss => MvStatus::PrecisionLoss,
        MvError::Inconclusive(_) => MvStatus::Inconclusive,
        MvError::HypothesisFailed(_) => MvStatus::HypothesisFailed,
        _ => MvStatus::Other,
    }
}

enum Fail {
    Status(MvStatus, String),
    Lib(MvError),
}

impl From<MvError> for Fail {
    fn from(e: MvError) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MvStatus::Ok,
        Ok(Err(Fail::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            MvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Status(MvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Status(MvStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn set_arg<'a>(p: *const MvSet) -> Result<&'a CellSet, Fail> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| Fail::Status(MvStatus::NullPointer, "set is null".into()))
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Status(MvStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(v);
    Ok(())
}

unsafe fn write_json(out: *mut *mut c_char, v: Value) -> Result<(), Fail> {
    let s = CString::new(v.to_string()).expect("json has no NUL");
    if out.is_null() {
        return Err(Fail::Status(MvStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(s.into_raw());
    Ok(())
}

/// Parse a set description. `field` may be null when the text carries a
/// `field` header. On success `*out` owns a new handle.
///
/// # Safety
/// `text` and `field` must be null or valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_set_parse(text: *const c_char, field: *const c_char, out: *mut *mut MvSet) -> MvStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let k = if field.is_null() { None } else { Some(Field::parse(str_arg(field, "field")?)?) };
        let c = cellset_from_text(text, k)?;
        write(out, Box::into_raw(Box::new(MvSet { inner: c })))
    })
}

/// # Safety
/// `set` must be null or a handle from `mv_set_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mv_set_free(set: *mut MvSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Ambient dimension n and set dimension d.
///
/// # Safety
/// `set` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_set_dims(set: *const MvSet, ambient: *mut usize, dim: *mut usize) -> MvStatus {
    guard(|| {
        let c = set_arg(set)?;
        write(ambient, c.n)?;
        write(dim, c.dim())
    })
}

/// mu_d of the set as JSON; `dim < 0` means the set's own dimension.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_measure_json(set: *const MvSet, dim: i32, out: *mut *mut c_char) -> MvStatus {
    guard(|| {
        let c = set_arg(set)?;
        let d = (dim >= 0).then_some(dim as usize);
        let v = measure(c, d)?;
        write_json(out, json!({ "display": v.to_string(), "terms": v.to_json() }))
    })
}

/// Minimal non-riso-trivial balls and singletons with V_0, as JSON.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_riso_json(set: *const MvSet, out: *mut *mut c_char) -> MvStatus {
    guard(|| {
        let c = set_arg(set)?;
        let rep = riso::min_nonrisotrivial(c)?;
        write_json(out, json!({ "items": rep.to_json()["items"], "v0": rep.s0_class.to_string() }))
    })
}

/// V_0 evaluated at q = |k| as numerator/denominator strings in JSON.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_v0_at_q_json(set: *const MvSet, out: *mut *mut c_char) -> MvStatus {
    guard(|| {
        let c = set_arg(set)?;
        let v = riso::v0(c)?;
        let r = motivic_vitushkin::vitushkin::cval_at(&v, c.field)?;
        write_json(out, json!({ "num": r.numer().to_string(), "den": r.denom().to_string() }))
    })
}

/// Exact point-count measure at truncation depth `depth`, as JSON.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_count_measure_json(set: *const MvSet, depth: u32, out: *mut *mut c_char) -> MvStatus {
    guard(|| {
        let c = set_arg(set)?;
        let r = count_measure(c, depth)?;
        write_json(out, json!({ "num": r.numer().to_string(), "den": r.denom().to_string() }))
    })
}

/// Sampled Cauchy-Crofton check. `*verdict` is set even when `report` is null.
///
/// # Safety
/// `set` must be a live handle; `verdict` must be writable; `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn mv_crofton_check(
    set: *const MvSet,
    depth: u32,
    samples: u64,
    seed: u64,
    tol: f64,
    verdict: *mut bool,
    report: *mut *mut c_char,
) -> MvStatus {
    guard(|| {
        let c = set_arg(set)?;
        let r = check_crofton(c, depth, samples, seed, tol)?;
        write(verdict, r.verdict)?;
        if !report.is_null() {
            write_json(report, r.to_json())?;
        }
        Ok(())
    })
}

/// Decide nonnegativity of an element of A given as an expression in L.
///
/// # Safety
/// `expr` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mv_is_nonneg(expr: *const c_char, out: *mut bool) -> MvStatus {
    guard(|| {
        let m = parse_mot(str_arg(expr, "expr")?)?;
        write(out, m.is_nonneg())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn mv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn mv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
