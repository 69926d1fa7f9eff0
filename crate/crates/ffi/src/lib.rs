//! Flat C ABI over the handle-based engine API.
//!
//! Every function returns an [`AdapticsStatus`]; zero is success. The code
//! and message of the most recent failure on the calling thread are kept
//! until the next failing call. Handles are plain integers and zero is never
//! a valid handle. Calls are meant for one foreign control thread per handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use adaptics_core::api::{self, ApiError, EngineHandle};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapticsStatus {
    Ok = 0,
    InvalidRate = 1,
    InvalidBatch = 2,
    DeviceUnavailable = 3,
    Io = 4,
    InvalidTacton = 5,
    BadMatrix = 6,
    NonFinite = 7,
    QueueFull = 8,
    InvalidHandle = 9,
    InvalidArgument = 10,
    Internal = 11,
}

impl AdapticsStatus {
    fn from_code(code: &str) -> Self {
        match code {
            "invalid-rate" => AdapticsStatus::InvalidRate,
            "invalid-batch" => AdapticsStatus::InvalidBatch,
            "device-unavailable" => AdapticsStatus::DeviceUnavailable,
            "io" => AdapticsStatus::Io,
            "invalid-tacton" => AdapticsStatus::InvalidTacton,
            "bad-matrix" => AdapticsStatus::BadMatrix,
            "non-finite" => AdapticsStatus::NonFinite,
            "queue-full" => AdapticsStatus::QueueFull,
            "invalid-handle" => AdapticsStatus::InvalidHandle,
            "invalid-argument" => AdapticsStatus::InvalidArgument,
            _ => AdapticsStatus::Internal,
        }
    }
}

/// Mirror of the engine status, filled by [`adaptics_engine_status`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdapticsEngineStatus {
    pub loaded: bool,
    pub playing: bool,
    pub finished: bool,
    pub warnings: u64,
    pub pattern_time: f64,
    pub device_time: f64,
    pub batches: u64,
}

struct LastError {
    code: &'static CStr,
    message: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

fn code_cstr(code: &str) -> &'static CStr {
    match code {
        "invalid-rate" => c"invalid-rate",
        "invalid-batch" => c"invalid-batch",
        "device-unavailable" => c"device-unavailable",
        "io" => c"io",
        "invalid-tacton" => c"invalid-tacton",
        "bad-matrix" => c"bad-matrix",
        "non-finite" => c"non-finite",
        "queue-full" => c"queue-full",
        "invalid-handle" => c"invalid-handle",
        "invalid-argument" => c"invalid-argument",
        _ => c"internal",
    }
}

fn fail(code: &str, message: String) -> AdapticsStatus {
    // interior NULs cannot cross the boundary
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(LastError { code: code_cstr(code), message }));
    AdapticsStatus::from_code(code)
}

fn guard(f: impl FnOnce() -> Result<(), ApiError>) -> AdapticsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdapticsStatus::Ok,
        Ok(Err(e)) => fail(e.code(), e.to_string()),
        Err(_) => fail("internal", "engine panicked".into()),
    }
}

/// Borrow a NUL-terminated UTF-8 argument.
///
/// # Safety
/// `ptr` is null or points to a NUL-terminated string valid for the call.
unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, AdapticsStatus> {
    if ptr.is_null() {
        return Err(fail("invalid-argument", format!("{what} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| fail("invalid-argument", format!("{what} is not UTF-8")))
}

/// Start an engine. On success `*out_handle` receives a nonzero handle.
///
/// # Safety
/// `out_handle` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn init_adaptics_engine(
    use_mock: bool,
    rate: f64,
    batch: u32,
    out_handle: *mut u64,
) -> AdapticsStatus {
    if out_handle.is_null() {
        return fail("invalid-argument", "out_handle is null".into());
    }
    guard(|| {
        let handle = api::api_init(use_mock, rate, batch as usize)?;
        *out_handle = handle.raw();
        Ok(())
    })
}

/// Load a tacton file and play it from the start, replacing current playback.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn adaptics_engine_play_tacton_immediate(handle: u64, path: *const c_char) -> AdapticsStatus {
    let path = match text(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    guard(|| api::api_play_tacton_immediate(EngineHandle::from_raw(handle), path))
}

/// # Safety
/// `name` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn adaptics_engine_update_user_parameter(
    handle: u64,
    name: *const c_char,
    value: f64,
) -> AdapticsStatus {
    let name = match text(name, "name") {
        Ok(n) => n,
        Err(status) => return status,
    };
    guard(|| api::api_update_user_parameter(EngineHandle::from_raw(handle), name, value))
}

/// `matrix` holds 16 doubles, row-major; the bottom row must be 0 0 0 1.
///
/// # Safety
/// `matrix` must point to 16 readable doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptics_engine_update_transform(handle: u64, matrix: *const f64) -> AdapticsStatus {
    if matrix.is_null() {
        return fail("invalid-argument", "matrix is null".into());
    }
    let matrix = std::slice::from_raw_parts(matrix, 16);
    guard(|| api::api_update_transform(EngineHandle::from_raw(handle), matrix))
}

#[no_mangle]
pub extern "C" fn adaptics_engine_stop(handle: u64) -> AdapticsStatus {
    guard(|| api::api_stop(EngineHandle::from_raw(handle)))
}

/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn adaptics_engine_status(handle: u64, out: *mut AdapticsEngineStatus) -> AdapticsStatus {
    if out.is_null() {
        return fail("invalid-argument", "out is null".into());
    }
    guard(|| {
        let s = api::api_status(EngineHandle::from_raw(handle))?;
        *out = AdapticsEngineStatus {
            loaded: s.loaded,
            playing: s.playing,
            finished: s.finished,
            warnings: s.warnings,
            pattern_time: s.pattern_time,
            device_time: s.device_time,
            batches: s.batches,
        };
        Ok(())
    })
}

/// Stop the device and release the handle. Later calls with it fail with
/// `AdapticsStatus::InvalidHandle`.
#[no_mangle]
pub extern "C" fn deinit_adaptics_engine(handle: u64) -> AdapticsStatus {
    guard(|| api::api_deinit(EngineHandle::from_raw(handle)))
}

/// Code of the last failure on this thread, such as `"invalid-handle"`, or
/// null if nothing has failed. The string is static.
#[no_mangle]
pub extern "C" fn adaptics_last_error_code() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |e| e.code.as_ptr()))
}

/// Copy the last failure message into `buf`, truncated and always
/// NUL-terminated when `len > 0`. Returns the full message length in bytes
/// excluding the terminator, or 0 if nothing has failed.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn adaptics_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(e) = e.as_ref() else { return 0 };
        let bytes = e.message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}
