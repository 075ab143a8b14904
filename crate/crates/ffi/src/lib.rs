//! C ABI over the sync engine, the config carver and the HTTP stream parser.
//!
//! Every fallible call returns an [`SfStatus`]; on failure the message is
//! available from [`sf_last_error`] on the same thread. Structured results
//! are JSON strings owned by the caller and released with
//! [`sf_string_free`]. Handles are opaque and released with their `_free`.
//! Pointer arguments must be valid for the duration of the call.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use serde_json::json;
use syncforensics::cli::storage_settings;
use syncforensics::engine::{ConnectTarget, Engine, EngineError, UpOutcome};
use syncforensics::recovery::{carve_configs_parallel, extract_master_salt, parse_http_stream};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Authentication = 3,
    NotInitialized = 4,
    AlreadyInitialized = 5,
    Backend = 6,
    Corrupt = 7,
    Io = 8,
    Engine = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(SfStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::AuthenticationFailure => SfStatus::Authentication,
            EngineError::NotInitialized(_) => SfStatus::NotInitialized,
            EngineError::AlreadyInitialized(_) | EngineError::RepoExists(_) => SfStatus::AlreadyInitialized,
            EngineError::BackendUnreachable(_) | EngineError::Backend(_) | EngineError::RepoNotFound(_) => SfStatus::Backend,
            EngineError::Corrupt { .. } | EngineError::MissingMultiChunk(_) => SfStatus::Corrupt,
            EngineError::Io { .. } => SfStatus::Io,
            _ => SfStatus::Engine,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfStatus::Panic
        }
    }
}

/// `p` is null or NUL-terminated.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// `p` is null or points to `len` readable bytes.
unsafe fn bytes<'a>(p: *const u8, len: usize) -> Result<&'a [u8], Failure> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(Failure(SfStatus::NullArgument, "buffer is null".into())),
        (false, _) => Ok(std::slice::from_raw_parts(p, len)),
    }
}

/// `out` is null or writable.
unsafe fn emit(out: *mut *mut c_char, value: serde_json::Value) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SfStatus::NullArgument, "output pointer is null".into()));
    }
    let s = CString::new(value.to_string()).map_err(|e| Failure(SfStatus::Engine, e.to_string()))?;
    *out = s.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned through an `out_json` pointer.
/// `s` is null or an unfreed string from this library.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

pub struct SfEngine {
    engine: Engine,
}

/// Creates an engine keeping per-user state in `user_dir`.
/// `kdf_iterations` of 0 keeps the default. Returns null on failure.
#[no_mangle]
pub unsafe extern "C" fn sf_engine_new(user_dir: *const c_char, kdf_iterations: u32) -> *mut SfEngine {
    let mut handle = ptr::null_mut();
    guard(|| {
        let dir = PathBuf::from(text(user_dir, "user_dir")?);
        let mut engine = Engine::new(dir);
        if kdf_iterations != 0 {
            engine = engine.with_kdf_iterations(kdf_iterations);
        }
        handle = Box::into_raw(Box::new(SfEngine { engine }));
        Ok(())
    });
    handle
}

/// `h` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_engine_free(h: *mut SfEngine) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

unsafe fn engine<'a>(h: *const SfEngine) -> Result<&'a Engine, Failure> {
    h.as_ref()
        .map(|e| &e.engine)
        .ok_or_else(|| Failure(SfStatus::NullArgument, "engine handle is null".into()))
}

/// Creates a repository at `storage` (directory or WebDAV URL) with `folder`
/// as its first client. Writes the init outcome, including both links.
#[no_mangle]
pub unsafe extern "C" fn sf_engine_init(
    h: *const SfEngine,
    folder: *const c_char,
    storage: *const c_char,
    password: *const c_char,
    out_json: *mut *mut c_char,
) -> SfStatus {
    guard(|| {
        let e = engine(h)?;
        let settings = storage_settings(text(storage, "storage")?, None, None);
        let out = e.init(text(folder, "folder")?.as_ref(), &settings, text(password, "password")?)?;
        emit(out_json, to_json(&out))
    })
}

/// Joins the repository named by a share link.
#[no_mangle]
pub unsafe extern "C" fn sf_engine_connect(
    h: *const SfEngine,
    folder: *const c_char,
    link: *const c_char,
    password: *const c_char,
    out_json: *mut *mut c_char,
) -> SfStatus {
    guard(|| {
        let e = engine(h)?;
        let target = ConnectTarget::Link(text(link, "link")?.to_string());
        let out = e.connect(text(folder, "folder")?.as_ref(), target, text(password, "password")?)?;
        emit(out_json, to_json(&out))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_engine_status(h: *const SfEngine, folder: *const c_char, out_json: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let cs = engine(h)?.status(text(folder, "folder")?.as_ref())?;
        emit(out_json, to_json(&cs))
    })
}

/// Uploads local changes. The JSON has `uploaded: false` when there was
/// nothing to do.
#[no_mangle]
pub unsafe extern "C" fn sf_engine_up(h: *const SfEngine, folder: *const c_char, out_json: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let value = match engine(h)?.up(text(folder, "folder")?.as_ref())? {
            UpOutcome::NoChanges => json!({ "uploaded": false }),
            UpOutcome::Uploaded { object, version, new_multichunks } => json!({
                "uploaded": true,
                "object": object,
                "changes": version.changes.len(),
                "new_multichunks": new_multichunks,
            }),
        };
        emit(out_json, value)
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_engine_down(h: *const SfEngine, folder: *const c_char, out_json: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let summary = engine(h)?.down(text(folder, "folder")?.as_ref())?;
        emit(out_json, to_json(&summary))
    })
}

pub struct SfCarver {
    threads: usize,
}

/// A config carver using up to `threads` workers (0 means one).
#[no_mangle]
pub extern "C" fn sf_carver_new(threads: u32) -> *mut SfCarver {
    Box::into_raw(Box::new(SfCarver { threads: threads.max(1) as usize }))
}

/// `h` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_carver_free(h: *mut SfCarver) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Carves config documents from `len` bytes at `data`. The JSON carries
/// `strong` and `weak` hit arrays.
#[no_mangle]
pub unsafe extern "C" fn sf_carver_scan(
    h: *const SfCarver,
    data: *const u8,
    len: usize,
    out_json: *mut *mut c_char,
) -> SfStatus {
    guard(|| {
        let carver = h
            .as_ref()
            .ok_or_else(|| Failure(SfStatus::NullArgument, "carver handle is null".into()))?;
        let result = carve_configs_parallel(bytes(data, len)?, carver.threads);
        emit(out_json, to_json(&result))
    })
}

/// Pairs HTTP messages from an interleaved stream and reports master salts.
#[no_mangle]
pub unsafe extern "C" fn sf_net_parse(data: *const u8, len: usize, out_json: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let extraction = parse_http_stream(bytes(data, len)?);
        let salts = extract_master_salt(&extraction.transactions);
        emit(out_json, json!({ "extraction": to_json(&extraction), "salts": to_json(&salts) }))
    })
}
