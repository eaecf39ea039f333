//! C interface to the mashup engine.
//!
//! Objects cross the boundary as opaque handles created by `*_load`/`*_new`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`MashupStatus`]; on failure [`mashup_last_error`] describes the
//! error for the calling thread. Strings returned through out-parameters are
//! owned by the caller and released with [`mashup_string_free`]; strings
//! returned directly borrow from their handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use mashup_core::feature_store::{load_archive, FootageLibrary};
use mashup_core::music::{load_profile, MusicProfile};
use mashup_core::pipeline::{compose, emit_render_commands, report_edl, EditDecisionList, EngineConfig, MediaMap, Overrides};
use mashup_core::planner::agent::RuleBased;
use mashup_core::planner::StructuralPlan;
use mashup_core::Error;

/// Result of a call. Codes 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MashupStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Inputs failed validation.
    Invalid = 2,
    /// Search could not produce a sequence.
    Infeasible = 3,
    Io = 4,
    /// A string argument was not valid UTF-8.
    Utf8 = 5,
    /// The engine panicked; the handle arguments should be freed.
    Panic = 6,
}

pub struct MashupLibrary {
    inner: FootageLibrary,
}

pub struct MashupProfile {
    inner: MusicProfile,
}

pub struct MashupConfig {
    inner: EngineConfig,
}

/// Output of one pipeline run, held as serialized text.
pub struct MashupRun {
    edl: CString,
    report: CString,
    log: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MashupStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            3 => MashupStatus::Infeasible,
            4 => MashupStatus::Io,
            _ => MashupStatus::Invalid,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(MashupStatus::NullArgument, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MashupStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MashupStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
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
            MashupStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MashupStatus::Utf8, format!("{name} is not valid UTF-8")))
}

unsafe fn path(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    text(p, name).map(PathBuf::from)
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn owned(s: String) -> CString {
    CString::new(s).expect("serialized text has no nul bytes")
}

fn parse<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| Failure(MashupStatus::Invalid, format!("{what}: {e}")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mashup_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mashup_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned through an out-parameter of this
/// library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mashup_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a feature archive directory.
///
/// # Safety
/// `dir` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mashup_library_load(dir: *const c_char, out: *mut *mut MashupLibrary) -> MashupStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_archive(path(dir, "dir")?)?;
        put(out, MashupLibrary { inner });
        Ok(())
    })
}

/// # Safety
/// `lib` must be null or a live handle from [`mashup_library_load`].
#[no_mangle]
pub unsafe extern "C" fn mashup_library_free(lib: *mut MashupLibrary) {
    if !lib.is_null() {
        drop(Box::from_raw(lib));
    }
}

/// Number of shots, 0 for a null handle.
///
/// # Safety
/// `lib` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mashup_library_shot_count(lib: *const MashupLibrary) -> usize {
    lib.as_ref().map_or(0, |l| l.inner.shots().len())
}

/// Loads and validates a music profile file.
///
/// # Safety
/// `file` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mashup_profile_load(file: *const c_char, out: *mut *mut MashupProfile) -> MashupStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_profile(path(file, "file")?)?;
        put(out, MashupProfile { inner });
        Ok(())
    })
}

/// # Safety
/// `profile` must be null or a live handle from [`mashup_profile_load`].
#[no_mangle]
pub unsafe extern "C" fn mashup_profile_free(profile: *mut MashupProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Number of beats, 0 for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mashup_profile_beat_count(profile: *const MashupProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.beats.len())
}

/// Engine configuration from JSON text; null `json` gives the defaults.
///
/// # Safety
/// `json` must be null or a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mashup_config_new(json: *const c_char, out: *mut *mut MashupConfig) -> MashupStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner: EngineConfig = if json.is_null() { EngineConfig::default() } else { parse(text(json, "json")?, "config")? };
        inner.validate()?;
        put(out, MashupConfig { inner });
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle from [`mashup_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mashup_config_free(config: *mut MashupConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the whole pipeline with the built-in planner. `plan_json` optionally
/// replaces the structural plan.
///
/// # Safety
/// Handles must be live; `plan_json` null or nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mashup_run(
    lib: *const MashupLibrary,
    profile: *const MashupProfile,
    config: *const MashupConfig,
    plan_json: *const c_char,
    out: *mut *mut MashupRun,
) -> MashupStatus {
    guard(|| {
        let lib = handle(lib, "lib")?;
        let profile = handle(profile, "profile")?;
        let config = handle(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan: Option<StructuralPlan> =
            if plan_json.is_null() { None } else { Some(parse(text(plan_json, "plan_json")?, "plan")?) };
        let overrides = Overrides { plan, ..Default::default() };
        let r = compose(&lib.inner, &profile.inner, &config.inner, overrides, &mut RuleBased)?;
        let report = serde_json::to_string_pretty(&r.report).expect("report serializes") + "\n";
        put(out, MashupRun { edl: owned(r.edl.to_json()), report: owned(report), log: owned(r.log.to_ndjson()) });
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live handle from [`mashup_run`].
#[no_mangle]
pub unsafe extern "C" fn mashup_run_free(run: *mut MashupRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// EDL as JSON, borrowed from `run`; null for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mashup_run_edl(run: *const MashupRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.edl.as_ptr())
}

/// Metric report as JSON, borrowed from `run`.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mashup_run_report(run: *const MashupRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.report.as_ptr())
}

/// Run log, one JSON object per line, borrowed from `run`.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mashup_run_log(run: *const MashupRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.log.as_ptr())
}

/// Recomputes the metric report of an EDL given as JSON text.
///
/// # Safety
/// Handles must be live; `edl_json` nul-terminated; `out` writable. The
/// string stored in `out` is freed with [`mashup_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mashup_report_edl(
    lib: *const MashupLibrary,
    profile: *const MashupProfile,
    config: *const MashupConfig,
    edl_json: *const c_char,
    out: *mut *mut c_char,
) -> MashupStatus {
    guard(|| {
        let lib = handle(lib, "lib")?;
        let profile = handle(profile, "profile")?;
        let config = handle(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let edl: EditDecisionList = parse(text(edl_json, "edl_json")?, "EDL")?;
        let c = &config.inner;
        let report = report_edl(&lib.inner, &profile.inner, &edl, &edl.queries(), &c.metrics, &c.report_weights)?;
        *out = owned(serde_json::to_string_pretty(&report).expect("report serializes") + "\n").into_raw();
        Ok(())
    })
}

/// Shell script that renders an EDL. `media_json` holds `music` and
/// `sources` (source id to video path).
///
/// # Safety
/// Strings must be nul-terminated; `out` writable. The string stored in
/// `out` is freed with [`mashup_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mashup_render_commands(
    edl_json: *const c_char,
    media_json: *const c_char,
    output: *const c_char,
    out: *mut *mut c_char,
) -> MashupStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let edl: EditDecisionList = parse(text(edl_json, "edl_json")?, "EDL")?;
        let media: MediaMap = parse(text(media_json, "media_json")?, "media map")?;
        let script = emit_render_commands(&edl, &media, Path::new(text(output, "output")?))?;
        *out = owned(script).into_raw();
        Ok(())
    })
}
