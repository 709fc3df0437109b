//! C ABI over the radiomap library. Objects are opaque handles owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns an `RmStatus`; the message of the last failure on the calling
//! thread is available from `rm_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use radiomap::estimator::{Dataset, Measurement};
use radiomap::io;
use radiomap::pipeline::{build_radio_map, MapConfig};
use radiomap::propagation::{full_gain, RadioMap};
use radiomap::{Error, Link};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Precondition = 3,
    Io = 4,
    Parse = 5,
    NoMeasurementMass = 6,
    Panic = 7,
}

/// Measurement records.
pub struct RmDataset(Dataset);

/// A fitted radio map.
pub struct RmRadioMap(RadioMap);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> RmStatus {
    match e {
        Error::DegenerateLink | Error::InvalidGrid(_) | Error::InvalidInput(_) | Error::Sampling(_) => {
            RmStatus::InvalidInput
        }
        Error::Precondition(_) => RmStatus::Precondition,
        Error::NoMeasurementMass => RmStatus::NoMeasurementMass,
        Error::Io { .. } => RmStatus::Io,
        Error::Csv { .. } | Error::Json { .. } => RmStatus::Parse,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (RmStatus, String)>) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RmStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RmStatus, String) {
    (RmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, (RmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (RmStatus::InvalidInput, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn link_at(coords: *const f64, i: usize) -> Link {
    // SAFETY: caller guarantees 6 readable doubles per link.
    let c = unsafe { std::slice::from_raw_parts(coords.add(6 * i), 6) };
    Link::from_coords([c[0], c[1], c[2], c[3], c[4], c[5]])
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from `n` links (`coords`: n x 6 doubles, user xyz then
/// aerial xyz) and their RSS values in dB.
///
/// # Safety
/// `coords` must hold `6 n` doubles, `rss_db` `n` doubles, `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_new(
    coords: *const f64,
    rss_db: *const f64,
    n: usize,
    out: *mut *mut RmDataset,
) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n > 0 && (coords.is_null() || rss_db.is_null()) {
            return Err(null("coords or rss_db"));
        }
        let records = (0..n)
            .map(|i| Measurement {
                // SAFETY: bounds per the function contract.
                link: unsafe { link_at(coords, i) },
                rss_db: unsafe { *rss_db.add(i) },
            })
            .collect();
        let data = Dataset::new(records).map_err(lib_err)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(RmDataset(data))) };
        Ok(())
    })
}

/// Loads measurements from a CSV with header `xu,yu,zu,xd,yd,zd,rss_db`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_load_csv(path: *const c_char, out: *mut *mut RmDataset) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(path, "path") }?;
        let data = io::read_measurements(path).map_err(lib_err)?;
        unsafe { *out = Box::into_raw(Box::new(RmDataset(data))) };
        Ok(())
    })
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_len(data: *const RmDataset) -> usize {
    // SAFETY: per the function contract.
    unsafe { data.as_ref() }.map_or(0, |d| d.0.len())
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_free(data: *mut RmDataset) {
    if !data.is_null() {
        // SAFETY: handle came from Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(data) });
    }
}

/// Fits a radio map. `config_json` holds a map configuration (grid, filter,
/// fit and kriging settings).
///
/// # Safety
/// `data` must be a live handle, `config_json` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_map_fit(
    data: *const RmDataset,
    config_json: *const c_char,
    out: *mut *mut RmRadioMap,
) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        let text = unsafe { CStr::from_ptr(config_json) }.to_bytes();
        let cfg: MapConfig =
            serde_json::from_slice(text).map_err(|e| (RmStatus::Parse, format!("config: {e}")))?;
        let (map, _) = build_radio_map(&data.0, &cfg).map_err(lib_err)?;
        unsafe { *out = Box::into_raw(Box::new(RmRadioMap(map))) };
        Ok(())
    })
}

/// Loads a map saved by `rm_map_save` or the command-line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_map_load(path: *const c_char, out: *mut *mut RmRadioMap) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(path, "path") }?;
        let map = io::load_radio_map(path).map_err(lib_err)?;
        unsafe { *out = Box::into_raw(Box::new(RmRadioMap(map))) };
        Ok(())
    })
}

/// Writes the map JSON plus its `.heights.csv` / `.residuals.csv` sidecars.
///
/// # Safety
/// `map` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rm_map_save(map: *const RmRadioMap, path: *const c_char) -> RmStatus {
    guard(|| {
        let map = unsafe { map.as_ref() }.ok_or_else(|| null("map"))?;
        let path = unsafe { path_arg(path, "path") }?;
        io::save_radio_map(path, &map.0).map_err(lib_err)
    })
}

/// Gains in dB (deterministic part plus kriged residual) for `n` links.
///
/// # Safety
/// `map` must be a live handle, `coords` hold `6 n` doubles and `out` have
/// room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rm_map_gain(
    map: *const RmRadioMap,
    coords: *const f64,
    n: usize,
    out: *mut f64,
) -> RmStatus {
    guard(|| {
        let map = unsafe { map.as_ref() }.ok_or_else(|| null("map"))?;
        if n > 0 && (coords.is_null() || out.is_null()) {
            return Err(null("coords or out"));
        }
        for i in 0..n {
            let link = unsafe { link_at(coords, i) };
            let g = full_gain(&link, &map.0).map_err(lib_err)?;
            unsafe { *out.add(i) = g };
        }
        Ok(())
    })
}

/// Number of obstruction classes K, or 0 for NULL.
///
/// # Safety
/// `map` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_map_classes(map: *const RmRadioMap) -> usize {
    unsafe { map.as_ref() }.map_or(0, |m| m.0.theta.classes())
}

/// Copies up to `len` path-loss parameters `[alpha_0, beta_0, ...]` into
/// `out` and returns how many there are in total.
///
/// # Safety
/// `map` must be NULL or a live handle; `out` must have room for `len`
/// doubles when non-NULL.
#[no_mangle]
pub unsafe extern "C" fn rm_map_theta(map: *const RmRadioMap, out: *mut f64, len: usize) -> usize {
    let Some(map) = (unsafe { map.as_ref() }) else {
        return 0;
    };
    let theta = map.0.theta.as_slice();
    if !out.is_null() {
        for (i, v) in theta.iter().take(len).enumerate() {
            unsafe { *out.add(i) = *v };
        }
    }
    theta.len()
}

/// # Safety
/// `map` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_map_free(map: *mut RmRadioMap) {
    if !map.is_null() {
        drop(unsafe { Box::from_raw(map) });
    }
}
