//! C ABI over the simulated store. A `PradaCluster` handle owns one
//! simulated cluster; statements execute synchronously in simulated time.
//!
//! Fallible functions return a [`PradaStatus`]. Strings handed out by the
//! library must be released with [`prada_string_free`]. The message of
//! the last failure on a handle is available from [`prada_last_error`].

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use prada::config::ConfigFile;
use prada::node::Reply;
use prada::sim::Cluster;
use prada::{parse, ClientId, DhrRegistry, NodeId, SimTime};
use serde_json::json;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PradaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    ParseError = 4,
    NotFound = 5,
    OperationFailed = 6,
    NotSettled = 7,
    InvalidNode = 8,
    Panic = 9,
}

/// Opaque handle to a simulated cluster.
pub struct PradaCluster {
    cluster: Cluster,
    registry: DhrRegistry,
    last_error: CString,
}

impl PradaCluster {
    fn fail(&mut self, status: PradaStatus, msg: impl Into<String>) -> PradaStatus {
        self.last_error = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
        status
    }
}

fn guard(f: impl FnOnce() -> PradaStatus) -> PradaStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(PradaStatus::Panic)
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, PradaStatus> {
    if s.is_null() {
        return Err(PradaStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| PradaStatus::InvalidUtf8)
}

fn into_raw(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Builds a cluster from a JSON configuration document and lets it settle.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer. On success `*out` receives a handle to free with
/// [`prada_cluster_free`].
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_new(config_json: *const c_char, seed: u64, out: *mut *mut PradaCluster) -> PradaStatus {
    guard(|| {
        if out.is_null() {
            return PradaStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let doc = match read_str(config_json) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let built = ConfigFile::from_json(doc).and_then(|f| Ok((f.registry()?, f.cluster_config()?)));
        let Ok((registry, cfg)) = built else { return PradaStatus::InvalidConfig };
        let Ok(mut cluster) = Cluster::new(cfg, seed) else { return PradaStatus::InvalidConfig };
        cluster.run_until_quiescent(SimTime::from_secs_f64(60.0));
        *out = Box::into_raw(Box::new(PradaCluster { cluster, registry, last_error: CString::default() }));
        PradaStatus::Ok
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `cluster` must be null or a handle from [`prada_cluster_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_free(cluster: *mut PradaCluster) {
    if !cluster.is_null() {
        drop(Box::from_raw(cluster));
    }
}

/// Executes one statement and runs the cluster until it settles. On `Ok`
/// for a SELECT, `*out_json` receives the row as JSON; otherwise it is set
/// to null. `coordinator` picks the contact node; a negative value lets
/// the client choose.
///
/// # Safety
/// `cluster` must be a live handle, `statement` a valid NUL-terminated
/// string and `out_json` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_execute(
    cluster: *mut PradaCluster,
    statement: *const c_char,
    coordinator: i64,
    out_json: *mut *mut c_char,
) -> PradaStatus {
    guard(|| {
        let Some(h) = cluster.as_mut() else { return PradaStatus::NullPointer };
        if !out_json.is_null() {
            *out_json = ptr::null_mut();
        }
        let text = match read_str(statement) {
            Ok(t) => t,
            Err(s) => return h.fail(s, "statement is null or not UTF-8"),
        };
        let stmt = match parse(text, &h.registry) {
            Ok(s) => s,
            Err(e) => return h.fail(PradaStatus::ParseError, e.to_string()),
        };
        let coordinator = match coordinator {
            c if c < 0 => None,
            c if c < h.cluster.node_count() as i64 => Some(NodeId(c as u32)),
            c => return h.fail(PradaStatus::InvalidNode, format!("no node {c}")),
        };
        let at = h.cluster.now();
        let before = h.cluster.records().len();
        h.cluster.submit(at, ClientId(0), stmt, coordinator);
        if !h.cluster.run_until_quiescent(at + Duration::from_secs(3600)) {
            return h.fail(PradaStatus::NotSettled, "cluster did not settle");
        }
        let records = h.cluster.records();
        let Some(rec) = records.get(before) else { return h.fail(PradaStatus::NotSettled, "no reply recorded") };
        match &rec.reply {
            Reply::Ok { item, degraded } => {
                if let (Some(item), false) = (item, out_json.is_null()) {
                    let columns: serde_json::Map<String, serde_json::Value> = item
                        .columns
                        .iter()
                        .map(|(k, v)| (k.clone(), String::from_utf8_lossy(v).into_owned().into()))
                        .collect();
                    let doc = json!({
                        "key": String::from_utf8_lossy(&item.key),
                        "columns": columns,
                        "dhr": item.dhr.to_string(),
                        "degraded": degraded,
                    });
                    *out_json = into_raw(doc.to_string());
                }
                PradaStatus::Ok
            }
            Reply::NotFound => h.fail(PradaStatus::NotFound, "key not found"),
            Reply::Error(e) => h.fail(PradaStatus::OperationFailed, e.as_str()),
        }
    })
}

/// Crashes a node (fail-stop).
///
/// # Safety
/// `cluster` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_crash(cluster: *mut PradaCluster, node: u32) -> PradaStatus {
    guard(|| {
        let Some(h) = cluster.as_mut() else { return PradaStatus::NullPointer };
        if node >= h.cluster.node_count() {
            return h.fail(PradaStatus::InvalidNode, format!("no node {node}"));
        }
        h.cluster.crash(NodeId(node));
        PradaStatus::Ok
    })
}

/// Counts consistency violations over the live nodes.
///
/// # Safety
/// `cluster` must be a live handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_scan(cluster: *const PradaCluster, out_count: *mut usize) -> PradaStatus {
    guard(|| {
        let (Some(h), false) = (cluster.as_ref(), out_count.is_null()) else { return PradaStatus::NullPointer };
        *out_count = h.cluster.scan().len();
        PradaStatus::Ok
    })
}

/// Writes the cluster snapshot as JSON, in the format read by `prada check`.
///
/// # Safety
/// `cluster` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_snapshot(cluster: *const PradaCluster, out_json: *mut *mut c_char) -> PradaStatus {
    guard(|| {
        let (Some(h), false) = (cluster.as_ref(), out_json.is_null()) else { return PradaStatus::NullPointer };
        match serde_json::to_string(&h.cluster.snapshot()) {
            Ok(s) => {
                *out_json = into_raw(s);
                PradaStatus::Ok
            }
            Err(_) => PradaStatus::Panic,
        }
    })
}

/// Simulated time in nanoseconds, or 0 for a null handle.
///
/// # Safety
/// `cluster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prada_cluster_now_ns(cluster: *const PradaCluster) -> u64 {
    cluster.as_ref().map_or(0, |h| h.cluster.now().as_nanos())
}

/// Message of the last failure on `cluster`, owned by the handle and valid
/// until the next call on it. Empty when nothing failed yet.
///
/// # Safety
/// `cluster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prada_last_error(cluster: *const PradaCluster) -> *const c_char {
    cluster.as_ref().map_or(c"null handle".as_ptr(), |h| h.last_error.as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn prada_status_name(status: PradaStatus) -> *const c_char {
    let s = match status {
        PradaStatus::Ok => c"ok",
        PradaStatus::NullPointer => c"null pointer",
        PradaStatus::InvalidUtf8 => c"invalid utf-8",
        PradaStatus::InvalidConfig => c"invalid configuration",
        PradaStatus::ParseError => c"parse error",
        PradaStatus::NotFound => c"not found",
        PradaStatus::OperationFailed => c"operation failed",
        PradaStatus::NotSettled => c"not settled",
        PradaStatus::InvalidNode => c"invalid node",
        PradaStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prada_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
