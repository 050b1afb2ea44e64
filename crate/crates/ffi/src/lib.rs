//! C interface to qshuttle.
//!
//! Every function returns a [`QsStatus`]; on failure the message is
//! available from [`qs_last_error_message`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`qs_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;
use std::time::Duration;

use qshuttle::geo::{haversine_distance, BoundingBox, GeoPoint};
use qshuttle::ids::{LineTag, TripId, VehicleId};
use qshuttle::qubo::{BinaryQuadraticModel, BqmWire};
use qshuttle::scenario::Scenario;
use qshuttle::service::{FleetService, LocationFix, ServiceConfig, ServiceError};
use qshuttle::solver::{SolveError, SolveRequest, Solver, SolverKind};

const REMOTE_TIMEOUT: Duration = Duration::from_secs(5);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Conflict = 5,
    SolverFailed = 6,
    BufferTooSmall = 7,
    Io = 8,
    Panic = 99,
}

/// A binary quadratic model.
pub struct QsBqm(BinaryQuadraticModel);

/// A QUBO solver.
pub struct QsSolver(Arc<dyn Solver>);

/// A fleet service loaded from a scenario.
pub struct QsService(FleetService);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(QsStatus, String);

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let status = match &e {
            UnknownVehicle(_) | UnknownLine(_) | UnknownTrip(_) | UnknownExclusion(_) => QsStatus::NotFound,
            VehicleBusy(_) | NoActiveTrip(_) | NoActiveTrips | OptimizationInFlight => QsStatus::Conflict,
            InvalidGeometry(_) | Unroutable { .. } => QsStatus::InvalidArgument,
            Persistence(_) => QsStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let status = match e {
            SolveError::InvalidRequest(_) | SolveError::Empty | SolveError::TooLarge { .. } => QsStatus::InvalidArgument,
            SolveError::Timeout(_) | SolveError::Remote(_) => QsStatus::SolverFailed,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure(QsStatus::InvalidArgument, msg.to_string())
}

fn set_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).expect("interior nul removed"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            QsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(Some(msg));
            QsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(QsStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(QsStatus::InvalidUtf8, e.to_string()))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(QsStatus::NullPointer, "null handle".into()))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(QsStatus::NullPointer, "null output pointer".into()))
}

fn json_string(v: &impl serde::Serialize) -> Result<*mut c_char, Failure> {
    let s = serde_json::to_string(v).map_err(|e| Failure(QsStatus::Panic, e.to_string()))?;
    Ok(CString::new(s).map_err(invalid)?.into_raw())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Great-circle distance in metres between two WGS84 points.
///
/// # Safety
/// `out_m` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qs_haversine_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out_m: *mut f64) -> QsStatus {
    guard(|| {
        let a = GeoPoint::new(lat1, lon1).map_err(invalid)?;
        let b = GeoPoint::new(lat2, lon2).map_err(invalid)?;
        *out(out_m)? = haversine_distance(&a, &b);
        Ok(())
    })
}

/// Parses a model in the JSON wire format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_bqm` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qs_bqm_from_json(json: *const c_char, out_bqm: *mut *mut QsBqm) -> QsStatus {
    guard(|| {
        let wire: BqmWire = serde_json::from_str(str_arg(json)?).map_err(invalid)?;
        let (bqm, _) = wire.decode().map_err(invalid)?;
        *out(out_bqm)? = Box::into_raw(Box::new(QsBqm(bqm)));
        Ok(())
    })
}

/// # Safety
/// `bqm` must come from [`qs_bqm_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qs_bqm_free(bqm: *mut QsBqm) {
    if !bqm.is_null() {
        drop(Box::from_raw(bqm));
    }
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `bqm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_bqm_num_variables(bqm: *const QsBqm) -> usize {
    bqm.as_ref().map_or(0, |b| b.0.num_variables())
}

/// Energy of a 0/1 sample of exactly `num_variables` bytes.
///
/// # Safety
/// `sample` must point to `len` readable bytes; `out_energy` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn qs_bqm_energy(bqm: *const QsBqm, sample: *const u8, len: usize, out_energy: *mut f64) -> QsStatus {
    guard(|| {
        let b = handle(bqm)?;
        if sample.is_null() {
            return Err(Failure(QsStatus::NullPointer, "null sample".into()));
        }
        let x = std::slice::from_raw_parts(sample, len);
        if len != b.0.num_variables() || x.iter().any(|&v| v > 1) {
            return Err(invalid("sample must hold one 0/1 byte per variable"));
        }
        *out(out_energy)? = b.0.energy(x);
        Ok(())
    })
}

/// Creates a solver by name: `brute`, `sa`, `tabu` or `remote` (the
/// in-process mock).
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out_solver` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn qs_solver_new(kind: *const c_char, out_solver: *mut *mut QsSolver) -> QsStatus {
    guard(|| {
        let kind: SolverKind = str_arg(kind)?.parse()?;
        *out(out_solver)? = Box::into_raw(Box::new(QsSolver(kind.build(REMOTE_TIMEOUT))));
        Ok(())
    })
}

/// # Safety
/// `solver` must come from [`qs_solver_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qs_solver_free(solver: *mut QsSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Minimises `bqm` within `budget_ms`. The best sample is written to
/// `sample_out`, which must hold `num_variables` bytes.
///
/// # Safety
/// Handles must be live; `sample_out` must point to `sample_len` writable
/// bytes; `out_energy` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qs_solve(
    solver: *const QsSolver,
    bqm: *const QsBqm,
    budget_ms: u64,
    seed: u64,
    sample_out: *mut u8,
    sample_len: usize,
    out_energy: *mut f64,
) -> QsStatus {
    guard(|| {
        let s = handle(solver)?;
        let b = handle(bqm)?;
        if sample_out.is_null() {
            return Err(Failure(QsStatus::NullPointer, "null sample buffer".into()));
        }
        if sample_len < b.0.num_variables() {
            return Err(Failure(QsStatus::BufferTooSmall, format!("need {} bytes", b.0.num_variables())));
        }
        let r = s.0.solve(&SolveRequest::new(b.0.clone(), budget_ms, seed))?;
        std::slice::from_raw_parts_mut(sample_out, r.sample.len()).copy_from_slice(&r.sample);
        *out(out_energy)? = r.energy;
        Ok(())
    })
}

/// Builds a fleet service from a scenario JSON document. Events are kept
/// in memory only.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_service` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn qs_service_new(
    scenario_json: *const c_char,
    solver_kind: *const c_char,
    seed: u64,
    out_service: *mut *mut QsService,
) -> QsStatus {
    guard(|| {
        let scenario: Scenario = serde_json::from_str(str_arg(scenario_json)?).map_err(invalid)?;
        scenario.validate().map_err(invalid)?;
        let kind: SolverKind = str_arg(solver_kind)?.parse()?;
        let mut config = ServiceConfig { seed, ..ServiceConfig::default() };
        if let Some(k) = scenario.route_count {
            config.route_count = k;
        }
        let graph = Arc::new(scenario.road_graph().map_err(invalid)?);
        let service =
            FleetService::new(graph, scenario.line_specs(), scenario.vehicle_ids(), config, kind.build(REMOTE_TIMEOUT))?;
        *out(out_service)? = Box::into_raw(Box::new(QsService(service)));
        Ok(())
    })
}

/// # Safety
/// `service` must come from [`qs_service_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qs_service_free(service: *mut QsService) {
    if !service.is_null() {
        drop(Box::from_raw(service));
    }
}

/// Starts a trip and writes its id.
///
/// # Safety
/// `service` must be live; strings NUL-terminated; `out_trip` writable.
#[no_mangle]
pub unsafe extern "C" fn qs_service_start_trip(
    service: *const QsService,
    vehicle_id: *const c_char,
    line: *const c_char,
    now_s: f64,
    out_trip: *mut u64,
) -> QsStatus {
    guard(|| {
        let s = handle(service)?;
        let trip = s.0.start_trip(&VehicleId::new(str_arg(vehicle_id)?), &LineTag::new(str_arg(line)?), now_s)?;
        *out(out_trip)? = trip.trip_id.0;
        Ok(())
    })
}

/// Ends a trip by hand.
///
/// # Safety
/// `service` must be live.
#[no_mangle]
pub unsafe extern "C" fn qs_service_end_trip(service: *const QsService, trip_id: u64, now_s: f64) -> QsStatus {
    guard(|| {
        handle(service)?.0.end_trip(TripId(trip_id), true, now_s)?;
        Ok(())
    })
}

/// Records one location fix.
///
/// # Safety
/// `service` must be live; `vehicle_id` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qs_service_update(
    service: *const QsService,
    vehicle_id: *const c_char,
    lat: f64,
    lon: f64,
    ts: f64,
) -> QsStatus {
    guard(|| {
        let fix = LocationFix { id: VehicleId::new(str_arg(vehicle_id)?), lat, lon, ts };
        handle(service)?.0.handle_update(&[fix])?;
        Ok(())
    })
}

/// Runs one optimization round and writes the outcome as JSON.
///
/// # Safety
/// `service` must be live; `out_json` writable. Free the string with
/// [`qs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn qs_service_optimize(service: *const QsService, now_s: f64, out_json: *mut *mut c_char) -> QsStatus {
    guard(|| {
        let outcome = handle(service)?.0.handle_optimize(now_s, &BTreeMap::new())?;
        *out(out_json)? = json_string(&outcome)?;
        Ok(())
    })
}

/// Writes the fleet snapshot as JSON.
///
/// # Safety
/// `service` must be live; `out_json` writable. Free the string with
/// [`qs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn qs_service_snapshot(service: *const QsService, now_s: f64, out_json: *mut *mut c_char) -> QsStatus {
    guard(|| {
        let snap = handle(service)?.0.snapshot(now_s);
        *out(out_json)? = json_string(&snap)?;
        Ok(())
    })
}

/// Adds an exclusion box and writes its id.
///
/// # Safety
/// `service` must be live; `out_id` writable.
#[no_mangle]
pub unsafe extern "C" fn qs_service_add_exclusion(
    service: *const QsService,
    south: f64,
    west: f64,
    north: f64,
    east: f64,
    out_id: *mut u64,
) -> QsStatus {
    guard(|| {
        let sw = GeoPoint::new(south, west).map_err(invalid)?;
        let ne = GeoPoint::new(north, east).map_err(invalid)?;
        let bbox = BoundingBox::new(sw, ne).map_err(invalid)?;
        *out(out_id)? = handle(service)?.0.add_exclusion(bbox)?.id;
        Ok(())
    })
}

/// # Safety
/// `service` must be live.
#[no_mangle]
pub unsafe extern "C" fn qs_service_remove_exclusion(service: *const QsService, id: u64) -> QsStatus {
    guard(|| {
        handle(service)?.0.remove_exclusion(id)?;
        Ok(())
    })
}
