//! The fleet web service: location updates, trip lifecycle, exclusion
//! boxes and fleet-wide route optimization, persisted as an event log.

mod diff;
mod events;
mod fleet;
pub mod http;
mod projection;
mod trip;

pub use diff::{diff_routes, is_continuation, RouteDiff};
pub use events::{read_events, Event, EventLog, Ledger, EVENT_LOG_FILE};
pub use fleet::{
    CounterSnapshot, Counters, Exclusion, FleetService, FleetSnapshot, LocationFix, OptimizeOutcome, StalePoint, UpdateAck,
    VehicleRoute, VehicleSnapshot, STATIC_ROUTE_TAG,
};
pub use projection::{
    project_location, speed_from_fixes, Projection, ProjectionError, DEFAULT_PROJECTION_HORIZON_S,
    OFF_ROUTE_TOLERANCE_M,
};
pub use trip::{
    classify_trip, InvalidReason, RouteRecord, TimedPoint, TripRecord, TripState, TripValidity,
    ENDPOINT_TOLERANCE_M, MIN_HISTORY_POINTS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};
use crate::ids::{LineTag, TripId, VehicleId};
use crate::qubo::QuboConfig;
use crate::routing::{RoutingError, DEFAULT_ROUTE_COUNT, DEFAULT_TIME_SLACK_S};

/// Trips end automatically within this distance of the destination.
pub const AUTO_END_RADIUS_M: f64 = 15.0;
/// Trip duration runs until the vehicle is first recorded this close to the
/// destination.
pub const ARRIVAL_RECORD_RADIUS_M: f64 = 50.0;
pub const DEFAULT_UPDATE_INTERVAL_S: f64 = 30.0;
pub const DEFAULT_OPTIMIZE_INTERVAL_S: f64 = 120.0;
pub const DEFAULT_SOLVER_BUDGET_MS: u64 = 200;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("unknown line {0}")]
    UnknownLine(LineTag),
    #[error("unknown trip {0}")]
    UnknownTrip(TripId),
    #[error("unknown exclusion {0}")]
    UnknownExclusion(u64),
    #[error("vehicle {0} already has an active trip")]
    VehicleBusy(VehicleId),
    #[error("trip {0} is not active")]
    NoActiveTrip(TripId),
    #[error("no vehicle has an active trip")]
    NoActiveTrips,
    #[error("an optimization is already running")]
    OptimizationInFlight,
    #[error(transparent)]
    InvalidGeometry(#[from] GeoError),
    #[error("line {line} cannot be routed: {source}")]
    Unroutable { line: LineTag, source: RoutingError },
    #[error("event log: {0}")]
    Persistence(#[from] std::io::Error),
}

/// A service line and its two stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub tag: LineTag,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub route_count: usize,
    pub time_slack_s: f64,
    pub projection_horizon_s: f64,
    pub off_route_tolerance_m: f64,
    pub auto_end_radius_m: f64,
    pub arrival_record_radius_m: f64,
    pub solver_budget_ms: u64,
    pub seed: u64,
    pub qubo: QuboConfig,
    /// Seed local-search solvers with the previous assignment.
    pub warm_start: bool,
    /// Store each optimization's model and sample in the event log.
    pub persist_problems: bool,
    pub update_interval_s: f64,
    pub optimize_interval_s: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            route_count: DEFAULT_ROUTE_COUNT,
            time_slack_s: DEFAULT_TIME_SLACK_S,
            projection_horizon_s: DEFAULT_PROJECTION_HORIZON_S,
            off_route_tolerance_m: OFF_ROUTE_TOLERANCE_M,
            auto_end_radius_m: AUTO_END_RADIUS_M,
            arrival_record_radius_m: ARRIVAL_RECORD_RADIUS_M,
            solver_budget_ms: DEFAULT_SOLVER_BUDGET_MS,
            seed: 0,
            qubo: QuboConfig::default(),
            warm_start: true,
            persist_problems: true,
            update_interval_s: DEFAULT_UPDATE_INTERVAL_S,
            optimize_interval_s: DEFAULT_OPTIMIZE_INTERVAL_S,
        }
    }
}
