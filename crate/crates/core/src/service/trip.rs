use serde::{Deserialize, Serialize};

use crate::geo::{haversine_distance, GeoPoint};
use crate::ids::{LineTag, TripId, VehicleId};
use crate::routing::CandidateRoute;

/// Fewer recorded locations than this makes a trip invalid.
pub const MIN_HISTORY_POINTS: usize = 5;
/// A recorded endpoint further than this from the line's stop makes a trip
/// invalid.
pub const ENDPOINT_TOLERANCE_M: f64 = 1_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripState {
    Pending,
    Active,
    EndedManual,
    EndedAuto,
}

impl TripState {
    pub fn is_ended(self) -> bool {
        matches!(self, TripState::EndedManual | TripState::EndedAuto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
}

impl TimedPoint {
    pub fn new(t: f64, p: GeoPoint) -> Self {
        Self { t, lat: p.lat, lon: p.lon }
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub t: f64,
    pub route: CandidateRoute,
    pub solver: String,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: TripId,
    pub vehicle_id: VehicleId,
    pub line: LineTag,
    /// The line's expected stops.
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub state: TripState,
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
    pub history: Vec<TimedPoint>,
    pub routes: Vec<RouteRecord>,
}

impl TripRecord {
    pub fn current_route(&self) -> Option<&CandidateRoute> {
        self.routes.last().map(|r| &r.route)
    }

    pub fn history_points(&self) -> Vec<GeoPoint> {
        self.history.iter().map(TimedPoint::point).collect()
    }

    /// Trip duration: from the start until the first recorded location
    /// within `record_radius_m` of the destination, or until the trip ended
    /// if it never came that close.
    pub fn duration_s(&self, record_radius_m: f64) -> Option<f64> {
        let start = self.start_s?;
        let end = self.end_s?;
        let arrived = self
            .history
            .iter()
            .find(|p| haversine_distance(&p.point(), &self.destination) <= record_radius_m)
            .map_or(end, |p| p.t);
        Some((arrived.min(end) - start).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    TooFewPoints,
    DisplacedEndpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "validity", content = "reason", rename_all = "kebab-case")]
pub enum TripValidity {
    Valid,
    Invalid(InvalidReason),
}

impl TripValidity {
    pub fn is_valid(self) -> bool {
        self == TripValidity::Valid
    }
}

/// A trip is invalid when it recorded too few locations or when its first
/// or last recorded location is far from the line's stop.
pub fn classify_trip(trip: &TripRecord) -> TripValidity {
    if trip.history.len() < MIN_HISTORY_POINTS {
        return TripValidity::Invalid(InvalidReason::TooFewPoints);
    }
    let first = trip.history[0].point();
    let last = trip.history[trip.history.len() - 1].point();
    if haversine_distance(&first, &trip.origin) > ENDPOINT_TOLERANCE_M
        || haversine_distance(&last, &trip.destination) > ENDPOINT_TOLERANCE_M
    {
        return TripValidity::Invalid(InvalidReason::DisplacedEndpoint);
    }
    TripValidity::Valid
}
