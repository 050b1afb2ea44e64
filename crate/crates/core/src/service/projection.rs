use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    cumulative_lengths, haversine_distance, nearest_on_polyline, resample_polyline, GeoPoint,
    DEFAULT_RESAMPLE_SPACING_M,
};

/// Projection horizon: one optimization interval ahead.
pub const DEFAULT_PROJECTION_HORIZON_S: f64 = 120.0;
/// Further than this from the assigned route, projection is abandoned.
pub const OFF_ROUTE_TOLERANCE_M: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// A vertex of the route resampled at 25 m.
    pub point: GeoPoint,
    /// Arc length of `point` along the route.
    pub arc_length_m: f64,
    /// Arc length of the live location's nearest point on the route.
    pub live_arc_length_m: f64,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ProjectionError {
    #[error("vehicle is {distance_m:.0} m from its route")]
    OffRoute { distance_m: f64 },
    #[error("route has no length")]
    DegenerateRoute,
}

/// Where the vehicle will be `horizon_s` from now if it keeps `speed_mps`
/// along `route`. The result is the resampled vertex closest in arc length
/// to the target, clamped to the route end.
pub fn project_location(
    route: &[GeoPoint],
    live: &GeoPoint,
    speed_mps: f64,
    horizon_s: f64,
    off_route_tolerance_m: f64,
) -> Result<Projection, ProjectionError> {
    let samples = resample_polyline(route, DEFAULT_RESAMPLE_SPACING_M).map_err(|_| ProjectionError::DegenerateRoute)?;
    let cum = cumulative_lengths(&samples);
    let near = nearest_on_polyline(&samples, &cum, live);
    if near.distance > off_route_tolerance_m {
        return Err(ProjectionError::OffRoute { distance_m: near.distance });
    }
    let total = *cum.last().unwrap();
    let target = (near.arc_length + speed_mps.max(0.0) * horizon_s.max(0.0)).min(total);
    let i = cum.partition_point(|&c| c < target).min(cum.len() - 1);
    let k = if i > 0 && (target - cum[i - 1]) <= (cum[i] - target) { i - 1 } else { i };
    Ok(Projection { point: samples[k], arc_length_m: cum[k], live_arc_length_m: near.arc_length })
}

/// Speed from the last two timestamped fixes, if they are distinct in time.
pub fn speed_from_fixes(prev: (f64, GeoPoint), last: (f64, GeoPoint)) -> Option<f64> {
    let dt = last.0 - prev.0;
    (dt > 0.0).then(|| haversine_distance(&prev.1, &last.1) / dt)
}
