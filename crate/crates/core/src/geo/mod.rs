//! Great-circle geometry on WGS84 coordinates.
//!
//! Everything here is a pure function over immutable inputs.

mod point;
mod polyline;

pub use point::{haversine_distance, point_in_box, BoundingBox, GeoPoint, EARTH_RADIUS_M};
pub use polyline::{
    cumulative_lengths, interpolate, nearest_on_polyline, point_at_arc_length, polyline_length,
    resample_polyline, PolylineProjection, DEFAULT_RESAMPLE_SPACING_M,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidPoint { lat: f64, lon: f64 },
    #[error("bounding box corners are inverted")]
    InvertedBox,
    #[error("polyline needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline has zero length")]
    DegeneratePolyline,
    #[error("spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
}
