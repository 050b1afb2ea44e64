use serde::{Deserialize, Serialize};

use super::GeoError;

/// Mean Earth radius used by every distance computation, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_009.0;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon);
        if ok {
            Ok(())
        } else {
            Err(GeoError::InvalidPoint { lat: self.lat, lon: self.lon })
        }
    }

    /// Offsets this point by the given north/east distances using a local
    /// equirectangular approximation. Only meant for building synthetic
    /// geometry at city scale.
    pub fn offset_m(&self, north_m: f64, east_m: f64) -> GeoPoint {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        GeoPoint { lat: self.lat + dlat, lon: self.lon + dlon }
    }
}

/// Axis-aligned geographic rectangle. Membership is closed on all sides and
/// the box never wraps the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    #[serde(rename = "sw")]
    pub south_west: GeoPoint,
    #[serde(rename = "ne")]
    pub north_east: GeoPoint,
}

impl BoundingBox {
    pub fn new(south_west: GeoPoint, north_east: GeoPoint) -> Result<Self, GeoError> {
        let b = Self { south_west, north_east };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        self.south_west.validate()?;
        self.north_east.validate()?;
        if self.south_west.lat > self.north_east.lat || self.south_west.lon > self.north_east.lon {
            return Err(GeoError::InvertedBox);
        }
        Ok(())
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        point_in_box(p, self)
    }

    /// Box of half-size `half_m` meters centred on `center`.
    pub fn around(center: GeoPoint, half_m: f64) -> BoundingBox {
        BoundingBox {
            south_west: center.offset_m(-half_m, -half_m),
            north_east: center.offset_m(half_m, half_m),
        }
    }
}

/// Great-circle distance in meters using the haversine formula.
pub fn haversine_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s_phi = (dphi / 2.0).sin();
    let s_lambda = (dlambda / 2.0).sin();
    let h = s_phi * s_phi + phi1.cos() * phi2.cos() * s_lambda * s_lambda;
    // rounding can push h a hair outside [0, 1] for antipodal points
    2.0 * EARTH_RADIUS_M * h.clamp(0.0, 1.0).sqrt().asin()
}

pub fn point_in_box(p: &GeoPoint, bbox: &BoundingBox) -> bool {
    p.lat >= bbox.south_west.lat
        && p.lat <= bbox.north_east.lat
        && p.lon >= bbox.south_west.lon
        && p.lon <= bbox.north_east.lon
}
