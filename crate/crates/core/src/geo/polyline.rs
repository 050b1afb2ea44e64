use super::{haversine_distance, GeoError, GeoPoint, EARTH_RADIUS_M};

/// Spacing used when densifying polylines before matching or measuring.
pub const DEFAULT_RESAMPLE_SPACING_M: f64 = 25.0;

/// Point at fraction `f` of the great-circle arc from `a` to `b`.
pub fn interpolate(a: &GeoPoint, b: &GeoPoint, f: f64) -> GeoPoint {
    if f <= 0.0 {
        return *a;
    }
    if f >= 1.0 {
        return *b;
    }
    let delta = haversine_distance(a, b) / EARTH_RADIUS_M;
    if delta < 1e-12 {
        return GeoPoint { lat: a.lat + (b.lat - a.lat) * f, lon: a.lon + (b.lon - a.lon) * f };
    }
    let (phi1, lam1) = (a.lat.to_radians(), a.lon.to_radians());
    let (phi2, lam2) = (b.lat.to_radians(), b.lon.to_radians());
    let sin_d = delta.sin();
    let wa = ((1.0 - f) * delta).sin() / sin_d;
    let wb = (f * delta).sin() / sin_d;
    let x = wa * phi1.cos() * lam1.cos() + wb * phi2.cos() * lam2.cos();
    let y = wa * phi1.cos() * lam1.sin() + wb * phi2.cos() * lam2.sin();
    let z = wa * phi1.sin() + wb * phi2.sin();
    GeoPoint {
        lat: z.atan2((x * x + y * y).sqrt()).to_degrees(),
        lon: y.atan2(x).to_degrees(),
    }
}

/// Arc length at each vertex, starting at 0.
pub fn cumulative_lengths(polyline: &[GeoPoint]) -> Vec<f64> {
    let mut out = Vec::with_capacity(polyline.len());
    let mut acc = 0.0;
    for (i, p) in polyline.iter().enumerate() {
        if i > 0 {
            acc += haversine_distance(&polyline[i - 1], p);
        }
        out.push(acc);
    }
    out
}

pub fn polyline_length(polyline: &[GeoPoint]) -> f64 {
    polyline.windows(2).map(|w| haversine_distance(&w[0], &w[1])).sum()
}

/// Point at arc length `s` (clamped to the polyline's extent).
///
/// `cumulative` must come from [`cumulative_lengths`] on the same polyline.
pub fn point_at_arc_length(polyline: &[GeoPoint], cumulative: &[f64], s: f64) -> GeoPoint {
    debug_assert_eq!(polyline.len(), cumulative.len());
    let total = *cumulative.last().unwrap_or(&0.0);
    if polyline.len() == 1 || s <= 0.0 {
        return polyline[0];
    }
    if s >= total {
        return *polyline.last().unwrap();
    }
    // first vertex whose arc length exceeds s
    let hi = cumulative.partition_point(|&c| c <= s).min(polyline.len() - 1).max(1);
    let lo = hi - 1;
    let seg = cumulative[hi] - cumulative[lo];
    if seg <= 0.0 {
        return polyline[lo];
    }
    interpolate(&polyline[lo], &polyline[hi], (s - cumulative[lo]) / seg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    /// Closest point on the polyline.
    pub point: GeoPoint,
    /// Arc length of `point` from the polyline start.
    pub arc_length: f64,
    /// Distance from the query to `point`.
    pub distance: f64,
    /// Index of the segment (start vertex) holding `point`.
    pub segment: usize,
}

/// Closest point on the polyline to `query`.
///
/// The foot of the perpendicular is found in a local tangent plane per
/// segment; the reported distance is the haversine distance to that foot.
pub fn nearest_on_polyline(
    polyline: &[GeoPoint],
    cumulative: &[f64],
    query: &GeoPoint,
) -> PolylineProjection {
    let mut best = PolylineProjection {
        point: polyline[0],
        arc_length: 0.0,
        distance: haversine_distance(&polyline[0], query),
        segment: 0,
    };
    for i in 0..polyline.len().saturating_sub(1) {
        let (a, b) = (&polyline[i], &polyline[i + 1]);
        let t = segment_parameter(a, b, query);
        let point = interpolate(a, b, t);
        let distance = haversine_distance(&point, query);
        if distance < best.distance {
            let seg = cumulative[i + 1] - cumulative[i];
            best = PolylineProjection { point, arc_length: cumulative[i] + t * seg, distance, segment: i };
        }
    }
    best
}

fn segment_parameter(a: &GeoPoint, b: &GeoPoint, q: &GeoPoint) -> f64 {
    let k = ((a.lat + b.lat) / 2.0).to_radians().cos();
    let (bx, by) = ((b.lon - a.lon) * k, b.lat - a.lat);
    let (qx, qy) = ((q.lon - a.lon) * k, q.lat - a.lat);
    let len2 = bx * bx + by * by;
    if len2 == 0.0 {
        return 0.0;
    }
    ((qx * bx + qy * by) / len2).clamp(0.0, 1.0)
}

/// Densifies a polyline to points at arc-length multiples of `spacing`,
/// always keeping the first and last original points.
pub fn resample_polyline(polyline: &[GeoPoint], spacing: f64) -> Result<Vec<GeoPoint>, GeoError> {
    if polyline.len() < 2 {
        return Err(GeoError::TooFewPoints(polyline.len()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(GeoError::InvalidSpacing(spacing));
    }
    let cumulative = cumulative_lengths(polyline);
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return Err(GeoError::DegeneratePolyline);
    }
    let mut out = vec![polyline[0]];
    let mut seg = 0usize;
    let mut k = 1u64;
    loop {
        let s = k as f64 * spacing;
        // a sample within a millimetre of the end would duplicate it
        if s >= total - 1e-3 {
            break;
        }
        while cumulative[seg + 1] < s {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let f = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
        out.push(interpolate(&polyline[seg], &polyline[seg + 1], f));
        k += 1;
    }
    out.push(*polyline.last().unwrap());
    Ok(out)
}
