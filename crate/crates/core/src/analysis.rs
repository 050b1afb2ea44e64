//! Overlap and trip statistics over recorded trips.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, resample_polyline, GeoPoint, DEFAULT_RESAMPLE_SPACING_M};
use crate::ids::{LineTag, TripId, VehicleId};
use crate::routing::RoadGraph;
use crate::service::{classify_trip, InvalidReason, LineSpec, TripRecord, TripState, TripValidity};

pub const OVERLAP_RADIUS_M: f64 = 50.0;
/// Trips are concurrent when their time spans share at least this long.
pub const CONCURRENCY_MIN_S: f64 = 60.0;
pub const MORNING_START_S: f64 = 8.0 * 3600.0;
pub const NOON_S: f64 = 12.0 * 3600.0;
pub const AFTERNOON_END_S: f64 = 18.0 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("location history is empty")]
pub struct EmptyHistory;

/// Fraction of `history_a` within `radius_m` of some point of `route_b`.
/// Both inputs are expected to be resampled already.
pub fn pairwise_overlap(history_a: &[GeoPoint], route_b: &[GeoPoint], radius_m: f64) -> Result<f64, EmptyHistory> {
    if history_a.is_empty() {
        return Err(EmptyHistory);
    }
    if route_b.is_empty() {
        return Ok(0.0);
    }
    let grid = Grid::new(route_b, radius_m);
    let hits = history_a.iter().filter(|p| grid.any_within(p, radius_m)).count();
    Ok(hits as f64 / history_a.len() as f64)
}

/// Resamples both polylines at 25 m, then measures as [`pairwise_overlap`].
pub fn polyline_overlap(history_a: &[GeoPoint], route_b: &[GeoPoint], radius_m: f64) -> Result<f64, EmptyHistory> {
    let a = resample(history_a);
    let b = resample(route_b);
    pairwise_overlap(&a, &b, radius_m)
}

fn resample(poly: &[GeoPoint]) -> Vec<GeoPoint> {
    resample_polyline(poly, DEFAULT_RESAMPLE_SPACING_M).unwrap_or_else(|_| poly.to_vec())
}

/// Bucketed copy of a point set on a local metric grid with cells at least
/// `radius` wide, so a radius query looks at nine cells.
struct Grid<'a> {
    points: &'a [GeoPoint],
    cells: HashMap<(i64, i64), Vec<usize>>,
    lat0: f64,
    m_per_deg_lat: f64,
    m_per_deg_lon: f64,
    cell_m: f64,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [GeoPoint], radius_m: f64) -> Self {
        let lat0 = points[0].lat;
        let m_per_deg_lat = crate::geo::EARTH_RADIUS_M.to_radians();
        // pad cells so the flat-earth bucketing never loses a true neighbour
        let mut g = Self {
            points,
            cells: HashMap::new(),
            lat0,
            m_per_deg_lat,
            m_per_deg_lon: m_per_deg_lat * lat0.to_radians().cos(),
            cell_m: radius_m.max(1.0) * 1.5,
        };
        for (i, p) in points.iter().enumerate() {
            g.cells.entry(g.cell(p)).or_default().push(i);
        }
        g
    }

    fn cell(&self, p: &GeoPoint) -> (i64, i64) {
        let y = (p.lat - self.lat0) * self.m_per_deg_lat;
        let x = p.lon * self.m_per_deg_lon;
        ((x / self.cell_m).floor() as i64, (y / self.cell_m).floor() as i64)
    }

    fn any_within(&self, p: &GeoPoint, radius_m: f64) -> bool {
        let (cx, cy) = self.cell(p);
        let found = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                self.cells
                    .get(&(cx + dx, cy + dy))
                    .is_some_and(|ix| ix.iter().any(|&i| haversine_distance(p, &self.points[i]) <= radius_m))
            })
        });
        // far from the reference latitude the grid distorts; check exhaustively
        if !found && (p.lat - self.lat0).abs() > 1.0 {
            return self.points.iter().any(|q| haversine_distance(p, q) <= radius_m);
        }
        found
    }
}

/// Line-pair label with the lines in rank order, e.g. `red-blue`.
pub fn pair_tag(a: &LineTag, b: &LineTag) -> String {
    let (x, y) = if a.rank() <= b.rank() { (a, b) } else { (b, a) };
    format!("{x}-{y}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapObservation {
    pub observer: VehicleId,
    pub reference: VehicleId,
    pub observer_trip: TripId,
    pub reference_trip: TripId,
    pub pair: String,
    pub overlap: f64,
    /// Shared time span of the two trips.
    pub window_start_s: f64,
    pub window_end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    /// Quartiles by linear interpolation between order statistics.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |f: f64| {
            let pos = f * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: String,
    pub stats: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub observations: Vec<OverlapObservation>,
    /// One entry per line pair, empty groups included.
    pub summary: Vec<PairSummary>,
}

impl OverlapReport {
    pub fn group(&self, pair: &str) -> Option<&BoxStats> {
        self.summary.iter().find(|s| s.pair == pair).and_then(|s| s.stats.as_ref())
    }
}

/// Every unordered pair of `lines`, same-line pairs first.
pub fn line_pairs(lines: &[LineTag]) -> Vec<String> {
    let mut sorted: Vec<&LineTag> = lines.iter().collect();
    sorted.sort_by(|a, b| a.rank().cmp(&b.rank()));
    sorted.dedup();
    let mut out: Vec<String> = sorted.iter().map(|l| pair_tag(l, l)).collect();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            out.push(pair_tag(a, b));
        }
    }
    out
}

fn span(t: &TripRecord) -> Option<(f64, f64)> {
    let start = t.start_s.or_else(|| t.history.first().map(|p| p.t))?;
    let end = t.end_s.or_else(|| t.history.last().map(|p| p.t))?;
    Some((start, end))
}

/// Directional overlap for every ordered pair of valid trips that ran
/// concurrently, each trip's resampled history measured against the other's.
///
/// Groups cover the built-in red, blue and black lines plus any other line
/// seen in `trips`.
pub fn fleet_overlap_report(trips: &[TripRecord]) -> OverlapReport {
    let valid: Vec<(&TripRecord, (f64, f64), Vec<GeoPoint>)> = trips
        .iter()
        .filter(|t| classify_trip(t).is_valid())
        .filter_map(|t| Some((t, span(t)?, resample(&t.history_points()))))
        .collect();
    let mut observations = Vec::new();
    for (a, sa, ha) in &valid {
        for (b, sb, hb) in &valid {
            if a.trip_id == b.trip_id || a.vehicle_id == b.vehicle_id {
                continue;
            }
            let (lo, hi) = (sa.0.max(sb.0), sa.1.min(sb.1));
            if hi - lo < CONCURRENCY_MIN_S {
                continue;
            }
            let Ok(overlap) = pairwise_overlap(ha, hb, OVERLAP_RADIUS_M) else { continue };
            observations.push(OverlapObservation {
                observer: a.vehicle_id.clone(),
                reference: b.vehicle_id.clone(),
                observer_trip: a.trip_id,
                reference_trip: b.trip_id,
                pair: pair_tag(&a.line, &b.line),
                overlap,
                window_start_s: lo,
                window_end_s: hi,
            });
        }
    }
    let mut lines: Vec<LineTag> = ["red", "blue", "black"].into_iter().map(LineTag::new).collect();
    lines.extend(trips.iter().map(|t| t.line.clone()));
    let summary = line_pairs(&lines)
        .into_iter()
        .map(|pair| {
            let values: Vec<f64> = observations.iter().filter(|o| o.pair == pair).map(|o| o.overlap).collect();
            PairSummary { stats: BoxStats::from_values(&values), pair }
        })
        .collect();
    OverlapReport { observations, summary }
}

/// Overlap between the lines' fastest no-traffic routes. Same-line pairs
/// are 1; a cross-line pair is the mean of its two directions.
pub fn static_baseline_overlap(graph: &RoadGraph, lines: &[LineSpec]) -> Result<BTreeMap<String, f64>, crate::routing::RoutingError> {
    let free = crate::traffic::TrafficState::free_flow(graph);
    let mut routes = Vec::new();
    for l in lines {
        let r = crate::routing::candidate_routes(graph, &free, &VehicleId::new(""), &l.origin, &l.destination, 1, &[])?;
        routes.push((l.tag.clone(), resample(&r[0].polyline)));
    }
    let mut out = BTreeMap::new();
    for (i, (ta, ra)) in routes.iter().enumerate() {
        out.insert(pair_tag(ta, ta), 1.0);
        for (tb, rb) in &routes[i + 1..] {
            let ab = pairwise_overlap(ra, rb, OVERLAP_RADIUS_M).unwrap_or(0.0);
            let ba = pairwise_overlap(rb, ra, OVERLAP_RADIUS_M).unwrap_or(0.0);
            out.insert(pair_tag(ta, tb), (ab + ba) / 2.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayPart {
    Morning,
    Afternoon,
}

impl DayPart {
    /// Buckets by start time of day: [8:00, 12:00) and [12:00, 18:00).
    pub fn of(start_s: f64) -> Option<Self> {
        let tod = start_s.rem_euclid(86_400.0);
        if (MORNING_START_S..NOON_S).contains(&tod) {
            Some(DayPart::Morning)
        } else if (NOON_S..AFTERNOON_END_S).contains(&tod) {
            Some(DayPart::Afternoon)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripBucket {
    pub line: LineTag,
    pub part: DayPart,
    pub count: usize,
    pub mean_duration_s: Option<f64>,
    pub durations_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripStats {
    pub buckets: Vec<TripBucket>,
    pub valid: usize,
    pub invalid: usize,
}

impl TripStats {
    pub fn bucket(&self, line: &str, part: DayPart) -> Option<&TripBucket> {
        self.buckets.iter().find(|b| b.line.as_str() == line && b.part == part)
    }

    pub fn valid_fraction(&self) -> Option<f64> {
        let n = self.valid + self.invalid;
        (n > 0).then(|| self.valid as f64 / n as f64)
    }
}

/// Counts and durations of valid ended trips by line and part of day.
/// Every built-in line gets both buckets even when empty.
pub fn trip_stats(trips: &[TripRecord], arrival_radius_m: f64) -> TripStats {
    let mut lines: Vec<LineTag> = ["red", "blue", "black"].into_iter().map(LineTag::new).collect();
    lines.extend(trips.iter().map(|t| t.line.clone()));
    lines.sort_by(|a, b| a.rank().cmp(&b.rank()));
    lines.dedup();
    let mut buckets: Vec<TripBucket> = lines
        .iter()
        .flat_map(|l| {
            [DayPart::Morning, DayPart::Afternoon].map(|part| TripBucket {
                line: l.clone(),
                part,
                count: 0,
                mean_duration_s: None,
                durations_s: Vec::new(),
            })
        })
        .collect();
    let (mut valid, mut invalid) = (0, 0);
    for t in trips.iter().filter(|t| t.state.is_ended()) {
        if !classify_trip(t).is_valid() {
            invalid += 1;
            continue;
        }
        valid += 1;
        let (Some(start), Some(d)) = (t.start_s, t.duration_s(arrival_radius_m)) else { continue };
        let Some(part) = DayPart::of(start) else { continue };
        if let Some(b) = buckets.iter_mut().find(|b| b.line == t.line && b.part == part) {
            b.count += 1;
            b.durations_s.push(d);
        }
    }
    for b in &mut buckets {
        if b.count > 0 {
            b.mean_duration_s = Some(b.durations_s.iter().sum::<f64>() / b.count as f64);
        }
    }
    TripStats { buckets, valid, invalid }
}

/// Everything `report` produces, as one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub trip_stats: TripStats,
    pub overlap: OverlapReport,
    /// Static-route overlap per line pair, when the road graph is known.
    pub baseline: Option<BTreeMap<String, f64>>,
}

pub fn analyse(trips: &[TripRecord], arrival_radius_m: f64, baseline: Option<BTreeMap<String, f64>>) -> AnalysisReport {
    AnalysisReport { trip_stats: trip_stats(trips, arrival_radius_m), overlap: fleet_overlap_report(trips), baseline }
}

#[derive(Serialize)]
struct TripRow<'a> {
    trip_id: u64,
    vehicle_id: &'a str,
    line: &'a str,
    state: TripState,
    start_s: Option<f64>,
    end_s: Option<f64>,
    duration_s: Option<f64>,
    points: usize,
    valid: bool,
    reason: Option<InvalidReason>,
}

#[derive(Serialize)]
struct StatsRow<'a> {
    line: &'a str,
    part: DayPart,
    count: usize,
    mean_duration_s: Option<f64>,
}

/// Writes trips.csv, overlap.csv, overlap_summary.json, trip_stats.csv and
/// trip_stats.json into `dir`.
pub fn write_report(report: &AnalysisReport, trips: &[TripRecord], arrival_radius_m: f64, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("trips.csv"))?;
    for t in trips {
        let validity = classify_trip(t);
        w.serialize(TripRow {
            trip_id: t.trip_id.0,
            vehicle_id: t.vehicle_id.as_str(),
            line: t.line.as_str(),
            state: t.state,
            start_s: t.start_s,
            end_s: t.end_s,
            duration_s: t.duration_s(arrival_radius_m),
            points: t.history.len(),
            valid: validity.is_valid(),
            reason: match validity {
                TripValidity::Invalid(r) => Some(r),
                TripValidity::Valid => None,
            },
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("overlap.csv"))?;
    for o in &report.overlap.observations {
        w.serialize(o)?;
    }
    w.flush()?;
    let summary = serde_json::json!({
        "pairs": report.overlap.summary,
        "baseline": report.baseline,
    });
    fs::write(dir.join("overlap_summary.json"), serde_json::to_vec_pretty(&summary).map_err(io::Error::other)?)?;
    let mut w = csv::Writer::from_path(dir.join("trip_stats.csv"))?;
    for b in &report.trip_stats.buckets {
        w.serialize(StatsRow { line: b.line.as_str(), part: b.part, count: b.count, mean_duration_s: b.mean_duration_s })?;
    }
    w.flush()?;
    fs::write(dir.join("trip_stats.json"), serde_json::to_vec_pretty(&report.trip_stats).map_err(io::Error::other)?)?;
    Ok(())
}
