//! Scenario files: road graph, lines with timetables, fleet, and an hourly
//! background traffic profile.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, GeoPoint};
use crate::ids::{LineTag, VehicleId};
use crate::routing::{EdgeRecord, GraphFile, NodeId, NodeRecord, RoadGraph, RoutingError};
use crate::service::LineSpec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] RoutingError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLine {
    pub tag: LineTag,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub headway_s: f64,
    /// Seconds since midnight.
    pub first_departure_s: f64,
    pub last_departure_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVehicle {
    pub id: VehicleId,
    pub line: LineTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Seconds since midnight.
    pub service_start_s: f64,
    pub service_end_s: f64,
    /// Background load as a fraction of capacity, one entry per hour of day.
    pub hourly_load_ratio: Vec<f64>,
    /// Candidate routes per vehicle; the service default when absent.
    #[serde(default)]
    pub route_count: Option<usize>,
    pub lines: Vec<ScenarioLine>,
    pub vehicles: Vec<ScenarioVehicle>,
    pub graph: GraphFile,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(&fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    // negated comparisons so that NaN fails them
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.hourly_load_ratio.len() != 24 || self.hourly_load_ratio.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(ScenarioError::Invalid("hourly_load_ratio needs 24 non-negative entries".into()));
        }
        if !(self.service_start_s < self.service_end_s) {
            return Err(ScenarioError::Invalid("service window is empty".into()));
        }
        for l in &self.lines {
            l.origin.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            l.destination.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            if !(l.headway_s > 0.0) {
                return Err(ScenarioError::Invalid(format!("line {} needs a positive headway", l.tag)));
            }
        }
        for v in &self.vehicles {
            if !self.lines.iter().any(|l| l.tag == v.line) {
                return Err(ScenarioError::Invalid(format!("vehicle {} serves unknown line {}", v.id, v.line)));
            }
        }
        let g = self.road_graph()?;
        let mut stops = Vec::new();
        for l in &self.lines {
            for p in [l.origin, l.destination] {
                let i = g.snap(&p, crate::routing::SNAP_RADIUS_M)?;
                stops.push(g.node_id(i));
            }
        }
        g.check_strongly_connected(&stops)?;
        Ok(())
    }

    pub fn road_graph(&self) -> Result<RoadGraph, ScenarioError> {
        Ok(RoadGraph::from_file(self.graph.clone())?)
    }

    pub fn line_specs(&self) -> Vec<LineSpec> {
        self.lines
            .iter()
            .map(|l| LineSpec { tag: l.tag.clone(), origin: l.origin, destination: l.destination })
            .collect()
    }

    pub fn vehicle_ids(&self) -> Vec<VehicleId> {
        self.vehicles.iter().map(|v| v.id.clone()).collect()
    }

    pub fn load_ratio_at(&self, t_s: f64) -> f64 {
        let hour = ((t_s / 3600.0).floor() as i64).rem_euclid(24) as usize;
        self.hourly_load_ratio[hour]
    }
}

struct Builder {
    base: GeoPoint,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

impl Builder {
    /// Adds a node `east_m`, `north_m` from the base point.
    fn node(&mut self, east_m: f64, north_m: f64) -> NodeId {
        let p = self.base.offset_m(north_m, east_m);
        let id = NodeId(self.nodes.len() as u32 + 1);
        self.nodes.push(NodeRecord { id, lat: p.lat, lon: p.lon });
        id
    }

    fn point(&self, id: NodeId) -> GeoPoint {
        let n = &self.nodes[id.0 as usize - 1];
        GeoPoint { lat: n.lat, lon: n.lon }
    }

    fn road(&mut self, a: NodeId, b: NodeId, speed_mps: f64, capacity_vph: f64) {
        let length_m = haversine_distance(&self.point(a), &self.point(b));
        self.edges.push(EdgeRecord { from: a, to: b, length_m, t0_s: length_m / speed_mps, capacity_vph, oneway: false });
    }

    /// A straight road of `n` equal pieces from `from` towards `(dx, dy)`
    /// metres away; returns every node on it including `from`.
    fn straight(&mut self, from: NodeId, at: (f64, f64), d: (f64, f64), n: usize, speed: f64, cap: f64) -> Vec<NodeId> {
        let mut out = vec![from];
        for i in 1..=n {
            let f = i as f64 / n as f64;
            let id = self.node(at.0 + d.0 * f, at.1 + d.1 * f);
            self.road(out[i - 1], id, speed, cap);
            out.push(id);
        }
        out
    }
}

pub const CORRIDOR_LENGTH_M: f64 = 12_000.0;
pub const ROW_SPACING_M: f64 = 400.0;
pub const FEEDER_LENGTH_M: f64 = 3_500.0;

/// A conference-day network where two lines share a highway.
///
/// Five parallel east-west rows, `ROW_SPACING_M` apart and joined only at
/// their two ends, form a 12 km ladder whose middle row is a highway. Three
/// feeder roads meet at the ladder's west end: one from the red line's
/// stop, one from the blue line's stop, and one from the city centre where
/// the black line ends. A single road leads from the east end to the
/// summit, where red and blue end and black starts. With no traffic every
/// line takes the highway, so red and blue share most of their route; the
/// other rows cost only the climb along the end connectors, so all five
/// stay within the time filter.
pub fn shared_corridor() -> Scenario {
    let mut b = Builder { base: GeoPoint { lat: 38.70, lon: -9.30 }, nodes: Vec::new(), edges: Vec::new() };
    let row_speed = [22.2; 5];
    let row_cap = [1800.0, 1800.0, 4000.0, 1800.0, 1800.0];
    let pieces = (CORRIDOR_LENGTH_M / 500.0) as usize;
    let mut rows = Vec::new();
    for r in 0..5 {
        let y = (2.0 - r as f64) * ROW_SPACING_M;
        let start = b.node(0.0, y);
        rows.push(b.straight(start, (0.0, y), (CORRIDOR_LENGTH_M, 0.0), pieces, row_speed[r], row_cap[r]));
    }
    for r in 0..4 {
        let (w0, w1) = (rows[r][0], rows[r + 1][0]);
        let (e0, e1) = (rows[r][pieces], rows[r + 1][pieces]);
        b.road(w0, w1, 16.7, 1000.0);
        b.road(e0, e1, 16.7, 1000.0);
    }
    let west = rows[2][0];
    let east = rows[2][pieces];
    let feeder = |b: &mut Builder, dir: (f64, f64)| {
        let d = (dir.0 * FEEDER_LENGTH_M, dir.1 * FEEDER_LENGTH_M);
        *b.straight(west, (0.0, 0.0), d, 7, 12.5, 1200.0).last().unwrap()
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let red_stop = feeder(&mut b, (-1.0, 0.0));
    let blue_stop = feeder(&mut b, (-s, s));
    let centre = feeder(&mut b, (-s, -s));
    let summit = *b.straight(east, (CORRIDOR_LENGTH_M, 0.0), (FEEDER_LENGTH_M, 0.0), 7, 12.5, 1200.0).last().unwrap();

    let headway = 400.0;
    let first = 8.0 * 3600.0;
    let last = 17.5 * 3600.0;
    let line = |tag: &str, o: NodeId, d: NodeId, offset: f64| ScenarioLine {
        tag: LineTag::new(tag),
        origin: b.point(o),
        destination: b.point(d),
        headway_s: headway,
        first_departure_s: first + offset,
        last_departure_s: last + offset,
    };
    let lines = vec![
        line("red", red_stop, summit, 0.0),
        line("blue", blue_stop, summit, headway / 3.0),
        line("black", summit, centre, 2.0 * headway / 3.0),
    ];
    let vehicles = ["red", "blue", "black"]
        .iter()
        .enumerate()
        .flat_map(|(li, tag)| {
            (0..3).map(move |k| ScenarioVehicle { id: VehicleId::new(format!("bus-{}", li * 3 + k + 1)), line: LineTag::new(*tag) })
        })
        .collect();
    let mut hourly = vec![0.2; 24];
    for (h, r) in [(7, 0.6), (8, 0.85), (9, 0.8), (10, 0.6), (11, 0.55), (12, 0.7), (13, 0.65), (14, 0.55), (15, 0.6), (16, 0.85), (17, 0.9), (18, 0.7), (19, 0.4)] {
        hourly[h] = r;
    }
    Scenario {
        name: "shared-corridor".into(),
        seed: 2019,
        service_start_s: first,
        service_end_s: 18.0 * 3600.0,
        hourly_load_ratio: hourly,
        route_count: Some(5),
        lines,
        vehicles,
        graph: GraphFile { nodes: b.nodes, edges: b.edges },
    }
}
