use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrafficState;
use crate::geo::{cumulative_lengths, haversine_distance, nearest_on_polyline, point_at_arc_length, GeoPoint};
use crate::ids::{LineTag, VehicleId};
use crate::routing::{CandidateRoute, LinkId, RoadGraph};

/// How far a replacement route may start from the vehicle before it is
/// treated as a discontinuity.
pub const REASSIGN_TOLERANCE_M: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("new route is {distance_m:.0} m away from the vehicle")]
    RouteDiscontinuity { distance_m: f64 },
    #[error("vehicle {0} is not en route")]
    NotEnRoute(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VehicleState {
    Idle,
    EnRoute,
    Arrived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub now_s: f64,
    pub tick_s: f64,
}

impl SimClock {
    pub fn new(start_s: f64, tick_s: f64) -> Self {
        assert!(tick_s > 0.0, "tick length must be positive");
        Self { now_s: start_s, tick_s }
    }

    pub fn advance(&mut self) {
        self.now_s += self.tick_s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimVehicle {
    pub id: VehicleId,
    pub line: LineTag,
    pub state: VehicleState,
    route: Option<CandidateRoute>,
    cumulative: Vec<f64>,
    progress_m: f64,
    segment: usize,
    speed_mps: f64,
    parked: GeoPoint,
}

impl SimVehicle {
    pub fn new(id: VehicleId, line: LineTag, parked: GeoPoint) -> Self {
        Self {
            id,
            line,
            state: VehicleState::Idle,
            route: None,
            cumulative: Vec::new(),
            progress_m: 0.0,
            segment: 0,
            speed_mps: 0.0,
            parked,
        }
    }

    pub fn route(&self) -> Option<&CandidateRoute> {
        self.route.as_ref()
    }

    pub fn progress_m(&self) -> f64 {
        self.progress_m
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn route_length_m(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Position derived from arc-length progress along the assigned polyline.
    pub fn position(&self) -> GeoPoint {
        match &self.route {
            Some(r) => point_at_arc_length(&r.polyline, &self.cumulative, self.progress_m),
            None => self.parked,
        }
    }

    /// Links still ahead of the vehicle, including the one it is on.
    pub fn remaining_links(&self) -> &[LinkId] {
        match (&self.route, self.state) {
            (Some(r), VehicleState::EnRoute) => &r.links[self.segment.min(r.links.len())..],
            _ => &[],
        }
    }

    /// Parks the vehicle at `at` with no route.
    pub fn park(&mut self, at: GeoPoint) {
        self.route = None;
        self.cumulative.clear();
        self.progress_m = 0.0;
        self.segment = 0;
        self.speed_mps = 0.0;
        self.parked = at;
        self.state = VehicleState::Idle;
    }

    fn segment_speed(&self, traffic: &TrafficState) -> f64 {
        let r = self.route.as_ref().expect("speed needs a route");
        let seg = self.segment.min(r.links.len() - 1);
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        len / traffic.congested_time(r.links[seg])
    }

    fn install(&mut self, route: CandidateRoute, progress: f64, traffic: &TrafficState) {
        self.cumulative = cumulative_lengths(&route.polyline);
        let total = *self.cumulative.last().unwrap();
        self.progress_m = progress.clamp(0.0, total);
        let last_seg = route.links.len() - 1;
        self.segment = self.cumulative.partition_point(|&c| c <= self.progress_m).saturating_sub(1).min(last_seg);
        self.route = Some(route);
        self.speed_mps = self.segment_speed(traffic);
    }

    /// Begins a new trip along `route` from its first point.
    pub fn start(&mut self, route: CandidateRoute, traffic: &TrafficState) {
        self.install(route, 0.0, traffic);
        self.state = VehicleState::EnRoute;
    }

    /// Replaces the vehicle's route, keeping its physical position.
    ///
    /// The new route must start within [`REASSIGN_TOLERANCE_M`] of the
    /// current or projected position, or pass that close to the current
    /// position. Progress becomes the arc length of the point on the new
    /// polyline nearest to the vehicle.
    pub fn reassign_route(
        &mut self,
        new_route: CandidateRoute,
        projected: Option<GeoPoint>,
        traffic: &TrafficState,
    ) -> Result<(), SimError> {
        if self.state != VehicleState::EnRoute {
            return Err(SimError::NotEnRoute(self.id.clone()));
        }
        if self.route.as_ref().map(|r| &r.node_path) == Some(&new_route.node_path) {
            let progress = self.progress_m;
            self.install(new_route, progress, traffic);
            return Ok(());
        }
        let here = self.position();
        let start = new_route.polyline[0];
        let cumulative = cumulative_lengths(&new_route.polyline);
        let on_route = nearest_on_polyline(&new_route.polyline, &cumulative, &here);
        let gap = [
            haversine_distance(&start, &here),
            projected.map_or(f64::INFINITY, |p| haversine_distance(&start, &p)),
            on_route.distance,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        if gap > REASSIGN_TOLERANCE_M {
            return Err(SimError::RouteDiscontinuity { distance_m: gap });
        }
        self.install(new_route, on_route.arc_length, traffic);
        Ok(())
    }

    /// Moves the vehicle for `dt` seconds. Speed is fixed per segment at the
    /// moment the vehicle enters it.
    fn advance(&mut self, dt: f64, traffic: &TrafficState) {
        if self.state != VehicleState::EnRoute {
            return;
        }
        let last_seg = self.route.as_ref().map_or(0, |r| r.links.len() - 1);
        let mut time_left = dt;
        loop {
            let seg_end = self.cumulative[self.segment + 1];
            let reach = self.speed_mps * time_left;
            if self.progress_m + reach < seg_end {
                self.progress_m += reach;
                break;
            }
            if self.speed_mps > 0.0 {
                time_left -= (seg_end - self.progress_m) / self.speed_mps;
            }
            self.progress_m = seg_end;
            if self.segment == last_seg {
                self.state = VehicleState::Arrived;
                self.speed_mps = 0.0;
                break;
            }
            self.segment += 1;
            self.speed_mps = self.segment_speed(traffic);
            if time_left <= 0.0 {
                break;
            }
        }
    }
}

/// One line of the tick-level telemetry log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub vehicle_id: VehicleId,
    pub lat: f64,
    pub lon: f64,
    pub state: VehicleState,
    pub route_hash: Option<String>,
}

/// Owns the clock, traffic and vehicles, and advances them one tick at a
/// time.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub graph: Arc<RoadGraph>,
    pub traffic: TrafficState,
    pub vehicles: Vec<SimVehicle>,
    pub clock: SimClock,
}

impl Simulator {
    pub fn new(graph: Arc<RoadGraph>, traffic: TrafficState, vehicles: Vec<SimVehicle>, clock: SimClock) -> Self {
        Self { graph, traffic, vehicles, clock }
    }

    pub fn vehicle(&self, id: &VehicleId) -> Option<&SimVehicle> {
        self.vehicles.iter().find(|v| &v.id == id)
    }

    fn vehicle_mut(&mut self, id: &VehicleId) -> Result<&mut SimVehicle, SimError> {
        self.vehicles.iter_mut().find(|v| &v.id == id).ok_or_else(|| SimError::UnknownVehicle(id.clone()))
    }

    /// Advances every en-route vehicle by one tick, then recomputes fleet
    /// loads from the remaining assignments.
    pub fn step(&mut self) {
        let dt = self.clock.tick_s;
        for v in &mut self.vehicles {
            v.advance(dt, &self.traffic);
        }
        self.recompute_fleet_loads();
        self.clock.advance();
    }

    pub fn recompute_fleet_loads(&mut self) {
        let mut loads = vec![0u32; self.traffic.link_count()];
        for v in &self.vehicles {
            for l in v.remaining_links() {
                loads[l.0] += 1;
            }
        }
        self.traffic.set_fleet_loads(&self.graph, loads);
    }

    pub fn start_vehicle(&mut self, id: &VehicleId, route: CandidateRoute) -> Result<(), SimError> {
        let traffic = self.traffic.clone();
        let v = self.vehicle_mut(id)?;
        v.start(route, &traffic);
        self.recompute_fleet_loads();
        Ok(())
    }

    pub fn reassign(
        &mut self,
        id: &VehicleId,
        route: CandidateRoute,
        projected: Option<GeoPoint>,
    ) -> Result<(), SimError> {
        let graph = Arc::clone(&self.graph);
        let mut traffic = std::mem::replace(&mut self.traffic, TrafficState::free_flow(&graph));
        let result = (|| {
            let v = self.vehicle_mut(id)?;
            let before: Vec<LinkId> = v.remaining_links().to_vec();
            v.reassign_route(route, projected, &traffic)?;
            let after: Vec<LinkId> = v.remaining_links().to_vec();
            for l in before {
                traffic.adjust_fleet(&graph, l, -1);
            }
            for l in after {
                traffic.adjust_fleet(&graph, l, 1);
            }
            Ok(())
        })();
        self.traffic = traffic;
        result
    }

    pub fn park(&mut self, id: &VehicleId, at: GeoPoint) -> Result<(), SimError> {
        self.vehicle_mut(id)?.park(at);
        self.recompute_fleet_loads();
        Ok(())
    }

    pub fn telemetry(&self) -> Vec<TelemetryRecord> {
        self.vehicles
            .iter()
            .map(|v| {
                let p = v.position();
                TelemetryRecord {
                    t: self.clock.now_s,
                    vehicle_id: v.id.clone(),
                    lat: p.lat,
                    lon: p.lon,
                    state: v.state,
                    route_hash: v.route().map(|r| format!("{:016x}", r.path_hash())),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{EdgeRecord, GraphFile, NodeId, NodeRecord};

    /// Straight east-west line of nodes 500 m apart, 50 s free-flow each.
    fn line_graph(n: u32) -> Arc<RoadGraph> {
        let base = GeoPoint::new(38.7, -9.2).unwrap();
        let nodes = (0..n)
            .map(|i| {
                let p = base.offset_m(0.0, 500.0 * i as f64);
                NodeRecord { id: NodeId(i), lat: p.lat, lon: p.lon }
            })
            .collect();
        let edges = (0..n - 1)
            .map(|i| EdgeRecord {
                from: NodeId(i),
                to: NodeId(i + 1),
                length_m: 500.0,
                t0_s: 50.0,
                capacity_vph: 1000.0,
                oneway: false,
            })
            .collect();
        Arc::new(RoadGraph::from_file(GraphFile { nodes, edges }).unwrap())
    }

    fn route(g: &RoadGraph, t: &TrafficState, ids: &[u32]) -> CandidateRoute {
        let path: Vec<NodeId> = ids.iter().map(|&i| NodeId(i)).collect();
        CandidateRoute::from_node_path(g, t, VehicleId::new("bus-1"), 0, &path).unwrap()
    }

    fn sim_with(g: Arc<RoadGraph>) -> Simulator {
        let t = TrafficState::free_flow(&g);
        let v = SimVehicle::new(VehicleId::new("bus-1"), LineTag::new("red"), g.point(0));
        Simulator::new(g, t, vec![v], SimClock::new(0.0, 1.0))
    }

    #[test]
    fn idle_vehicle_does_not_move() {
        let mut sim = sim_with(line_graph(3));
        let before = sim.vehicles[0].position();
        sim.step();
        assert_eq!(sim.vehicles[0].position(), before);
        assert_eq!(sim.vehicles[0].state, VehicleState::Idle);
        assert_eq!(sim.clock.now_s, 1.0);
    }

    #[test]
    fn arrival_clamps_progress() {
        let mut sim = sim_with(line_graph(2));
        let r = route(&sim.graph, &sim.traffic, &[0, 1]);
        sim.start_vehicle(&VehicleId::new("bus-1"), r).unwrap();
        let v = &mut sim.vehicles[0];
        let total = v.route_length_m();
        v.progress_m = total - 10.0;
        v.speed_mps = 20.0;
        sim.step();
        let v = &sim.vehicles[0];
        assert_eq!(v.state, VehicleState::Arrived);
        assert_eq!(v.progress_m(), total);
        // arrival releases the fleet load
        assert!(v.remaining_links().is_empty());
        sim.step();
        assert_eq!(sim.vehicles[0].state, VehicleState::Arrived);
    }

    #[test]
    fn two_half_ticks_equal_one_full_tick() {
        let g = line_graph(2);
        let t = TrafficState::free_flow(&g);
        let r = route(&g, &t, &[0, 1]);
        let mut a = SimVehicle::new(VehicleId::new("a"), LineTag::new("red"), g.point(0));
        a.start(r.clone(), &t);
        let mut b = a.clone();
        a.advance(3.0, &t);
        a.advance(3.0, &t);
        b.advance(6.0, &t);
        assert!((a.progress_m() - b.progress_m()).abs() < 1e-9);
    }

    #[test]
    fn crossing_edges_uses_each_edge_speed() {
        let mut sim = sim_with(line_graph(3));
        let r = route(&sim.graph, &sim.traffic, &[0, 1, 2]);
        let total = {
            let c = cumulative_lengths(&r.polyline);
            *c.last().unwrap()
        };
        sim.start_vehicle(&VehicleId::new("bus-1"), r).unwrap();
        // the bus's own load slows the second edge a hair past 50 s
        for _ in 0..100 {
            sim.step();
        }
        assert_eq!(sim.vehicles[0].state, VehicleState::EnRoute);
        sim.step();
        assert_eq!(sim.vehicles[0].state, VehicleState::Arrived);
        assert!((sim.vehicles[0].progress_m() - total).abs() < 1e-9);
    }

    #[test]
    fn position_stays_on_polyline() {
        let mut sim = sim_with(line_graph(4));
        let r = route(&sim.graph, &sim.traffic, &[0, 1, 2, 3]);
        let poly = r.polyline.clone();
        let cum = cumulative_lengths(&poly);
        sim.start_vehicle(&VehicleId::new("bus-1"), r).unwrap();
        for _ in 0..160 {
            sim.step();
            let p = sim.vehicles[0].position();
            assert!(nearest_on_polyline(&poly, &cum, &p).distance < 1e-3);
        }
    }

    #[test]
    fn fleet_load_tracks_remaining_links() {
        let mut sim = sim_with(line_graph(3));
        let r = route(&sim.graph, &sim.traffic, &[0, 1, 2]);
        let links = r.links.clone();
        sim.start_vehicle(&VehicleId::new("bus-1"), r).unwrap();
        assert_eq!(sim.traffic.fleet_load(links[0]), 1);
        assert_eq!(sim.traffic.fleet_load(links[1]), 1);
        assert!(sim.traffic.congested_time(links[0]) > 50.0);
        for _ in 0..55 {
            sim.step();
        }
        assert_eq!(sim.traffic.fleet_load(links[0]), 0);
        assert_eq!(sim.traffic.fleet_load(links[1]), 1);
    }

    #[test]
    fn reassign_identical_route_keeps_progress() {
        let mut sim = sim_with(line_graph(3));
        let r = route(&sim.graph, &sim.traffic, &[0, 1, 2]);
        sim.start_vehicle(&VehicleId::new("bus-1"), r.clone()).unwrap();
        for _ in 0..30 {
            sim.step();
        }
        let (p, pos) = (sim.vehicles[0].progress_m(), sim.vehicles[0].position());
        sim.reassign(&VehicleId::new("bus-1"), r, None).unwrap();
        assert_eq!(sim.vehicles[0].progress_m(), p);
        assert_eq!(sim.vehicles[0].position(), pos);
    }

    #[test]
    fn reassign_from_current_position_starts_at_zero() {
        let mut sim = sim_with(line_graph(4));
        let r = route(&sim.graph, &sim.traffic, &[0, 1, 2, 3]);
        sim.start_vehicle(&VehicleId::new("bus-1"), r).unwrap();
        for _ in 0..50 {
            sim.step();
        }
        // the vehicle sits on node 1 after exactly one 50 s edge
        let fresh = route(&sim.graph, &sim.traffic, &[1, 2, 3]);
        sim.reassign(&VehicleId::new("bus-1"), fresh, None).unwrap();
        assert!(sim.vehicles[0].progress_m() < 1e-6);
    }

    #[test]
    fn reassign_far_away_is_discontinuous() {
        let g = line_graph(6);
        let mut sim = sim_with(Arc::clone(&g));
        let r = route(&g, &sim.traffic, &[0, 1]);
        sim.start_vehicle(&VehicleId::new("bus-1"), r).unwrap();
        // starts 2 km east of the vehicle
        let far = route(&g, &sim.traffic, &[4, 5]);
        let err = sim.reassign(&VehicleId::new("bus-1"), far, None).unwrap_err();
        match err {
            SimError::RouteDiscontinuity { distance_m } => assert!((distance_m - 2000.0).abs() < 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
