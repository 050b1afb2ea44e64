//! Road network, congestion-aware candidate routes and the time filter.

mod graph;
mod yen;

pub use graph::{EdgeRecord, GraphFile, Link, LinkId, NodeId, NodeRecord, RoadGraph};
pub use yen::{k_shortest_paths, WeightedPath};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{point_in_box, BoundingBox, GeoPoint};
use crate::ids::VehicleId;
use crate::traffic::TrafficState;

pub const DEFAULT_ROUTE_COUNT: usize = 3;
pub const MAX_ROUTE_COUNT: usize = 16;
pub const SNAP_RADIUS_M: f64 = 500.0;
pub const DEFAULT_TIME_SLACK_S: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("no route avoids the active exclusions")]
    NoRouteFound,
    #[error("no road node within the snap radius (nearest is {distance_m:.0} m away)")]
    SnapFailure { distance_m: f64 },
    #[error("route count must be within 1..={MAX_ROUTE_COUNT}, got {0}")]
    InvalidRouteCount(usize),
    #[error("invalid road graph: {0}")]
    InvalidGraph(String),
}

/// One traffic-aware route option for a vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRoute {
    pub vehicle_id: VehicleId,
    pub route_index: usize,
    pub node_path: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub polyline: Vec<GeoPoint>,
    pub expected_travel_time_s: f64,
}

impl CandidateRoute {
    /// Builds a route from a node path, looking up the fastest link between
    /// each consecutive pair and pricing it under `traffic`.
    pub fn from_node_path(
        graph: &RoadGraph,
        traffic: &TrafficState,
        vehicle_id: VehicleId,
        route_index: usize,
        node_path: &[NodeId],
    ) -> Result<Self, RoutingError> {
        if node_path.len() < 2 {
            return Err(RoutingError::NoRouteFound);
        }
        let idx: Vec<usize> = node_path
            .iter()
            .map(|id| graph.node_index(*id).ok_or_else(|| RoutingError::InvalidGraph(format!("unknown node {id}"))))
            .collect::<Result<_, _>>()?;
        let mut links = Vec::with_capacity(idx.len() - 1);
        for w in idx.windows(2) {
            links.push(graph.link_between(w[0], w[1]).ok_or(RoutingError::NoRouteFound)?);
        }
        let path = WeightedPath {
            cost: links.iter().map(|&l| traffic.congested_time(l)).sum(),
            nodes: idx,
            links,
        };
        Ok(Self::from_path(graph, vehicle_id, route_index, path))
    }

    fn from_path(graph: &RoadGraph, vehicle_id: VehicleId, route_index: usize, p: WeightedPath) -> Self {
        Self {
            vehicle_id,
            route_index,
            node_path: p.nodes.iter().map(|&i| graph.node_id(i)).collect(),
            polyline: p.nodes.iter().map(|&i| graph.point(i)).collect(),
            links: p.links,
            expected_travel_time_s: p.cost,
        }
    }

    pub fn length_m(&self, graph: &RoadGraph) -> f64 {
        self.links.iter().map(|&l| graph.link(l).length_m).sum()
    }

    /// Stable fingerprint of the node path, used in telemetry.
    pub fn path_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.node_path.hash(&mut h);
        h.finish()
    }

    pub fn destination(&self) -> NodeId {
        *self.node_path.last().expect("routes have at least two nodes")
    }
}

/// Up to `k` loopless routes from `origin` to `destination`, fastest first
/// under the current congested link times, none of which enters an
/// exclusion box.
pub fn candidate_routes(
    graph: &RoadGraph,
    traffic: &TrafficState,
    vehicle_id: &VehicleId,
    origin: &GeoPoint,
    destination: &GeoPoint,
    k: usize,
    exclusions: &[BoundingBox],
) -> Result<Vec<CandidateRoute>, RoutingError> {
    if !(1..=MAX_ROUTE_COUNT).contains(&k) {
        return Err(RoutingError::InvalidRouteCount(k));
    }
    let src = graph.snap(origin, SNAP_RADIUS_M)?;
    let dst = graph.snap(destination, SNAP_RADIUS_M)?;
    if src == dst {
        return Err(RoutingError::NoRouteFound);
    }
    let blocked: Vec<bool> = (0..graph.node_count())
        .map(|i| exclusions.iter().any(|b| point_in_box(&graph.point(i), b)))
        .collect();
    let paths = k_shortest_paths(graph, src, dst, k, |l| traffic.congested_time(l), &blocked);
    if paths.is_empty() {
        return Err(RoutingError::NoRouteFound);
    }
    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(j, p)| CandidateRoute::from_path(graph, vehicle_id.clone(), j, p))
        .collect())
}

/// Keeps the routes at most `slack_s` slower than the fastest one, in their
/// original order.
pub fn time_filter(routes: Vec<CandidateRoute>, slack_s: f64) -> Vec<CandidateRoute> {
    let Some(fastest) = routes.iter().map(|r| r.expected_travel_time_s).min_by(f64::total_cmp) else {
        return routes;
    };
    routes.into_iter().filter(|r| r.expected_travel_time_s <= fastest + slack_s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::TrafficState;

    /// Diamond: 1 -> {2 (north), 3 (south)} -> 4. The north arm is faster.
    pub(crate) fn diamond() -> RoadGraph {
        let base = GeoPoint::new(38.74, -9.14).unwrap();
        let n = |id: u32, p: GeoPoint| NodeRecord { id: NodeId(id), lat: p.lat, lon: p.lon };
        let e = |from: u32, to: u32, t0: f64| EdgeRecord {
            from: NodeId(from),
            to: NodeId(to),
            length_m: 700.0,
            t0_s: t0,
            capacity_vph: 1000.0,
            oneway: false,
        };
        RoadGraph::from_file(GraphFile {
            nodes: vec![
                n(1, base),
                n(2, base.offset_m(500.0, 500.0)),
                n(3, base.offset_m(-500.0, 500.0)),
                n(4, base.offset_m(0.0, 1000.0)),
            ],
            edges: vec![e(1, 2, 50.0), e(2, 4, 50.0), e(1, 3, 60.0), e(3, 4, 60.0)],
        })
        .unwrap()
    }

    fn vid() -> VehicleId {
        VehicleId::new("bus-1")
    }

    #[test]
    fn diamond_two_paths_fastest_first() {
        let g = diamond();
        let t = TrafficState::free_flow(&g);
        let routes = candidate_routes(&g, &t, &vid(), &g.point(0), &g.point(3), 2, &[]).unwrap();
        let paths: Vec<Vec<u32>> = routes.iter().map(|r| r.node_path.iter().map(|n| n.0).collect()).collect();
        assert_eq!(paths, vec![vec![1, 2, 4], vec![1, 3, 4]]);
        assert_eq!(routes[0].expected_travel_time_s, 100.0);
        assert_eq!(routes[1].expected_travel_time_s, 120.0);
        assert_eq!(routes[1].route_index, 1);
    }

    #[test]
    fn diamond_exclusion_removes_arm() {
        let g = diamond();
        let t = TrafficState::free_flow(&g);
        let bbox = BoundingBox::around(g.point(1), 50.0);
        let routes = candidate_routes(&g, &t, &vid(), &g.point(0), &g.point(3), 2, &[bbox]).unwrap();
        assert_eq!(routes.len(), 1);
        assert_eq!(routes[0].node_path, vec![NodeId(1), NodeId(3), NodeId(4)]);
    }

    #[test]
    fn same_origin_and_destination() {
        let g = diamond();
        let t = TrafficState::free_flow(&g);
        let r = candidate_routes(&g, &t, &vid(), &g.point(0), &g.point(0), 3, &[]);
        assert_eq!(r, Err(RoutingError::NoRouteFound));
    }

    #[test]
    fn everything_excluded() {
        let g = diamond();
        let t = TrafficState::free_flow(&g);
        let boxes = [BoundingBox::around(g.point(1), 50.0), BoundingBox::around(g.point(2), 50.0)];
        let r = candidate_routes(&g, &t, &vid(), &g.point(0), &g.point(3), 3, &boxes);
        assert_eq!(r, Err(RoutingError::NoRouteFound));
    }

    #[test]
    fn far_origin_fails_to_snap() {
        let g = diamond();
        let t = TrafficState::free_flow(&g);
        let far = g.point(0).offset_m(-3000.0, 0.0);
        let r = candidate_routes(&g, &t, &vid(), &far, &g.point(3), 3, &[]);
        assert!(matches!(r, Err(RoutingError::SnapFailure { .. })));
    }

    #[test]
    fn route_count_bounds() {
        let g = diamond();
        let t = TrafficState::free_flow(&g);
        for k in [0, 17] {
            let r = candidate_routes(&g, &t, &vid(), &g.point(0), &g.point(3), k, &[]);
            assert_eq!(r, Err(RoutingError::InvalidRouteCount(k)));
        }
    }

    fn timed(times: &[f64]) -> Vec<CandidateRoute> {
        times
            .iter()
            .enumerate()
            .map(|(j, &t)| CandidateRoute {
                vehicle_id: vid(),
                route_index: j,
                node_path: vec![NodeId(1), NodeId(2)],
                links: vec![LinkId(0)],
                polyline: vec![],
                expected_travel_time_s: t,
            })
            .collect()
    }

    #[test]
    fn time_filter_threshold() {
        let kept = time_filter(timed(&[600.0, 690.0, 780.0]), DEFAULT_TIME_SLACK_S);
        let times: Vec<f64> = kept.iter().map(|r| r.expected_travel_time_s).collect();
        assert_eq!(times, vec![600.0, 690.0]);
        assert_eq!(time_filter(timed(&[900.0]), 120.0).len(), 1);
        // boundary is inclusive
        assert_eq!(time_filter(timed(&[600.0, 720.0]), 120.0).len(), 2);
    }
}
