#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qshuttle::geo::{haversine_distance, GeoPoint};
use qshuttle::ids::{LineTag, VehicleId};
use qshuttle::routing::{CandidateRoute, EdgeRecord, GraphFile, NodeId, NodeRecord, RoadGraph};
use qshuttle::service::{FleetService, LineSpec, ServiceConfig};
use qshuttle::solver::Solver;

pub const BASE: GeoPoint = GeoPoint { lat: 38.72, lon: -9.14 };

pub struct Net {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl Net {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), edges: Vec::new() }
    }

    /// Node `east_m`, `north_m` from [`BASE`].
    pub fn node(&mut self, east_m: f64, north_m: f64) -> NodeId {
        let p = BASE.offset_m(north_m, east_m);
        let id = NodeId(self.nodes.len() as u32 + 1);
        self.nodes.push(NodeRecord { id, lat: p.lat, lon: p.lon });
        id
    }

    pub fn point(&self, id: NodeId) -> GeoPoint {
        let n = &self.nodes[id.0 as usize - 1];
        GeoPoint { lat: n.lat, lon: n.lon }
    }

    pub fn road(&mut self, a: NodeId, b: NodeId, speed_mps: f64) {
        let length_m = haversine_distance(&self.point(a), &self.point(b));
        self.edges.push(EdgeRecord { from: a, to: b, length_m, t0_s: length_m / speed_mps, capacity_vph: 1800.0, oneway: false });
    }

    pub fn chain(&mut self, nodes: &[NodeId], speed_mps: f64) {
        for w in nodes.windows(2) {
            self.road(w[0], w[1], speed_mps);
        }
    }

    pub fn graph(&self) -> RoadGraph {
        RoadGraph::from_file(GraphFile { nodes: self.nodes.clone(), edges: self.edges.clone() }).unwrap()
    }
}

/// Two roads from `o` to `d`, 3 km apart: the straight one through `a1, a2`
/// and one bowed 300 m north through `b1, b2`. The bowed road's speed sets
/// how much slower it is.
pub struct TwoRoads {
    pub net: Net,
    pub o: NodeId,
    pub d: NodeId,
    pub a: [NodeId; 2],
    pub b: [NodeId; 2],
}

pub fn two_roads(bowed_speed_mps: f64) -> TwoRoads {
    let mut net = Net::new();
    let o = net.node(0.0, 0.0);
    let a1 = net.node(1000.0, 0.0);
    let a2 = net.node(2000.0, 0.0);
    let d = net.node(3000.0, 0.0);
    let b1 = net.node(1000.0, 300.0);
    let b2 = net.node(2000.0, 300.0);
    net.chain(&[o, a1, a2, d], 15.0);
    net.chain(&[o, b1, b2, d], bowed_speed_mps);
    TwoRoads { net, o, d, a: [a1, a2], b: [b1, b2] }
}

impl TwoRoads {
    pub fn line(&self) -> LineSpec {
        LineSpec { tag: LineTag::new("red"), origin: self.net.point(self.o), destination: self.net.point(self.d) }
    }

    pub fn service(&self, vehicles: &[&str], config: ServiceConfig, solver: Arc<dyn Solver>) -> FleetService {
        FleetService::new(
            Arc::new(self.net.graph()),
            vec![self.line()],
            vehicles.iter().map(|v| VehicleId::new(*v)).collect(),
            config,
            solver,
        )
        .unwrap()
    }
}

pub fn vid(s: &str) -> VehicleId {
    VehicleId::new(s)
}

pub fn red() -> LineTag {
    LineTag::new("red")
}

/// Synthetic candidate route over abstract node ids; only the node path
/// and travel time matter to the QUBO.
pub fn synthetic_route(vehicle: &str, index: usize, nodes: &[u32], travel_time_s: f64) -> CandidateRoute {
    CandidateRoute {
        vehicle_id: VehicleId::new(vehicle),
        route_index: index,
        node_path: nodes.iter().map(|&n| NodeId(n)).collect(),
        links: Vec::new(),
        polyline: nodes.iter().map(|&n| BASE.offset_m(0.0, 100.0 * n as f64)).collect(),
        expected_travel_time_s: travel_time_s,
    }
}

/// Random fleet with at most `max_vars` routes in total, drawn over a
/// small node pool so that overlaps are common.
pub fn random_fleet(rng: &mut impl Rng, max_vars: usize) -> Vec<CandidateRoute> {
    let pool = rng.random_range(4..=14u32);
    let mut routes = Vec::new();
    let mut v = 0;
    while routes.len() < max_vars {
        let k = rng.random_range(1..=3usize).min(max_vars - routes.len());
        for j in 0..k {
            let len = rng.random_range(1..=5usize);
            let mut nodes: Vec<u32> = (0..pool).collect();
            nodes.shuffle(rng);
            nodes.truncate(len);
            routes.push(synthetic_route(&format!("v{v:02}"), j, &nodes, 100.0 + 10.0 * j as f64));
        }
        v += 1;
        if rng.random_bool(0.25) {
            break;
        }
    }
    routes
}

/// Vehicles in a line, each with `per_vehicle` routes that share random
/// junction nodes with the routes of both neighbours.
pub fn chained_fleet(seed: u64, vehicles: usize, per_vehicle: usize) -> Vec<CandidateRoute> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let junction = |link: usize, k: u32| 1000 * (link as u32 + 1) + k;
    let mut routes = Vec::new();
    for v in 0..vehicles {
        for j in 0..per_vehicle {
            let mut nodes = vec![100_000 + (v * per_vehicle + j) as u32];
            for link in [v.wrapping_sub(1), v] {
                if link >= vehicles - 1 {
                    continue;
                }
                nodes.extend((0..4).filter(|_| rng.random_bool(0.5)).map(|k| junction(link, k)));
            }
            routes.push(synthetic_route(&format!("v{v:02}"), j, &nodes, 100.0 + j as f64));
        }
    }
    routes
}

/// Direct objective: squared usage of every point shared by two or more
/// routes, plus λ times the squared one-route-per-vehicle violation.
/// `routes[i]` is the route behind variable `i`.
pub fn direct_objective(routes: &[CandidateRoute], lambda: f64, sample: &[u8]) -> f64 {
    let mut containing: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, r) in routes.iter().enumerate() {
        for n in r.node_path.iter().collect::<BTreeSet<_>>() {
            containing.entry(*n).or_default().push(i);
        }
    }
    let overlap: f64 = containing
        .values()
        .filter(|b| b.len() >= 2)
        .map(|b| b.iter().map(|&i| sample[i] as f64).sum::<f64>().powi(2))
        .sum();
    let mut per_vehicle: BTreeMap<&VehicleId, f64> = BTreeMap::new();
    for (i, r) in routes.iter().enumerate() {
        *per_vehicle.entry(&r.vehicle_id).or_default() += sample[i] as f64;
    }
    overlap + lambda * per_vehicle.values().map(|s| (s - 1.0).powi(2)).sum::<f64>()
}

/// Every binary vector of length `n`, in lexicographic order.
pub fn all_samples(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0u64..1 << n).map(move |m| (0..n).map(|i| ((m >> (n - 1 - i)) & 1) as u8).collect())
}

pub fn random_sample(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..=1u8)).collect()
}
