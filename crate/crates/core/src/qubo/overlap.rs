use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::Granularity;
use crate::geo::{haversine_distance, resample_polyline, GeoPoint, DEFAULT_RESAMPLE_SPACING_M};
use crate::routing::{CandidateRoute, NodeId};

/// Two densified points closer than this are the same shared point.
pub const POINT_MATCH_RADIUS_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SharedPoint {
    Node(NodeId),
    /// Cluster of coincident polyline samples, numbered in discovery order.
    Sample(usize),
}

/// Shared points and, for each, the variables whose routes contain it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlapIndex {
    entries: Vec<(SharedPoint, Vec<usize>)>,
}

impl OverlapIndex {
    /// Keeps only sets with at least two members; members are sorted.
    pub fn from_sets(sets: impl IntoIterator<Item = (SharedPoint, Vec<usize>)>) -> Self {
        let mut entries: Vec<(SharedPoint, Vec<usize>)> = sets
            .into_iter()
            .map(|(p, mut b)| {
                b.sort_unstable();
                b.dedup();
                (p, b)
            })
            .filter(|(_, b)| b.len() >= 2)
            .collect();
        entries.sort_by_key(|e| e.0);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SharedPoint, &Vec<usize>)> {
        self.entries.iter().map(|(p, b)| (p, b))
    }

    pub fn get(&self, p: &SharedPoint) -> Option<&[usize]> {
        self.entries.binary_search_by(|e| e.0.cmp(p)).ok().map(|i| self.entries[i].1.as_slice())
    }
}

/// Points contained in at least two of `routes`; variable `i` is `routes[i]`.
pub fn build_overlap_index(routes: &[CandidateRoute], granularity: Granularity) -> OverlapIndex {
    match granularity {
        Granularity::GraphNode => {
            let mut sets: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
            for (i, r) in routes.iter().enumerate() {
                for &n in &r.node_path {
                    sets.entry(n).or_default().insert(i);
                }
            }
            OverlapIndex::from_sets(sets.into_iter().map(|(n, b)| (SharedPoint::Node(n), b.into_iter().collect())))
        }
        Granularity::ResampledPoint => {
            let mut clusters = PointClusters::default();
            let mut sets: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for (i, r) in routes.iter().enumerate() {
                for p in densified(&r.polyline) {
                    sets.entry(clusters.assign(p)).or_default().insert(i);
                }
            }
            OverlapIndex::from_sets(sets.into_iter().map(|(c, b)| (SharedPoint::Sample(c), b.into_iter().collect())))
        }
    }
}

/// Resampled points plus the original shape points, which are where
/// independently produced polylines coincide exactly.
fn densified(polyline: &[GeoPoint]) -> Vec<GeoPoint> {
    let mut pts = polyline.to_vec();
    if let Ok(extra) = resample_polyline(polyline, DEFAULT_RESAMPLE_SPACING_M) {
        pts.extend(extra);
    }
    pts
}

#[derive(Default)]
struct PointClusters {
    reps: Vec<GeoPoint>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl PointClusters {
    // ~1.1 m cells in latitude; longitude cells shrink towards the poles,
    // which only makes the neighbourhood search more generous
    const CELL_DEG: f64 = 1e-5;

    fn cell(p: &GeoPoint) -> (i64, i64) {
        ((p.lat / Self::CELL_DEG).floor() as i64, (p.lon / Self::CELL_DEG).floor() as i64)
    }

    fn assign(&mut self, p: GeoPoint) -> usize {
        let (cy, cx) = Self::cell(&p);
        let mut best: Option<(usize, f64)> = None;
        for dy in -1..=1 {
            for dx in -1..=1 {
                for &c in self.grid.get(&(cy + dy, cx + dx)).into_iter().flatten() {
                    let d = haversine_distance(&self.reps[c], &p);
                    if d < POINT_MATCH_RADIUS_M && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((c, d));
                    }
                }
            }
        }
        if let Some((c, _)) = best {
            return c;
        }
        let id = self.reps.len();
        self.reps.push(p);
        self.grid.entry((cy, cx)).or_default().push(id);
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::VehicleId;
    use crate::routing::LinkId;

    fn route(v: &str, nodes: &[u32]) -> CandidateRoute {
        CandidateRoute {
            vehicle_id: VehicleId::new(v),
            route_index: 0,
            node_path: nodes.iter().map(|&n| NodeId(n)).collect(),
            links: vec![LinkId(0)],
            polyline: vec![],
            expected_travel_time_s: 1.0,
        }
    }

    /// Set-intersection oracle: nodes present in at least two routes.
    fn oracle(routes: &[CandidateRoute]) -> BTreeMap<NodeId, Vec<usize>> {
        let mut all: BTreeSet<NodeId> = BTreeSet::new();
        for r in routes {
            all.extend(r.node_path.iter().copied());
        }
        all.into_iter()
            .filter_map(|n| {
                let b: Vec<usize> =
                    routes.iter().enumerate().filter(|(_, r)| r.node_path.contains(&n)).map(|(i, _)| i).collect();
                (b.len() >= 2).then_some((n, b))
            })
            .collect()
    }

    fn as_map(idx: &OverlapIndex) -> BTreeMap<NodeId, Vec<usize>> {
        idx.iter()
            .map(|(p, b)| match p {
                SharedPoint::Node(n) => (*n, b.clone()),
                SharedPoint::Sample(_) => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn disjoint_routes_share_nothing() {
        let routes = [route("a", &[1, 2, 3]), route("b", &[4, 5, 6])];
        assert!(build_overlap_index(&routes, Granularity::GraphNode).is_empty());
    }

    #[test]
    fn three_node_middle_segment() {
        let routes = [route("a", &[1, 5, 6, 7, 2]), route("b", &[3, 5, 6, 7, 4])];
        let idx = build_overlap_index(&routes, Granularity::GraphNode);
        assert_eq!(idx.len(), 3);
        assert!(idx.iter().all(|(_, b)| b.len() == 2));
        assert_eq!(as_map(&idx), oracle(&routes));
    }

    #[test]
    fn three_routes_through_one_node() {
        let routes = [route("a", &[1, 9, 2]), route("b", &[3, 9, 4]), route("a", &[5, 9, 6])];
        let idx = build_overlap_index(&routes, Granularity::GraphNode);
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.get(&SharedPoint::Node(NodeId(9))), Some(&[0usize, 1, 2][..]));
    }

    #[test]
    fn random_routes_match_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let routes: Vec<CandidateRoute> = (0..n)
                .map(|i| {
                    let len = rng.random_range(2..7);
                    let mut nodes: Vec<u32> = (0..20).collect();
                    for k in 0..len {
                        let j = rng.random_range(k..20);
                        nodes.swap(k, j);
                    }
                    route(&format!("v{i}"), &nodes[..len])
                })
                .collect();
            let idx = build_overlap_index(&routes, Granularity::GraphNode);
            assert_eq!(as_map(&idx), oracle(&routes));
        }
    }

    #[test]
    fn resampled_points_match_shared_geometry() {
        let base = GeoPoint::new(38.72, -9.14).unwrap();
        let shared = [base.offset_m(0.0, 200.0), base.offset_m(0.0, 600.0)];
        let mut a = route("a", &[1, 2, 3, 4]);
        a.polyline = vec![base.offset_m(300.0, 0.0), shared[0], shared[1], base.offset_m(300.0, 800.0)];
        let mut b = route("b", &[5, 6, 7, 8]);
        b.polyline = vec![base.offset_m(-300.0, 0.0), shared[0], shared[1], base.offset_m(-300.0, 800.0)];
        let idx = build_overlap_index(&[a, b], Granularity::ResampledPoint);
        // both shape points plus the samples along the common 400 m stretch
        assert!(idx.len() >= 2, "{}", idx.len());
        assert!(idx.iter().all(|(_, m)| m == &vec![0, 1]));
    }
}
