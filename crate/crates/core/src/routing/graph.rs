use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::RoutingError;
use crate::geo::{haversine_distance, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a directed link in [`RoadGraph::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

/// An edge as it appears in the scenario file. Two-way edges expand into two
/// directed links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub t0_s: f64,
    pub capacity_vph: f64,
    #[serde(default)]
    pub oneway: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub length_m: f64,
    pub free_flow_s: f64,
    pub capacity_vph: f64,
}

/// Directed road network with node coordinates.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    ids: Vec<NodeId>,
    points: Vec<GeoPoint>,
    index: HashMap<NodeId, usize>,
    links: Vec<Link>,
    outgoing: Vec<Vec<LinkId>>,
    source: GraphFile,
}

impl RoadGraph {
    pub fn from_file(file: GraphFile) -> Result<Self, RoutingError> {
        let mut index = HashMap::with_capacity(file.nodes.len());
        let mut ids = Vec::with_capacity(file.nodes.len());
        let mut points = Vec::with_capacity(file.nodes.len());
        for n in &file.nodes {
            let p = GeoPoint::new(n.lat, n.lon).map_err(|e| RoutingError::InvalidGraph(e.to_string()))?;
            if index.insert(n.id, ids.len()).is_some() {
                return Err(RoutingError::InvalidGraph(format!("duplicate node id {}", n.id)));
            }
            ids.push(n.id);
            points.push(p);
        }
        let mut links = Vec::new();
        let mut outgoing = vec![Vec::new(); ids.len()];
        for e in &file.edges {
            let (Some(&from), Some(&to)) = (index.get(&e.from), index.get(&e.to)) else {
                return Err(RoutingError::InvalidGraph(format!(
                    "edge {}->{} references a missing node",
                    e.from, e.to
                )));
            };
            let positive = |v: f64| v.is_finite() && v > 0.0;
            if !(positive(e.length_m) && positive(e.t0_s) && positive(e.capacity_vph)) {
                return Err(RoutingError::InvalidGraph(format!(
                    "edge {}->{} needs positive length, free-flow time and capacity",
                    e.from, e.to
                )));
            }
            if from == to {
                return Err(RoutingError::InvalidGraph(format!("self loop at node {}", e.from)));
            }
            let mut push = |from: usize, to: usize| {
                outgoing[from].push(LinkId(links.len()));
                links.push(Link {
                    from,
                    to,
                    length_m: e.length_m,
                    free_flow_s: e.t0_s,
                    capacity_vph: e.capacity_vph,
                });
            };
            push(from, to);
            if !e.oneway {
                push(to, from);
            }
        }
        Ok(Self { ids, points, index, links, outgoing, source: file })
    }

    pub fn from_json(json: &str) -> Result<Self, RoutingError> {
        let file: GraphFile =
            serde_json::from_str(json).map_err(|e| RoutingError::InvalidGraph(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> &GraphFile {
        &self.source
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn outgoing(&self, node: usize) -> &[LinkId] {
        &self.outgoing[node]
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node_id(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn point(&self, idx: usize) -> GeoPoint {
        self.points[idx]
    }

    pub fn point_of(&self, id: NodeId) -> Option<GeoPoint> {
        self.node_index(id).map(|i| self.points[i])
    }

    /// Directed link from `from` to `to` with the lowest free-flow time.
    pub fn link_between(&self, from: usize, to: usize) -> Option<LinkId> {
        self.outgoing[from]
            .iter()
            .copied()
            .filter(|l| self.links[l.0].to == to)
            .min_by(|a, b| self.links[a.0].free_flow_s.total_cmp(&self.links[b.0].free_flow_s))
    }

    /// Nearest node by haversine distance, returning its index and the distance.
    pub fn nearest_node(&self, p: &GeoPoint) -> Option<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, haversine_distance(p, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Snaps `p` to the nearest node within `radius_m`.
    pub fn snap(&self, p: &GeoPoint, radius_m: f64) -> Result<usize, RoutingError> {
        match self.nearest_node(p) {
            Some((i, d)) if d <= radius_m => Ok(i),
            Some((_, d)) => Err(RoutingError::SnapFailure { distance_m: d }),
            None => Err(RoutingError::SnapFailure { distance_m: f64::INFINITY }),
        }
    }

    fn reachable_from(&self, start: usize, reverse: bool) -> HashSet<usize> {
        let mut incoming: Vec<Vec<usize>> = Vec::new();
        if reverse {
            incoming = vec![Vec::new(); self.ids.len()];
            for l in &self.links {
                incoming[l.to].push(l.from);
            }
        }
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            let next: Vec<usize> = if reverse {
                incoming[n].clone()
            } else {
                self.outgoing[n].iter().map(|l| self.links[l.0].to).collect()
            };
            for m in next {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Checks that every node in `required` can reach every other one.
    pub fn check_strongly_connected(&self, required: &[NodeId]) -> Result<(), RoutingError> {
        let Some(first) = required.first() else { return Ok(()) };
        let root = self
            .node_index(*first)
            .ok_or_else(|| RoutingError::InvalidGraph(format!("unknown node {first}")))?;
        let fwd = self.reachable_from(root, false);
        let bwd = self.reachable_from(root, true);
        for id in required {
            let idx = self
                .node_index(*id)
                .ok_or_else(|| RoutingError::InvalidGraph(format!("unknown node {id}")))?;
            if !fwd.contains(&idx) || !bwd.contains(&idx) {
                return Err(RoutingError::InvalidGraph(format!(
                    "node {id} is not strongly connected to {first}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const JSON: &str = r#"{
        "nodes":[{"id":1,"lat":38.70,"lon":-9.10},{"id":2,"lat":38.701,"lon":-9.10},{"id":3,"lat":38.702,"lon":-9.10}],
        "edges":[{"from":1,"to":2,"length_m":111,"t0_s":10,"capacity_vph":900,"oneway":false},
                 {"from":2,"to":3,"length_m":111,"t0_s":10,"capacity_vph":900,"oneway":true}]
    }"#;

    #[test]
    fn loads_and_expands_two_way_edges() {
        let g = RoadGraph::from_json(JSON).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.links().len(), 3);
        assert!(g.link_between(1, 0).is_some());
        assert!(g.link_between(2, 1).is_none());
    }

    #[test]
    fn rejects_dangling_edges_and_bad_lengths() {
        let bad = JSON.replace(r#""to":3"#, r#""to":9"#);
        assert!(matches!(RoadGraph::from_json(&bad), Err(RoutingError::InvalidGraph(_))));
        let bad = JSON.replace(r#""length_m":111,"t0_s":10,"capacity_vph":900,"oneway":true"#,
            r#""length_m":0,"t0_s":10,"capacity_vph":900,"oneway":true"#);
        assert!(RoadGraph::from_json(&bad).is_err());
    }

    #[test]
    fn connectivity_respects_one_way_links() {
        let g = RoadGraph::from_json(JSON).unwrap();
        assert!(g.check_strongly_connected(&[NodeId(1), NodeId(2)]).is_ok());
        assert!(g.check_strongly_connected(&[NodeId(1), NodeId(3)]).is_err());
    }

    #[test]
    fn snapping_radius() {
        let g = RoadGraph::from_json(JSON).unwrap();
        let near = g.point(0).offset_m(100.0, 0.0);
        assert_eq!(g.snap(&near, 500.0).unwrap(), 1);
        let far = g.point(0).offset_m(-2000.0, 0.0);
        assert!(matches!(g.snap(&far, 500.0), Err(RoutingError::SnapFailure { .. })));
    }
}
