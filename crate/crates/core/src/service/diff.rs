use serde::{Deserialize, Serialize};

use crate::routing::CandidateRoute;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDiff {
    pub changed: bool,
    /// `next`, which already starts at the projected origin, so nothing
    /// behind the vehicle remains.
    pub trimmed: CandidateRoute,
}

/// Compares a new route starting at the projected origin against the
/// previous one. The route is unchanged when the new node path is exactly
/// what remains of the previous path from that origin on.
pub fn diff_routes(previous: &CandidateRoute, next: &CandidateRoute) -> RouteDiff {
    RouteDiff { changed: !is_continuation(previous, next), trimmed: next.clone() }
}

/// `true` if `next`'s node path is a suffix of `previous`'s.
pub fn is_continuation(previous: &CandidateRoute, next: &CandidateRoute) -> bool {
    let (p, n) = (&previous.node_path, &next.node_path);
    n.len() <= p.len() && p[p.len() - n.len()..] == n[..]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::VehicleId;
    use crate::routing::{LinkId, NodeId};

    fn r(nodes: &[u32]) -> CandidateRoute {
        CandidateRoute {
            vehicle_id: VehicleId::new("bus-1"),
            route_index: 0,
            node_path: nodes.iter().map(|&n| NodeId(n)).collect(),
            links: (0..nodes.len() - 1).map(LinkId).collect(),
            polyline: vec![],
            expected_travel_time_s: 0.0,
        }
    }

    #[test]
    fn identical() {
        assert!(!diff_routes(&r(&[1, 2, 3, 4]), &r(&[1, 2, 3, 4])).changed);
    }

    #[test]
    fn remaining_suffix_is_unchanged() {
        let d = diff_routes(&r(&[1, 2, 3, 4, 5]), &r(&[3, 4, 5]));
        assert!(!d.changed);
        assert_eq!(d.trimmed.node_path, r(&[1, 2, 3, 4, 5]).node_path[2..]);
    }

    #[test]
    fn different_path() {
        assert!(diff_routes(&r(&[1, 2, 3, 5]), &r(&[2, 4, 5])).changed);
        assert!(diff_routes(&r(&[1, 2, 3]), &r(&[1, 2, 3, 4])).changed);
        assert!(diff_routes(&r(&[1, 2, 3]), &r(&[0, 1, 2, 3])).changed);
    }
}
