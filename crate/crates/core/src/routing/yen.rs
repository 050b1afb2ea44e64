//! Yen's k-shortest loopless paths over link weights.
//!
//! Nodes marked as blocked are never entered, which yields exactly the
//! paths that a full enumeration would produce after discarding every path
//! touching a blocked node, in the same order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use super::{LinkId, RoadGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub nodes: Vec<usize>,
    pub links: Vec<LinkId>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Ranked(WeightedPath);

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .cost
            .total_cmp(&other.0.cost)
            .then_with(|| self.0.nodes.len().cmp(&other.0.nodes.len()))
            .then_with(|| self.0.nodes.cmp(&other.0.nodes))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, ties broken by node index
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn path_cost(links: &[LinkId], weight: &impl Fn(LinkId) -> f64) -> f64 {
    links.iter().map(|&l| weight(l)).sum()
}

fn dijkstra(
    graph: &RoadGraph,
    source: usize,
    target: usize,
    weight: &impl Fn(LinkId) -> f64,
    banned_nodes: &[bool],
    banned_links: &HashSet<LinkId>,
) -> Option<(Vec<usize>, Vec<LinkId>)> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut via: Vec<Option<LinkId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier { cost: 0.0, node: source });
    while let Some(Frontier { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        if node == target {
            break;
        }
        for &l in graph.outgoing(node) {
            if banned_links.contains(&l) {
                continue;
            }
            let next = graph.link(l).to;
            if banned_nodes[next] {
                continue;
            }
            let c = cost + weight(l);
            if c < dist[next] {
                dist[next] = c;
                via[next] = Some(l);
                heap.push(Frontier { cost: c, node: next });
            }
        }
    }
    if !dist[target].is_finite() {
        return None;
    }
    let mut nodes = vec![target];
    let mut links = Vec::new();
    let mut cur = target;
    while cur != source {
        let l = via[cur]?;
        links.push(l);
        cur = graph.link(l).from;
        nodes.push(cur);
    }
    nodes.reverse();
    links.reverse();
    Some((nodes, links))
}

/// Up to `k` loopless paths from `source` to `target`, cheapest first.
///
/// `blocked[i]` excludes node `i` from every path; if the source or target
/// is blocked nothing is returned.
pub fn k_shortest_paths(
    graph: &RoadGraph,
    source: usize,
    target: usize,
    k: usize,
    weight: impl Fn(LinkId) -> f64,
    blocked: &[bool],
) -> Vec<WeightedPath> {
    if k == 0 || source == target || blocked[source] || blocked[target] {
        return Vec::new();
    }
    let none = HashSet::new();
    let Some((nodes, links)) = dijkstra(graph, source, target, &weight, blocked, &none) else {
        return Vec::new();
    };
    let cost = path_cost(&links, &weight);
    let mut accepted = vec![WeightedPath { nodes, links, cost }];
    let mut candidates: BTreeSet<Ranked> = BTreeSet::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::from([accepted[0].nodes.clone()]);

    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        for i in 0..last.nodes.len() - 1 {
            let spur = last.nodes[i];
            let root_nodes = &last.nodes[..=i];
            let mut banned_links = HashSet::new();
            for p in &accepted {
                if p.nodes.len() > i + 1 && p.nodes[..=i] == *root_nodes {
                    banned_links.insert(p.links[i]);
                }
            }
            let mut banned_nodes = blocked.to_vec();
            for &n in &root_nodes[..i] {
                banned_nodes[n] = true;
            }
            if let Some((spur_nodes, spur_links)) =
                dijkstra(graph, spur, target, &weight, &banned_nodes, &banned_links)
            {
                let mut nodes = root_nodes[..i].to_vec();
                nodes.extend(spur_nodes);
                if seen.contains(&nodes) {
                    continue;
                }
                let mut links = last.links[..i].to_vec();
                links.extend(spur_links);
                let cost = path_cost(&links, &weight);
                seen.insert(nodes.clone());
                candidates.insert(Ranked(WeightedPath { nodes, links, cost }));
            }
        }
        match candidates.pop_first() {
            Some(Ranked(p)) => accepted.push(p),
            None => break,
        }
    }
    accepted
}
