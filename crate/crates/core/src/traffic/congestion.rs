use serde::{Deserialize, Serialize};

use crate::routing::{Link, LinkId, RoadGraph};

/// BPR volume-delay curve, with fleet vehicles counted as `fleet_weight`
/// vehicles/hour each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionModel {
    pub alpha: f64,
    pub beta: f64,
    pub fleet_weight: f64,
}

impl Default for CongestionModel {
    fn default() -> Self {
        Self { alpha: 0.15, beta: 4.0, fleet_weight: 50.0 }
    }
}

impl CongestionModel {
    pub fn congested_edge_time(&self, link: &Link, background_vph: f64, fleet: u32) -> f64 {
        let volume = background_vph.max(0.0) + self.fleet_weight * fleet as f64;
        let ratio = volume / link.capacity_vph;
        link.free_flow_s * (1.0 + self.alpha * ratio.powf(self.beta))
    }
}

/// Per-link loads and the congested travel times they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    model: CongestionModel,
    background: Vec<f64>,
    fleet: Vec<u32>,
    congested: Vec<f64>,
}

impl TrafficState {
    /// Zero-load state: every link at free-flow time.
    pub fn free_flow(graph: &RoadGraph) -> Self {
        Self::new(graph, CongestionModel::default())
    }

    pub fn new(graph: &RoadGraph, model: CongestionModel) -> Self {
        let n = graph.links().len();
        let mut s = Self { model, background: vec![0.0; n], fleet: vec![0; n], congested: vec![0.0; n] };
        s.recompute(graph);
        s
    }

    pub fn model(&self) -> &CongestionModel {
        &self.model
    }

    /// Sets every link's background load to `ratio` times its capacity.
    pub fn set_background_ratio(&mut self, graph: &RoadGraph, ratio: f64) {
        for (bg, link) in self.background.iter_mut().zip(graph.links()) {
            *bg = ratio.max(0.0) * link.capacity_vph;
        }
        self.recompute(graph);
    }

    pub fn set_background(&mut self, graph: &RoadGraph, link: LinkId, vph: f64) {
        self.background[link.0] = vph.max(0.0);
        self.recompute_link(graph, link);
    }

    pub fn set_fleet_loads(&mut self, graph: &RoadGraph, loads: Vec<u32>) {
        assert_eq!(loads.len(), self.fleet.len(), "fleet load vector length");
        self.fleet = loads;
        self.recompute(graph);
    }

    /// Adds `delta` fleet vehicles to a link, saturating at zero.
    pub fn adjust_fleet(&mut self, graph: &RoadGraph, link: LinkId, delta: i64) {
        let v = (self.fleet[link.0] as i64 + delta).max(0);
        self.fleet[link.0] = v as u32;
        self.recompute_link(graph, link);
    }

    pub fn background(&self, link: LinkId) -> f64 {
        self.background[link.0]
    }

    pub fn fleet_load(&self, link: LinkId) -> u32 {
        self.fleet[link.0]
    }

    pub fn congested_time(&self, link: LinkId) -> f64 {
        self.congested[link.0]
    }

    pub fn link_count(&self) -> usize {
        self.congested.len()
    }

    fn recompute_link(&mut self, graph: &RoadGraph, link: LinkId) {
        self.congested[link.0] =
            self.model.congested_edge_time(graph.link(link), self.background[link.0], self.fleet[link.0]);
    }

    fn recompute(&mut self, graph: &RoadGraph) {
        for i in 0..self.congested.len() {
            self.recompute_link(graph, LinkId(i));
        }
    }
}
