//! The traffic-flow QUBO: one binary variable per (vehicle, candidate
//! route), a cost for every geometry point shared by two or more candidates,
//! and a one-hot penalty per vehicle.

mod bqm;
mod overlap;
mod wire;

pub use bqm::{BinaryQuadraticModel, CompiledBqm};
pub use overlap::{build_overlap_index, OverlapIndex, SharedPoint, POINT_MATCH_RADIUS_M};
pub use wire::{BqmWire, VarEntry};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::VehicleId;
use crate::routing::CandidateRoute;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuboError {
    #[error("no candidate routes supplied")]
    EmptyFleet,
    #[error("penalty weight must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("coefficient is not finite")]
    NonFiniteCoefficient,
    #[error("invalid quadratic pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("malformed model: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// `cost(p) = (Σ_{q∈B(p)} q)²`, coupling every pair of routes through p.
    #[default]
    SquaredSum,
    /// `cost(p) = Σ_{q∈B(p)} q²`, which reduces to a linear term.
    LinearSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Routes share a point iff they traverse the same graph node.
    #[default]
    GraphNode,
    /// Routes share a point iff their densified polylines come within
    /// [`POINT_MATCH_RADIUS_M`] of each other.
    ResampledPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuboConfig {
    /// Penalty weight; `None` selects [`default_lambda`].
    pub lambda: Option<f64>,
    pub cost_mode: CostMode,
    pub granularity: Granularity,
}

/// Bijection between variable indices and (vehicle, route index) pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VariableMap {
    entries: Vec<(VehicleId, usize)>,
    lookup: HashMap<(VehicleId, usize), usize>,
}

impl VariableMap {
    pub fn from_entries(entries: Vec<(VehicleId, usize)>) -> Result<Self, QuboError> {
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if lookup.insert(e.clone(), i).is_some() {
                return Err(QuboError::Malformed(format!("duplicate variable {} route {}", e.0, e.1)));
            }
        }
        Ok(Self { entries, lookup })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, index: usize) -> &(VehicleId, usize) {
        &self.entries[index]
    }

    pub fn entries(&self) -> &[(VehicleId, usize)] {
        &self.entries
    }

    pub fn index_of(&self, vehicle: &VehicleId, route_index: usize) -> Option<usize> {
        self.lookup.get(&(vehicle.clone(), route_index)).copied()
    }

    /// Variable indices per vehicle, vehicles in id order.
    pub fn groups(&self) -> BTreeMap<VehicleId, Vec<usize>> {
        let mut out: BTreeMap<VehicleId, Vec<usize>> = BTreeMap::new();
        for (i, (v, _)) in self.entries.iter().enumerate() {
            out.entry(v.clone()).or_default().push(i);
        }
        out
    }
}

/// Everything produced by [`build_tfo_qubo`].
#[derive(Debug, Clone, PartialEq)]
pub struct TfoProblem {
    pub bqm: BinaryQuadraticModel,
    pub varmap: VariableMap,
    pub overlap: OverlapIndex,
    pub lambda: f64,
    /// The input routes in variable order.
    pub routes: Vec<CandidateRoute>,
}

/// `1 + Σ_p |B(p)|²`, strictly larger than the overlap cost of any
/// assignment, so every one-hot violation costs more than it can save.
pub fn default_lambda(overlap: &OverlapIndex) -> f64 {
    1.0 + overlap.iter().map(|(_, b)| (b.len() * b.len()) as f64).sum::<f64>()
}

/// Orders routes by vehicle id, then ascending travel time.
fn variable_order(routes: &[CandidateRoute]) -> Vec<CandidateRoute> {
    let mut sorted = routes.to_vec();
    sorted.sort_by(|a, b| {
        a.vehicle_id
            .cmp(&b.vehicle_id)
            .then(a.expected_travel_time_s.total_cmp(&b.expected_travel_time_s))
            .then(a.route_index.cmp(&b.route_index))
    });
    sorted
}

pub fn build_tfo_qubo(routes: &[CandidateRoute], config: &QuboConfig) -> Result<TfoProblem, QuboError> {
    if routes.is_empty() {
        return Err(QuboError::EmptyFleet);
    }
    let routes = variable_order(routes);
    let varmap =
        VariableMap::from_entries(routes.iter().map(|r| (r.vehicle_id.clone(), r.route_index)).collect())?;
    let overlap = build_overlap_index(&routes, config.granularity);
    let lambda = match config.lambda {
        Some(l) if l.is_finite() && l > 0.0 => l,
        Some(l) => return Err(QuboError::InvalidLambda(l)),
        None => default_lambda(&overlap),
    };

    let mut bqm = BinaryQuadraticModel::new(varmap.len());
    for (_, members) in overlap.iter() {
        for (a, &i) in members.iter().enumerate() {
            bqm.add_linear(i, 1.0);
            if config.cost_mode == CostMode::SquaredSum {
                for &j in &members[a + 1..] {
                    bqm.add_quadratic(i, j, 2.0);
                }
            }
        }
    }
    // λ (Σ_j q_ij − 1)² = λ (1 − Σ_j q_ij + 2 Σ_{j<k} q_ij q_ik)
    for (_, vars) in varmap.groups() {
        bqm.add_offset(lambda);
        for (a, &i) in vars.iter().enumerate() {
            bqm.add_linear(i, -lambda);
            for &j in &vars[a + 1..] {
                bqm.add_quadratic(i, j, 2.0 * lambda);
            }
        }
    }
    bqm.validate()?;
    Ok(TfoProblem { bqm, varmap, overlap, lambda, routes })
}

/// Route choice per vehicle decoded from a solver sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub routes: BTreeMap<VehicleId, usize>,
    pub energy: f64,
    pub feasible: bool,
}

pub fn decode_solution(sample: &[u8], varmap: &VariableMap, bqm: &BinaryQuadraticModel) -> Assignment {
    assert_eq!(sample.len(), varmap.len(), "sample length must equal the variable count");
    let mut routes = BTreeMap::new();
    let mut feasible = true;
    for (vehicle, vars) in varmap.groups() {
        let set: Vec<usize> = vars.into_iter().filter(|&i| sample[i] != 0).collect();
        if set.len() == 1 {
            routes.insert(vehicle, varmap.entry(set[0]).1);
        } else {
            feasible = false;
        }
    }
    if !feasible {
        routes.clear();
    }
    Assignment { routes, energy: bqm.energy(sample), feasible }
}
