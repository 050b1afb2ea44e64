//! QUBO solvers behind one trait, plus the fallback wrapper the service uses.
//!
//! Every solver breaks energy ties towards the lexicographically smallest
//! sample so that repeated solves of the same problem agree.

mod anneal;
mod brute;
mod fallback;
mod remote;
mod tabu;

pub use anneal::{AnnealConfig, SimulatedAnnealingSolver};
pub use brute::{BruteForceSolver, MAX_BRUTE_FORCE_VARIABLES};
pub use fallback::{solve_with_fallback, FallbackOutcome};
pub use remote::{
    HttpTransport, InProcessTransport, MockRemote, MockRemoteConfig, RemoteResponse, RemoteSolver,
    RemoteTransport, DEFAULT_MOCK_LATENCY_MS, MOCK_SOLVER_TAG,
};
pub use tabu::{TabuConfig, TabuHybridSolver, MAX_SUBPROBLEM_VARIABLES};

pub(crate) use brute::minimize_subset;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubo::BinaryQuadraticModel;

/// Energies closer than this are treated as ties.
pub const ENERGY_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("{variables} variables exceeds the exact-solver limit of {max}")]
    TooLarge { variables: usize, max: usize },
    #[error("model has no variables")]
    Empty,
    #[error("solver did not answer within {0:?}")]
    Timeout(Duration),
    #[error("remote solver failed: {0}")]
    Remote(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRequest {
    pub bqm: BinaryQuadraticModel,
    pub budget: Duration,
    pub seed: u64,
    /// Optional warm start for the local-search solvers.
    pub initial: Option<Vec<u8>>,
}

impl SolveRequest {
    pub fn new(bqm: BinaryQuadraticModel, budget_ms: u64, seed: u64) -> Self {
        Self { bqm, budget: Duration::from_millis(budget_ms), seed, initial: None }
    }

    pub fn with_initial(mut self, x: Vec<u8>) -> Self {
        self.initial = Some(x);
        self
    }

    fn check(&self) -> Result<(), SolveError> {
        if self.budget.is_zero() {
            return Err(SolveError::InvalidRequest("time budget must be positive".into()));
        }
        if self.bqm.num_variables() == 0 {
            return Err(SolveError::Empty);
        }
        if let Some(x) = &self.initial {
            if x.len() != self.bqm.num_variables() || x.iter().any(|&b| b > 1) {
                return Err(SolveError::InvalidRequest("initial sample does not match the model".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub sample: Vec<u8>,
    pub energy: f64,
    pub samples_evaluated: u64,
    pub wall_time_ms: f64,
    pub solver: String,
}

pub trait Solver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, req: &SolveRequest) -> Result<SolveResult, SolveError>;
}

/// Selector used by the CLI and configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Brute,
    Sa,
    Tabu,
    Remote,
}

impl std::str::FromStr for SolverKind {
    type Err = SolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute" => Ok(Self::Brute),
            "sa" => Ok(Self::Sa),
            "tabu" => Ok(Self::Tabu),
            "remote" => Ok(Self::Remote),
            other => Err(SolveError::InvalidRequest(format!("unknown solver {other:?}"))),
        }
    }
}

impl SolverKind {
    /// The solver with default settings; `Remote` is the in-process mock
    /// with its default latency and no injected failures.
    pub fn build(self, timeout: Duration) -> std::sync::Arc<dyn Solver> {
        use std::sync::Arc;
        match self {
            Self::Brute => Arc::new(BruteForceSolver),
            Self::Sa => Arc::new(SimulatedAnnealingSolver::default()),
            Self::Tabu => Arc::new(TabuHybridSolver::default()),
            Self::Remote => Arc::new(RemoteSolver::mock(MockRemoteConfig::default(), timeout)),
        }
    }
}

/// `true` when `(e, x)` should replace the incumbent `(best_e, best_x)`.
pub(crate) fn improves(e: f64, x: &[u8], best_e: f64, best_x: &[u8]) -> bool {
    e < best_e - ENERGY_TIE_EPS || ((e - best_e).abs() <= ENERGY_TIE_EPS && x < best_x)
}

pub(crate) struct Deadline {
    start: Instant,
    end: Instant,
}

impl Deadline {
    pub fn new(budget: Duration) -> Self {
        let start = Instant::now();
        Self { start, end: start + budget }
    }

    pub fn expired(&self) -> bool {
        Instant::now() >= self.end
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }
}
