//! Out-of-process solving over a JSON wire format, plus an in-process mock
//! of the remote service with injectable latency and failures.
//!
//! `POST /solve?seed=S&time_limit_ms=T` with a [`BqmWire`] body answers
//! `{"sample":[0,1,...],"energy":x,"solver":"mock-hss"}`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SolveError, SolveRequest, SolveResult, Solver, TabuHybridSolver};
use crate::qubo::BqmWire;

pub const DEFAULT_MOCK_LATENCY_MS: u64 = 300;
pub const MOCK_SOLVER_TAG: &str = "mock-hss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub sample: Vec<u8>,
    pub energy: f64,
    pub solver: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockRemoteConfig {
    pub latency_ms: u64,
    /// Probability in `[0, 1]` that a call fails after its latency.
    pub failure_rate: f64,
    /// Seeds the failure draws so a run is reproducible.
    pub failure_seed: u64,
}

impl Default for MockRemoteConfig {
    fn default() -> Self {
        Self { latency_ms: DEFAULT_MOCK_LATENCY_MS, failure_rate: 0.0, failure_seed: 0 }
    }
}

/// Stand-in for a hosted hybrid solver. Sleeps, maybe fails, then runs the
/// tabu hybrid on the decoded model.
#[derive(Debug)]
pub struct MockRemote {
    config: MockRemoteConfig,
    solver: TabuHybridSolver,
    failures: Mutex<ChaCha8Rng>,
}

impl MockRemote {
    pub fn new(config: MockRemoteConfig) -> Self {
        Self {
            failures: Mutex::new(ChaCha8Rng::seed_from_u64(config.failure_seed)),
            config,
            solver: TabuHybridSolver::default(),
        }
    }

    pub fn config(&self) -> MockRemoteConfig {
        self.config
    }

    /// Serves one request. `cancel` cuts the artificial latency short.
    pub fn handle(
        &self,
        wire: &BqmWire,
        seed: u64,
        time_limit_ms: u64,
        cancel: &AtomicBool,
    ) -> Result<RemoteResponse, String> {
        let fail = {
            let mut rng = self.failures.lock().unwrap_or_else(|e| e.into_inner());
            rng.random::<f64>() < self.config.failure_rate
        };
        let wake = Instant::now() + Duration::from_millis(self.config.latency_ms);
        while Instant::now() < wake {
            if cancel.load(Ordering::Relaxed) {
                return Err("cancelled".into());
            }
            thread::sleep((wake - Instant::now()).min(Duration::from_millis(5)));
        }
        if fail {
            return Err("injected failure".into());
        }
        let (bqm, _) = wire.decode().map_err(|e| e.to_string())?;
        let req = SolveRequest::new(bqm, time_limit_ms.max(1), seed);
        let r = self.solver.solve(&req).map_err(|e| e.to_string())?;
        Ok(RemoteResponse { sample: r.sample, energy: r.energy, solver: MOCK_SOLVER_TAG.into() })
    }
}

/// How a [`RemoteSolver`] reaches its backend.
pub trait RemoteTransport: Send + Sync {
    fn call(
        &self,
        wire: &BqmWire,
        seed: u64,
        time_limit_ms: u64,
        timeout: Duration,
    ) -> Result<RemoteResponse, SolveError>;
}

/// Calls a [`MockRemote`] on a worker thread. On timeout the worker is told
/// to stop and the call returns immediately.
#[derive(Debug, Clone)]
pub struct InProcessTransport {
    pub remote: Arc<MockRemote>,
}

impl InProcessTransport {
    pub fn new(remote: Arc<MockRemote>) -> Self {
        Self { remote }
    }
}

impl RemoteTransport for InProcessTransport {
    fn call(
        &self,
        wire: &BqmWire,
        seed: u64,
        time_limit_ms: u64,
        timeout: Duration,
    ) -> Result<RemoteResponse, SolveError> {
        let (tx, rx) = mpsc::sync_channel(1);
        let cancel = Arc::new(AtomicBool::new(false));
        let remote = Arc::clone(&self.remote);
        let flag = Arc::clone(&cancel);
        let wire = wire.clone();
        thread::spawn(move || {
            let _ = tx.send(remote.handle(&wire, seed, time_limit_ms, &flag));
        });
        match rx.recv_timeout(timeout) {
            Ok(r) => r.map_err(SolveError::Remote),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                cancel.store(true, Ordering::Relaxed);
                Err(SolveError::Timeout(timeout))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(SolveError::Remote("worker exited".into())),
        }
    }
}

/// Blocking HTTP client for a server speaking the wire format.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub endpoint: String,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into().trim_end_matches('/').to_string() }
    }
}

impl RemoteTransport for HttpTransport {
    fn call(
        &self,
        wire: &BqmWire,
        seed: u64,
        time_limit_ms: u64,
        timeout: Duration,
    ) -> Result<RemoteResponse, SolveError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        let url = format!("{}/solve?seed={seed}&time_limit_ms={time_limit_ms}", self.endpoint);
        let mut resp = agent.post(&url).send_json(wire).map_err(|e| match e {
            ureq::Error::Timeout(_) => SolveError::Timeout(timeout),
            other => SolveError::Remote(other.to_string()),
        })?;
        resp.body_mut().read_json::<RemoteResponse>().map_err(|e| match e {
            ureq::Error::Timeout(_) => SolveError::Timeout(timeout),
            other => SolveError::Remote(other.to_string()),
        })
    }
}

/// Solver backed by a remote service. The returned energy is recomputed
/// locally from the sample, never trusted from the wire.
#[derive(Clone)]
pub struct RemoteSolver {
    pub transport: Arc<dyn RemoteTransport>,
    pub timeout: Duration,
}

impl RemoteSolver {
    pub fn new(transport: Arc<dyn RemoteTransport>, timeout: Duration) -> Self {
        Self { transport, timeout }
    }

    pub fn http(endpoint: &str, timeout: Duration) -> Self {
        Self::new(Arc::new(HttpTransport::new(endpoint)), timeout)
    }

    pub fn mock(config: MockRemoteConfig, timeout: Duration) -> Self {
        Self::new(Arc::new(InProcessTransport::new(Arc::new(MockRemote::new(config)))), timeout)
    }
}

impl Solver for RemoteSolver {
    fn name(&self) -> &str {
        "remote"
    }

    fn solve(&self, req: &SolveRequest) -> Result<SolveResult, SolveError> {
        req.check()?;
        let start = Instant::now();
        let wire = BqmWire::encode(&req.bqm, None);
        let resp = self.transport.call(&wire, req.seed, req.budget.as_millis() as u64, self.timeout)?;
        if resp.sample.len() != req.bqm.num_variables() || resp.sample.iter().any(|&b| b > 1) {
            return Err(SolveError::Remote("response sample does not match the model".into()));
        }
        Ok(SolveResult {
            energy: req.bqm.energy(&resp.sample),
            sample: resp.sample,
            samples_evaluated: 1,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            solver: resp.solver,
        })
    }
}
