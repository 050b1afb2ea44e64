use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{improves, Deadline, SolveError, SolveRequest, SolveResult, Solver, ENERGY_TIE_EPS};
use crate::qubo::CompiledBqm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub sweeps_per_restart: u32,
    /// Final temperature as a fraction of the initial one.
    pub final_temperature_ratio: f64,
    /// Hard cap on restarts; `None` runs until the budget or stagnation.
    pub max_restarts: Option<u64>,
    /// Stop after this many consecutive restarts without a strictly better
    /// energy.
    pub stagnation_restarts: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self { sweeps_per_restart: 64, final_temperature_ratio: 1e-3, max_restarts: None, stagnation_restarts: 200 }
    }
}

/// Single-flip Metropolis annealing on a geometric schedule from
/// `max |coefficient|` down to `ratio · max |coefficient|`, restarted from
/// random states. Each restart ends with a zero-temperature descent.
///
/// Results are a pure function of the request seed unless the time budget
/// cuts the restart sequence short.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedAnnealingSolver {
    pub config: AnnealConfig,
}

impl SimulatedAnnealingSolver {
    pub fn new(config: AnnealConfig) -> Self {
        Self { config }
    }
}

struct State<'a> {
    c: &'a CompiledBqm,
    x: Vec<u8>,
    field: Vec<f64>,
    energy: f64,
}

impl<'a> State<'a> {
    fn new(c: &'a CompiledBqm, x: Vec<u8>) -> Self {
        let field = (0..x.len()).map(|i| c.local_field(&x, i)).collect();
        let energy = c.energy(&x);
        Self { c, x, field, energy }
    }

    fn delta(&self, i: usize) -> f64 {
        if self.x[i] == 0 {
            self.field[i]
        } else {
            -self.field[i]
        }
    }

    fn flip(&mut self, i: usize) {
        let d = self.delta(i);
        let sign = if self.x[i] == 0 { 1.0 } else { -1.0 };
        self.x[i] ^= 1;
        self.energy += d;
        for &(j, w) in &self.c.neighbors[i] {
            self.field[j] += sign * w;
        }
    }

    fn quench(&mut self) {
        loop {
            let mut moved = false;
            for i in 0..self.x.len() {
                if self.delta(i) < -ENERGY_TIE_EPS {
                    self.flip(i);
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
}

impl Solver for SimulatedAnnealingSolver {
    fn name(&self) -> &str {
        "sa"
    }

    fn solve(&self, req: &SolveRequest) -> Result<SolveResult, SolveError> {
        req.check()?;
        let clock = Deadline::new(req.budget);
        let c = req.bqm.compile();
        let n = c.len();
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let t_hot = c.max_abs_coefficient().max(f64::MIN_POSITIVE);
        let t_cold = t_hot * self.config.final_temperature_ratio;
        let sweeps = self.config.sweeps_per_restart.max(1);
        let cooling = if sweeps > 1 { (t_cold / t_hot).powf(1.0 / (sweeps - 1) as f64) } else { 1.0 };

        let mut best_x: Vec<u8> = Vec::new();
        let mut best_e = f64::INFINITY;
        let mut restarts = 0u64;
        let mut stale = 0u64;
        let mut out_of_time = false;
        while !out_of_time {
            let x0: Vec<u8> = match (&req.initial, restarts) {
                (Some(init), 0) => init.clone(),
                _ => (0..n).map(|_| rng.random_range(0..=1u8)).collect(),
            };
            let mut s = State::new(&c, x0);
            let mut t = t_hot;
            for _ in 0..sweeps {
                for i in 0..n {
                    let d = s.delta(i);
                    if d <= 0.0 || rng.random::<f64>() < (-d / t).exp() {
                        s.flip(i);
                    }
                }
                t *= cooling;
                if clock.expired() {
                    out_of_time = true;
                    break;
                }
            }
            s.quench();
            restarts += 1;
            // recompute rather than trust the running sum
            let e = c.energy(&s.x);
            if best_x.is_empty() || e < best_e - ENERGY_TIE_EPS {
                stale = 0;
            } else {
                stale += 1;
            }
            if best_x.is_empty() || improves(e, &s.x, best_e, &best_x) {
                best_e = e;
                best_x = s.x;
            }
            if stale >= self.config.stagnation_restarts
                || self.config.max_restarts.is_some_and(|m| restarts >= m)
                || clock.expired()
            {
                break;
            }
        }
        Ok(SolveResult {
            energy: req.bqm.energy(&best_x),
            sample: best_x,
            samples_evaluated: restarts,
            wall_time_ms: clock.elapsed_ms(),
            solver: self.name().into(),
        })
    }
}
