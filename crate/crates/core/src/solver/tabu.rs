use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{improves, minimize_subset, Deadline, SolveError, SolveRequest, SolveResult, Solver, ENERGY_TIE_EPS};
use crate::qubo::CompiledBqm;

/// Largest sub-problem handed to the exact inner solver.
pub const MAX_SUBPROBLEM_VARIABLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabuConfig {
    /// Iterations a flipped variable stays tabu; `None` picks
    /// `min(20, n / 4 + 1)`. Zero turns the outer loop into greedy descent.
    pub tenure: Option<usize>,
    pub subproblem_size: usize,
    /// Single-flip iterations per round; `None` picks `max(50, 10 n)`.
    pub iterations_per_round: Option<usize>,
    /// Stop after this many rounds without a strictly better energy.
    pub stagnation_rounds: usize,
}

impl Default for TabuConfig {
    fn default() -> Self {
        Self {
            tenure: None,
            subproblem_size: MAX_SUBPROBLEM_VARIABLES,
            iterations_per_round: None,
            stagnation_rounds: 12,
        }
    }
}

/// Outer single-flip tabu search interleaved with exact solves of small
/// sub-problems. Each round picks a seed variable by local energy
/// contribution, grows a connected sub-problem around it through the
/// strongest couplings, solves that exactly with everything else clamped,
/// then runs tabu search from the result.
#[derive(Debug, Clone, Copy, Default)]
pub struct TabuHybridSolver {
    pub config: TabuConfig,
}

impl TabuHybridSolver {
    pub fn new(config: TabuConfig) -> Self {
        Self { config }
    }
}

/// Energy attributable to variable `i` in state `x`: its bias plus half of
/// each active coupling, or zero when unset.
fn contribution(c: &CompiledBqm, x: &[u8], i: usize) -> f64 {
    if x[i] == 0 {
        return 0.0;
    }
    c.linear[i] + 0.5 * c.neighbors[i].iter().filter(|(j, _)| x[*j] != 0).map(|(_, w)| w).sum::<f64>()
}

/// Breadth-first growth from `seed`, strongest couplings first.
fn grow_subproblem(c: &CompiledBqm, seed: usize, size: usize) -> Vec<usize> {
    let mut inside = vec![false; c.len()];
    let mut picked = vec![seed];
    inside[seed] = true;
    let mut queue = VecDeque::from([seed]);
    while let Some(v) = queue.pop_front() {
        let mut nbrs: Vec<(usize, f64)> = c.neighbors[v].iter().copied().filter(|(j, _)| !inside[*j]).collect();
        nbrs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        for (j, _) in nbrs {
            if picked.len() >= size {
                break;
            }
            inside[j] = true;
            picked.push(j);
            queue.push_back(j);
        }
        if picked.len() >= size {
            break;
        }
    }
    picked.sort_unstable();
    picked
}

struct Search<'a> {
    c: &'a CompiledBqm,
    x: Vec<u8>,
    field: Vec<f64>,
    energy: f64,
}

impl<'a> Search<'a> {
    fn new(c: &'a CompiledBqm, x: Vec<u8>) -> Self {
        let field = (0..x.len()).map(|i| c.local_field(&x, i)).collect();
        Self { energy: c.energy(&x), c, x, field }
    }

    fn reset(&mut self, x: &[u8]) {
        self.x.copy_from_slice(x);
        for i in 0..x.len() {
            self.field[i] = self.c.local_field(x, i);
        }
        self.energy = self.c.energy(x);
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
}

impl TabuHybridSolver {
    fn tenure(&self, n: usize) -> usize {
        self.config.tenure.unwrap_or_else(|| (n / 4 + 1).min(20))
    }

    /// Runs `iterations` tabu moves from the current state, returning the
    /// best state seen and the number of moves made.
    fn tabu_phase(
        &self,
        s: &mut Search<'_>,
        iterations: usize,
        tenure: usize,
        clock: &Deadline,
        best_x: &mut [u8],
        best_e: &mut f64,
    ) -> u64 {
        let n = s.x.len();
        let mut tabu_until = vec![0usize; n];
        let mut moves = 0u64;
        for it in 1..=iterations {
            let mut pick: Option<(usize, f64)> = None;
            for (i, &until) in tabu_until.iter().enumerate() {
                let d = s.delta(i);
                let aspirates = s.energy + d < *best_e - ENERGY_TIE_EPS;
                if until >= it && !aspirates {
                    continue;
                }
                if pick.is_none_or(|(_, pd)| d < pd - ENERGY_TIE_EPS) {
                    pick = Some((i, d));
                }
            }
            let Some((i, d)) = pick else { break };
            if tenure == 0 && d >= -ENERGY_TIE_EPS {
                // greedy descent: stop at a local minimum
                break;
            }
            s.flip(i);
            moves += 1;
            tabu_until[i] = it + tenure;
            if improves(s.energy, &s.x, *best_e, best_x) {
                *best_e = s.energy;
                best_x.copy_from_slice(&s.x);
            }
            if moves.is_multiple_of(64) && clock.expired() {
                break;
            }
        }
        moves
    }
}

impl Solver for TabuHybridSolver {
    fn name(&self) -> &str {
        "tabu"
    }

    fn solve(&self, req: &SolveRequest) -> Result<SolveResult, SolveError> {
        req.check()?;
        let clock = Deadline::new(req.budget);
        let c = req.bqm.compile();
        let n = c.len();
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let size = self.config.subproblem_size.clamp(1, MAX_SUBPROBLEM_VARIABLES);
        let tenure = self.tenure(n);
        let iterations = self.config.iterations_per_round.unwrap_or((10 * n).max(50));

        let start: Vec<u8> = match &req.initial {
            Some(x) => x.clone(),
            None => (0..n).map(|_| rng.random_range(0..=1u8)).collect(),
        };
        let mut s = Search::new(&c, start);
        let mut best_x = s.x.clone();
        let mut best_e = c.energy(&best_x);
        let mut evaluated = 0u64;
        let mut stale = 0usize;
        let mut recent_seeds: VecDeque<usize> = VecDeque::new();

        loop {
            // exact sub-problem around the highest-contribution variable not
            // used as a seed recently; random tie-break keeps seeds varied
            let mut order: Vec<(usize, f64, u32)> =
                (0..n).map(|i| (i, contribution(&c, &s.x, i), rng.random::<u32>())).collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
            let seed = order.iter().map(|o| o.0).find(|i| !recent_seeds.contains(i)).unwrap_or(order[0].0);
            recent_seeds.push_back(seed);
            if recent_seeds.len() > n.saturating_sub(1).max(1) {
                recent_seeds.pop_front();
            }
            let subset = if n <= size { (0..n).collect() } else { grow_subproblem(&c, seed, size) };
            let mut x = s.x.clone();
            evaluated += minimize_subset(&c, &subset, &mut x);
            s.reset(&x);
            let round_start_best = best_e;
            let e = c.energy(&s.x);
            if improves(e, &s.x, best_e, &best_x) {
                best_e = e;
                best_x.copy_from_slice(&s.x);
            }
            if clock.expired() {
                break;
            }

            evaluated += self.tabu_phase(&mut s, iterations, tenure, &clock, &mut best_x, &mut best_e);
            // drift in the running energy is harmless but re-anchor anyway
            best_e = c.energy(&best_x);
            s.reset(&best_x);

            if best_e < round_start_best - ENERGY_TIE_EPS {
                stale = 0;
            } else {
                stale += 1;
            }
            if stale >= self.config.stagnation_rounds || clock.expired() {
                break;
            }
        }
        Ok(SolveResult {
            energy: req.bqm.energy(&best_x),
            sample: best_x,
            samples_evaluated: evaluated,
            wall_time_ms: clock.elapsed_ms(),
            solver: self.name().into(),
        })
    }
}
