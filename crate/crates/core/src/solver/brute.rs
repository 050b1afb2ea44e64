use super::{Deadline, SolveError, SolveRequest, SolveResult, Solver, ENERGY_TIE_EPS};
use crate::qubo::CompiledBqm;

pub const MAX_BRUTE_FORCE_VARIABLES: usize = 24;

/// Exact minimization by Gray-code enumeration.
///
/// The time budget is not enforced: the answer is always the global
/// minimum, the lexicographically smallest one among ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForceSolver;

impl Solver for BruteForceSolver {
    fn name(&self) -> &str {
        "brute"
    }

    fn solve(&self, req: &SolveRequest) -> Result<SolveResult, SolveError> {
        req.check()?;
        let n = req.bqm.num_variables();
        if n > MAX_BRUTE_FORCE_VARIABLES {
            return Err(SolveError::TooLarge { variables: n, max: MAX_BRUTE_FORCE_VARIABLES });
        }
        let clock = Deadline::new(req.budget);
        let c = req.bqm.compile();
        let mut x = vec![0u8; n];
        let all: Vec<usize> = (0..n).collect();
        let evaluated = minimize_subset(&c, &all, &mut x);
        Ok(SolveResult {
            energy: req.bqm.energy(&x),
            sample: x,
            samples_evaluated: evaluated,
            wall_time_ms: clock.elapsed_ms(),
            solver: self.name().into(),
        })
    }
}

/// Exactly minimizes over the variables in `subset` (at most
/// [`MAX_BRUTE_FORCE_VARIABLES`]) with every other entry of `x` held fixed,
/// writing the minimizer into `x`. Among ties the assignment that is
/// lexicographically smallest in `subset` order wins. Returns the number of
/// states visited.
pub(crate) fn minimize_subset(c: &CompiledBqm, subset: &[usize], x: &mut [u8]) -> u64 {
    let m = subset.len();
    assert!(m <= MAX_BRUTE_FORCE_VARIABLES, "subset too large for enumeration");
    if m == 0 {
        return 0;
    }
    let mut local = vec![usize::MAX; c.len()];
    for (a, &i) in subset.iter().enumerate() {
        local[i] = a;
    }
    // linear terms with the boundary folded in, and couplings inside the subset
    let mut field = vec![0.0; m];
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (a, &i) in subset.iter().enumerate() {
        let mut h = c.linear[i];
        for &(j, w) in &c.neighbors[i] {
            if local[j] == usize::MAX {
                if x[j] != 0 {
                    h += w;
                }
            } else {
                adj[a].push((local[j], w));
            }
        }
        field[a] = h;
    }
    // start from all-zero inside the subset; the field is then just h'
    let mut y = vec![0u8; m];
    let mut energy = 0.0;
    let mut key: u32 = 0;
    let mut best_e = 0.0;
    let mut best_key: u32 = 0;
    let total: u64 = 1u64 << m;
    for k in 1..total {
        let a = k.trailing_zeros() as usize;
        let delta = if y[a] == 0 { field[a] } else { -field[a] };
        let sign = if y[a] == 0 { 1.0 } else { -1.0 };
        y[a] ^= 1;
        energy += delta;
        for &(b, w) in &adj[a] {
            field[b] += sign * w;
        }
        key ^= 1 << (m - 1 - a);
        if energy < best_e - ENERGY_TIE_EPS || ((energy - best_e).abs() <= ENERGY_TIE_EPS && key < best_key) {
            best_e = energy;
            best_key = key;
        }
    }
    for (a, &i) in subset.iter().enumerate() {
        x[i] = ((best_key >> (m - 1 - a)) & 1) as u8;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::BinaryQuadraticModel;
    use rand::{Rng, SeedableRng};

    fn enumerate_min(b: &BinaryQuadraticModel) -> (f64, Vec<u8>) {
        let n = b.num_variables();
        let mut best = (f64::INFINITY, vec![]);
        // plain lexicographic order: x[0] is the most significant bit
        for m in 0u32..(1 << n) {
            let x: Vec<u8> = (0..n).map(|i| ((m >> (n - 1 - i)) & 1) as u8).collect();
            let e = b.energy(&x);
            if e < best.0 - ENERGY_TIE_EPS {
                best = (e, x);
            }
        }
        best
    }

    #[test]
    fn one_hot_tie_returns_lexicographically_first() {
        let mut b = BinaryQuadraticModel::new(2);
        b.add_linear(0, -1.0);
        b.add_linear(1, -1.0);
        b.add_quadratic(0, 1, 2.0);
        b.add_offset(1.0);
        let r = BruteForceSolver.solve(&SolveRequest::new(b, 100, 0)).unwrap();
        assert_eq!(r.sample, vec![0, 1]);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn matches_plain_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..10);
            let mut b = BinaryQuadraticModel::new(n);
            for i in 0..n {
                b.add_linear(i, rng.random_range(-3..=3) as f64);
                for j in i + 1..n {
                    if rng.random_bool(0.5) {
                        b.add_quadratic(i, j, rng.random_range(-3..=3) as f64);
                    }
                }
            }
            let want = enumerate_min(&b);
            let got = BruteForceSolver.solve(&SolveRequest::new(b, 100, 0)).unwrap();
            assert_eq!(got.sample, want.1);
            assert_eq!(got.energy, want.0);
        }
    }

    #[test]
    fn subset_respects_clamped_boundary() {
        // x2 fixed at 1 makes x0 prefer 0 despite its negative bias
        let mut b = BinaryQuadraticModel::new(3);
        b.add_linear(0, -1.0);
        b.add_quadratic(0, 2, 5.0);
        b.add_linear(1, -1.0);
        let c = b.compile();
        let mut x = vec![1, 0, 1];
        minimize_subset(&c, &[0, 1], &mut x);
        assert_eq!(x, vec![0, 1, 1]);
    }

    #[test]
    fn too_large() {
        let b = BinaryQuadraticModel::new(25);
        assert_eq!(
            BruteForceSolver.solve(&SolveRequest::new(b, 10, 0)).unwrap_err(),
            SolveError::TooLarge { variables: 25, max: 24 }
        );
    }
}
