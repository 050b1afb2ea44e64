use std::collections::BTreeMap;

use super::QuboError;

/// Binary quadratic model `offset + Σ h_i x_i + Σ_{i<j} J_ij x_i x_j` over
/// `x ∈ {0,1}^n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinaryQuadraticModel {
    num_variables: usize,
    linear: BTreeMap<usize, f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl BinaryQuadraticModel {
    pub fn new(num_variables: usize) -> Self {
        Self { num_variables, ..Default::default() }
    }

    pub fn num_variables(&self) -> usize {
        self.num_variables
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn linear(&self) -> &BTreeMap<usize, f64> {
        &self.linear
    }

    /// Quadratic terms keyed by `(i, j)` with `i < j`.
    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn add_offset(&mut self, v: f64) {
        self.offset += v;
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        assert!(i < self.num_variables, "variable {i} out of range");
        *self.linear.entry(i).or_insert(0.0) += v;
    }

    /// Adds `v · x_i · x_j`. A self pair folds into the linear term since
    /// `x² = x` for binaries.
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.num_variables && j < self.num_variables, "pair ({i},{j}) out of range");
        if i == j {
            self.add_linear(i, v);
            return;
        }
        let key = (i.min(j), i.max(j));
        *self.quadratic.entry(key).or_insert(0.0) += v;
    }

    pub fn linear_coefficient(&self, i: usize) -> f64 {
        self.linear.get(&i).copied().unwrap_or(0.0)
    }

    pub fn quadratic_coefficient(&self, i: usize, j: usize) -> f64 {
        self.quadratic.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    /// Largest absolute linear or quadratic coefficient.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear.values().chain(self.quadratic.values()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> Result<(), QuboError> {
        let finite = self.offset.is_finite()
            && self.linear.values().all(|v| v.is_finite())
            && self.quadratic.values().all(|v| v.is_finite());
        if !finite {
            return Err(QuboError::NonFiniteCoefficient);
        }
        if let Some((&(i, j), _)) = self.quadratic.iter().find(|((i, j), _)| i >= j || *j >= self.num_variables) {
            return Err(QuboError::InvalidPair(i, j));
        }
        Ok(())
    }

    pub fn energy(&self, sample: &[u8]) -> f64 {
        assert_eq!(sample.len(), self.num_variables, "sample length");
        let mut e = self.offset;
        for (&i, &h) in &self.linear {
            if sample[i] != 0 {
                e += h;
            }
        }
        for (&(i, j), &w) in &self.quadratic {
            if sample[i] != 0 && sample[j] != 0 {
                e += w;
            }
        }
        e
    }

    /// Spin form `offset' + Σ h_i s_i + Σ J_ij s_i s_j` with `x = (1 + s) / 2`.
    pub fn to_ising(&self) -> (Vec<f64>, BTreeMap<(usize, usize), f64>, f64) {
        let mut h = vec![0.0; self.num_variables];
        let mut offset = self.offset;
        for (&i, &v) in &self.linear {
            h[i] += v / 2.0;
            offset += v / 2.0;
        }
        let mut j = BTreeMap::new();
        for (&(a, b), &w) in &self.quadratic {
            j.insert((a, b), w / 4.0);
            h[a] += w / 4.0;
            h[b] += w / 4.0;
            offset += w / 4.0;
        }
        (h, j, offset)
    }

    pub fn compile(&self) -> CompiledBqm {
        let n = self.num_variables;
        let mut linear = vec![0.0; n];
        for (&i, &v) in &self.linear {
            linear[i] = v;
        }
        let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in &self.quadratic {
            if w != 0.0 {
                neighbors[i].push((j, w));
                neighbors[j].push((i, w));
            }
        }
        CompiledBqm { linear, neighbors, offset: self.offset }
    }
}

/// Adjacency-list form used by the solvers' inner loops.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledBqm {
    pub linear: Vec<f64>,
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub offset: f64,
}

impl CompiledBqm {
    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn energy(&self, x: &[u8]) -> f64 {
        let mut e = self.offset;
        for i in 0..x.len() {
            if x[i] == 0 {
                continue;
            }
            e += self.linear[i];
            for &(j, w) in &self.neighbors[i] {
                if j > i && x[j] != 0 {
                    e += w;
                }
            }
        }
        e
    }

    /// `h_i + Σ_j J_ij x_j`: the energy gained by setting `x_i` from 0 to 1.
    pub fn local_field(&self, x: &[u8], i: usize) -> f64 {
        self.linear[i] + self.neighbors[i].iter().filter(|(j, _)| x[*j] != 0).map(|(_, w)| w).sum::<f64>()
    }

    /// Energy change from flipping `x_i`.
    pub fn flip_delta(&self, x: &[u8], i: usize) -> f64 {
        let f = self.local_field(x, i);
        if x[i] == 0 {
            f
        } else {
            -f
        }
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        let lin = self.linear.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.neighbors.iter().flatten().fold(lin, |m, (_, w)| m.max(w.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_pair_folds_into_linear() {
        let mut b = BinaryQuadraticModel::new(2);
        b.add_quadratic(1, 1, 3.0);
        assert!(b.quadratic().is_empty());
        assert_eq!(b.linear_coefficient(1), 3.0);
    }

    #[test]
    fn compiled_energy_agrees() {
        let mut b = BinaryQuadraticModel::new(3);
        b.add_linear(0, -1.0);
        b.add_linear(2, 0.5);
        b.add_quadratic(2, 0, 2.0);
        b.add_quadratic(1, 2, -3.0);
        b.add_offset(4.0);
        let c = b.compile();
        for m in 0..8u8 {
            let x: Vec<u8> = (0..3).map(|i| (m >> i) & 1).collect();
            assert_eq!(b.energy(&x), c.energy(&x));
            for i in 0..3 {
                let mut y = x.clone();
                y[i] ^= 1;
                assert!((c.energy(&y) - c.energy(&x) - c.flip_delta(&x, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ising_transform_preserves_energy() {
        let mut b = BinaryQuadraticModel::new(3);
        b.add_linear(0, -2.0);
        b.add_linear(1, 1.5);
        b.add_quadratic(0, 1, 4.0);
        b.add_quadratic(1, 2, -1.0);
        b.add_offset(0.25);
        let (h, j, off) = b.to_ising();
        for m in 0..8u8 {
            let x: Vec<u8> = (0..3).map(|i| (m >> i) & 1).collect();
            let s: Vec<f64> = x.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
            let e = off
                + h.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()
                + j.iter().map(|(&(a, c), w)| w * s[a] * s[c]).sum::<f64>();
            assert!((e - b.energy(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_catches_nan() {
        let mut b = BinaryQuadraticModel::new(1);
        b.add_linear(0, f64::NAN);
        assert_eq!(b.validate(), Err(QuboError::NonFiniteCoefficient));
    }
}
