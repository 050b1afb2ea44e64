//! JSON form of a model, used for persistence and by the remote solver.
//!
//! ```json
//! {"linear":{"0":-2.0},"quadratic":[["0","1",4.0]],"offset":2.0,
//!  "varmap":[{"vehicle_id":"bus-1","route_index":0}]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BinaryQuadraticModel, QuboError, VariableMap};
use crate::ids::VehicleId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEntry {
    pub vehicle_id: VehicleId,
    pub route_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BqmWire {
    pub linear: BTreeMap<String, f64>,
    pub quadratic: Vec<(String, String, f64)>,
    pub offset: f64,
    #[serde(default)]
    pub varmap: Vec<VarEntry>,
}

impl BqmWire {
    pub fn encode(bqm: &BinaryQuadraticModel, varmap: Option<&VariableMap>) -> Self {
        Self {
            linear: bqm.linear().iter().map(|(i, v)| (i.to_string(), *v)).collect(),
            quadratic: bqm.quadratic().iter().map(|(&(i, j), &w)| (i.to_string(), j.to_string(), w)).collect(),
            offset: bqm.offset(),
            varmap: varmap
                .map(|m| {
                    m.entries()
                        .iter()
                        .map(|(v, j)| VarEntry { vehicle_id: v.clone(), route_index: *j })
                        .collect()
                })
                .unwrap_or_default(),
        }
    }

    /// Rebuilds the model. The variable count is taken from the varmap when
    /// present, otherwise from the largest index mentioned.
    pub fn decode(&self) -> Result<(BinaryQuadraticModel, Option<VariableMap>), QuboError> {
        let parse = |s: &str| s.parse::<usize>().map_err(|_| QuboError::Malformed(format!("bad variable index {s:?}")));
        let mut max_index: Option<usize> = None;
        let mut linear = Vec::with_capacity(self.linear.len());
        for (k, v) in &self.linear {
            let i = parse(k)?;
            max_index = max_index.max(Some(i));
            linear.push((i, *v));
        }
        let mut quadratic = Vec::with_capacity(self.quadratic.len());
        for (a, b, w) in &self.quadratic {
            let (i, j) = (parse(a)?, parse(b)?);
            if i == j {
                return Err(QuboError::InvalidPair(i, j));
            }
            max_index = max_index.max(Some(i.max(j)));
            quadratic.push((i, j, *w));
        }
        let n = if self.varmap.is_empty() { max_index.map_or(0, |m| m + 1) } else { self.varmap.len() };
        if max_index.is_some_and(|m| m >= n) {
            return Err(QuboError::Malformed(format!("index {} exceeds varmap size {n}", max_index.unwrap())));
        }
        let mut bqm = BinaryQuadraticModel::new(n);
        bqm.add_offset(self.offset);
        for (i, v) in linear {
            bqm.add_linear(i, v);
        }
        for (i, j, w) in quadratic {
            bqm.add_quadratic(i, j, w);
        }
        bqm.validate()?;
        let varmap = if self.varmap.is_empty() {
            None
        } else {
            Some(VariableMap::from_entries(
                self.varmap.iter().map(|e| (e.vehicle_id.clone(), e.route_index)).collect(),
            )?)
        };
        Ok((bqm, varmap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn json_shape() {
        let mut b = BinaryQuadraticModel::new(2);
        b.add_linear(0, -2.0);
        b.add_quadratic(0, 1, 4.0);
        b.add_offset(2.0);
        let vm = VariableMap::from_entries(vec![("bus-1".into(), 0), ("bus-1".into(), 1)]).unwrap();
        let v = serde_json::to_value(BqmWire::encode(&b, Some(&vm))).unwrap();
        assert_eq!(v["linear"]["0"], -2.0);
        assert_eq!(v["quadratic"][0], serde_json::json!(["0", "1", 4.0]));
        assert_eq!(v["offset"], 2.0);
        assert_eq!(v["varmap"][1]["route_index"], 1);
    }

    #[test]
    fn rejects_garbage_indices() {
        let w: BqmWire = serde_json::from_str(r#"{"linear":{"x":1.0},"quadratic":[],"offset":0}"#).unwrap();
        assert!(w.decode().is_err());
        let w: BqmWire = serde_json::from_str(r#"{"linear":{},"quadratic":[["1","1",2.0]],"offset":0}"#).unwrap();
        assert_eq!(w.decode().unwrap_err(), QuboError::InvalidPair(1, 1));
    }

    proptest! {
        #[test]
        fn roundtrip_preserves_energy(
            n in 1usize..8,
            lin in proptest::collection::vec(-10.0f64..10.0, 8),
            quad in proptest::collection::vec((0usize..8, 0usize..8, -5.0f64..5.0), 0..12),
            offset in -3.0f64..3.0,
            mask in 0u32..256,
        ) {
            let mut b = BinaryQuadraticModel::new(n);
            for (i, v) in lin.iter().take(n).enumerate() {
                b.add_linear(i, *v);
            }
            for (i, j, w) in quad {
                if i < n && j < n {
                    b.add_quadratic(i, j, w);
                }
            }
            b.add_offset(offset);
            let vm = VariableMap::from_entries((0..n).map(|i| (VehicleId::new("v"), i)).collect()).unwrap();
            let text = serde_json::to_string(&BqmWire::encode(&b, Some(&vm))).unwrap();
            let (back, back_vm) = serde_json::from_str::<BqmWire>(&text).unwrap().decode().unwrap();
            let x: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            prop_assert!((back.energy(&x) - b.energy(&x)).abs() < 1e-12);
            prop_assert_eq!(back_vm.unwrap(), vm);
        }
    }
}
