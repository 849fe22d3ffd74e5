use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiffError, Graph, Tensor, Var};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors. Values are shared with the graphs that bind
/// them, so binding never copies.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    shape: (usize, usize),
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    params: BTreeMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, DiffError> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(DiffError::DuplicateParam(name));
        }
        self.names.push(name);
        self.values.push(Arc::new(value));
        Ok(ParamId(self.values.len() - 1))
    }

    /// Uniform Glorot initialization.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId, DiffError> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId, DiffError> {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Copy-on-write if a graph still holds the value.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|t| t.len()).sum()
    }

    /// Binds every parameter into `g` in id order. With `trainable` false the
    /// nodes are constants and receive no gradient.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.values.iter().map(|v| g.shared_leaf(Arc::clone(v), trainable)).collect()
    }

    /// Gradients of bound parameters after `g.backward`, zero where none flowed.
    pub fn grads(&self, g: &Graph, vars: &[Var]) -> Vec<Tensor> {
        vars.iter()
            .zip(&self.values)
            .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
            .collect()
    }

    pub fn to_checkpoint_json(&self) -> String {
        let params = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, t)| (n.clone(), Entry { shape: t.shape(), values: t.data().to_vec() }))
            .collect();
        serde_json::to_string(&Checkpoint { format_version: CHECKPOINT_FORMAT_VERSION, params })
            .expect("checkpoint serializes")
    }

    /// Loads values into an existing store; names and shapes must match exactly.
    pub fn load_checkpoint_json(&mut self, text: &str) -> Result<(), DiffError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(DiffError::Checkpoint(format!("unsupported format_version {}", ck.format_version)));
        }
        if ck.params.len() != self.len() {
            return Err(DiffError::Checkpoint(format!("expected {} parameters, found {}", self.len(), ck.params.len())));
        }
        let mut loaded = Vec::with_capacity(self.len());
        for (name, current) in self.names.iter().zip(&self.values) {
            let e = ck.params.get(name).ok_or_else(|| DiffError::Checkpoint(format!("missing parameter {name:?}")))?;
            if e.shape != current.shape() || e.values.len() != e.shape.0 * e.shape.1 {
                return Err(DiffError::Checkpoint(format!("parameter {name:?} has the wrong shape")));
            }
            loaded.push(Arc::new(Tensor::from_vec(e.shape.0, e.shape.1, e.values.clone())));
        }
        self.values = loaded;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = ParamStore::new();
        a.add_glorot("w", 3, 4, &mut rng).unwrap();
        a.add_zeros("b", 1, 4).unwrap();
        let text = a.to_checkpoint_json();
        assert!(text.contains("\"format_version\":1"));

        let mut b = ParamStore::new();
        b.add_zeros("w", 3, 4).unwrap();
        b.add_zeros("b", 1, 4).unwrap();
        b.load_checkpoint_json(&text).unwrap();
        for id in a.ids() {
            assert_eq!(a.get(id), b.get(id));
        }
    }

    #[test]
    fn checkpoint_rejects_wrong_version_and_shape() {
        let mut s = ParamStore::new();
        s.add_zeros("w", 2, 2).unwrap();
        let bad = r#"{"format_version":2,"params":{"w":{"shape":[2,2],"values":[0,0,0,0]}}}"#;
        assert!(s.load_checkpoint_json(bad).is_err());
        let bad = r#"{"format_version":1,"params":{"w":{"shape":[1,4],"values":[0,0,0,0]}}}"#;
        assert!(s.load_checkpoint_json(bad).is_err());
        assert!(s.load_checkpoint_json(r#"{"params":{}}"#).is_err());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParamStore::new();
        s.add_zeros("w", 1, 1).unwrap();
        assert!(matches!(s.add_zeros("w", 1, 1), Err(DiffError::DuplicateParam(_))));
    }
}
