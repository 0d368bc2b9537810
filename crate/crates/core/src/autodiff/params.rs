use std::collections::HashMap;

use rand::Rng;

use super::{AutodiffError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
struct Param {
    name: String,
    value: Tensor,
    sparse_rows: bool,
}

/// Named trainable tensors with a version counter that changes on every
/// mutation (used to invalidate derived caches).
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
    version: u64,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    fn push(&mut self, name: &str, value: Tensor, sparse_rows: bool) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter `{name}`");
        let id = ParamId(self.params.len());
        self.params.push(Param { name: name.to_string(), value, sparse_rows });
        self.by_name.insert(name.to_string(), id);
        self.version += 1;
        id
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        self.push(name, value, false)
    }

    /// Weight matrix with entries uniform in `±1/√fan_in`, `fan_in` = rows.
    pub fn add_weight<R: Rng + ?Sized>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let bound = 1.0 / (rows as f64).sqrt();
        self.add(name, uniform(&[rows, cols], bound, rng))
    }

    pub fn add_bias(&mut self, name: &str, cols: usize) -> ParamId {
        self.add(name, Tensor::zeros(&[1, cols]))
    }

    /// Embedding table, uniform in `±0.1`. Adam only touches rows that
    /// received a gradient in the current step.
    pub fn add_embedding<R: Rng + ?Sized>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        self.push(name, uniform(&[rows, cols], 0.1, rng), true)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn is_sparse(&self, id: ParamId) -> bool {
        self.params[id.0].sparse_rows
    }

    /// Mutable access; bumps the version.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        self.version += 1;
        &mut self.params[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<(), AutodiffError> {
        let cur = self.get(id);
        if cur.shape() != value.shape() {
            return Err(AutodiffError::Shape {
                op: "set",
                detail: format!("`{}` is {:?}, got {:?}", self.name(id), cur.shape(), value.shape()),
            });
        }
        *self.get_mut(id) = value;
        Ok(())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies values from `other` by name; shapes must match.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), AutodiffError> {
        for id in self.ids().collect::<Vec<_>>() {
            let name = self.name(id).to_string();
            let src = other
                .id(&name)
                .ok_or_else(|| AutodiffError::Format(format!("checkpoint lacks parameter `{name}`")))?;
            self.set(id, other.get(src).clone())?;
        }
        Ok(())
    }
}

pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}
