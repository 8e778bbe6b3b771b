use indexmap::IndexMap;

use super::Tensor;
use crate::error::{MmffError, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Param {
    value: Tensor,
    grad: Option<Vec<f64>>,
    frozen: bool,
}

/// Named trainable arrays in insertion order.
///
/// A frozen parameter enters graphs as a constant and is skipped by the
/// optimizer, so its value never changes while the flag is set.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(MmffError::Usage(format!("duplicate parameter name `{name}`")));
        }
        let (idx, _) = self.params.insert_full(
            name,
            Param {
                value,
                grad: None,
                frozen: false,
            },
        );
        Ok(ParamId(idx))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.get_index_of(name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.params.get_index(id.0).expect("parameter id out of range").0
    }

    fn entry(&self, id: ParamId) -> &Param {
        self.params.get_index(id.0).expect("parameter id out of range").1
    }

    fn entry_mut(&mut self, id: ParamId) -> &mut Param {
        self.params
            .get_index_mut(id.0)
            .expect("parameter id out of range")
            .1
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entry(id).value
    }

    /// Replace a parameter's values; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = self.entry_mut(id);
        if p.value.shape() != value.shape() {
            return Err(MmffError::dim(
                "set_value",
                format!("{:?} vs {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entry_mut(id).value
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entry(id).frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entry_mut(id).frozen = frozen;
    }

    /// Set the frozen flag on every parameter whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) {
        for (name, p) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                p.frozen = frozen;
            }
        }
    }

    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.params
            .keys()
            .enumerate()
            .filter(move |(_, n)| n.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn grad(&self, id: ParamId) -> Option<&[f64]> {
        self.entry(id).grad.as_deref()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let p = self.entry_mut(id);
        match &mut p.grad {
            Some(g) => g.iter_mut().zip(grad).for_each(|(a, b)| *a += b),
            None => p.grad = Some(grad.to_vec()),
        }
    }

    /// Drop all gradients; the next backward pass starts from zero.
    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    /// Multiply every stored gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in self.params.values_mut() {
            if let Some(g) = &mut p.grad {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }
}
