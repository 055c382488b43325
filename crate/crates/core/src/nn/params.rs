use std::collections::HashMap;

use super::error::NnError;
use super::real::Real;
use super::tensor::Tensor;

/// Index of a named parameter tensor within a [`ParamSet`].
pub type ParamId = usize;

/// Named parameter tensors for a collection of networks. Forward passes
/// borrow the set read-only; the optimizer is the only writer.
#[derive(Debug, Clone)]
pub struct ParamSet<R: Real> {
    tensors: Vec<(String, Tensor<R>)>,
    by_name: HashMap<String, ParamId>,
}

impl<R: Real> Default for ParamSet<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamSet<R> {
    pub fn new() -> Self {
        ParamSet {
            tensors: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<R>) -> ParamId {
        let name = name.into();
        let id = self.tensors.len();
        assert!(
            self.by_name.insert(name.clone(), id).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.tensors.push((name, tensor));
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.tensors[id].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.tensors[id].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.tensors[id].0
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<R>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(id, (name, t))| (id, name.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Copies a gradient store into the tensors' gradient buffers.
    pub fn load_grads(&mut self, grads: &GradStore<R>) {
        for (id, (_, t)) in self.tensors.iter_mut().enumerate() {
            t.set_grad(grads.get(id).to_vec());
        }
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in self.tensors.iter_mut() {
            t.clear_grad();
        }
    }
}

/// Dense per-parameter gradients produced by one backward pass. Parameters
/// that did not participate in the forward pass hold zeros.
#[derive(Debug, Clone)]
pub struct GradStore<R: Real> {
    grads: Vec<Vec<R>>,
}

impl<R: Real> GradStore<R> {
    pub fn zeros_like(params: &ParamSet<R>) -> Self {
        GradStore {
            grads: params.iter().map(|(_, _, t)| vec![R::ZERO; t.numel()]).collect(),
        }
    }

    pub(crate) fn from_parts(grads: Vec<Vec<R>>) -> Self {
        GradStore { grads }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &[R] {
        &self.grads[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [R] {
        &mut self.grads[id]
    }

    /// Elementwise accumulate another store; shapes must agree.
    pub fn add_assign(&mut self, other: &GradStore<R>) -> Result<(), NnError> {
        if self.grads.len() != other.grads.len() {
            return Err(NnError::ShapeMismatch {
                op: "grad_add",
                expected: format!("{} parameter entries", self.grads.len()),
                got: format!("{}", other.grads.len()),
            });
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            debug_assert_eq!(a.len(), b.len());
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, k: R) {
        for g in self.grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= k;
            }
        }
    }
}
