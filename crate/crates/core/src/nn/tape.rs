use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::nn::param::{Gradients, ParamId, ParamStore};
use crate::nn::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Backward rule of one recorded operation.
///
/// `out` is the operation's forward value and `grad` the loss gradient with
/// respect to it; input gradients are accumulated through `sink`.
pub trait Backward: Send {
    fn backward(&self, out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>);
}

/// Gradient accumulator handed to [`Backward::backward`]. Only nodes recorded
/// before the running operation are reachable.
pub struct GradSink<'s, 'a> {
    values: &'s [Cow<'a, Tensor>],
    grads: &'s mut [Option<Tensor>],
    requires: &'s [bool],
}

impl GradSink<'_, '_> {
    /// Forward value of an input.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    /// Whether any parameter depends on `v`.
    pub fn wants(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Mutable gradient buffer of `v`, zero-initialized on first use.
    pub fn slot(&mut self, v: Var) -> &mut [f64] {
        let shape = self.values[v.0].shape();
        self.grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
    }
}

/// Records a forward pass so that parameter gradients can be obtained by one
/// reverse sweep.
pub struct Tape<'a> {
    store: &'a ParamStore,
    grad_enabled: bool,
    track_pattern: bool,
    values: Vec<Cow<'a, Tensor>>,
    ops: Vec<Option<Box<dyn Backward + 'a>>>,
    requires: Vec<bool>,
    param_of: Vec<Option<ParamId>>,
    pattern: Vec<u32>,
}

impl<'a> Tape<'a> {
    /// Tape that records backward rules for every parameter-dependent value.
    pub fn new(store: &'a ParamStore) -> Self {
        Self::build(store, true)
    }

    /// Forward-only tape; no backward rules are kept.
    pub fn inference(store: &'a ParamStore) -> Self {
        Self::build(store, false)
    }

    fn build(store: &'a ParamStore, grad_enabled: bool) -> Self {
        Tape {
            store,
            grad_enabled,
            track_pattern: false,
            values: Vec::new(),
            ops: Vec::new(),
            requires: Vec::new(),
            param_of: Vec::new(),
            pattern: Vec::new(),
        }
    }

    /// Records the activation pattern (ReLU signs, pooling argmaxes) of the
    /// forward pass; see [`Tape::activation_pattern`].
    pub fn with_pattern_tracking(mut self) -> Self {
        self.track_pattern = true;
        self
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Records a value that does not depend on any parameter.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(Cow::Owned(t), None)
    }

    /// Records a borrowed constant without copying it.
    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), None)
    }

    /// Records the current value of a parameter as a leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        self.push_leaf(Cow::Borrowed(&self.store.get(id).tensor), Some(id))
    }

    fn push_leaf(&mut self, t: Cow<'a, Tensor>, param: Option<ParamId>) -> Var {
        self.values.push(t);
        self.ops.push(None);
        self.requires.push(self.grad_enabled && param.is_some());
        self.param_of.push(param);
        Var(self.values.len() - 1)
    }

    /// Records the output of an operation on `inputs`. The backward rule is
    /// dropped when no input depends on a parameter.
    pub fn record(&mut self, value: Tensor, inputs: &[Var], op: impl Backward + 'a) -> Var {
        let requires = self.grad_enabled && inputs.iter().any(|v| self.requires[v.0]);
        self.values.push(Cow::Owned(value));
        self.ops.push(if requires { Some(Box::new(op)) } else { None });
        self.requires.push(requires);
        self.param_of.push(None);
        Var(self.values.len() - 1)
    }

    pub fn tracks_pattern(&self) -> bool {
        self.track_pattern
    }

    pub fn push_pattern(&mut self, code: impl IntoIterator<Item = u32>) {
        if self.track_pattern {
            self.pattern.extend(code);
        }
    }

    /// Discrete signature of all kinked operations evaluated so far. Two
    /// forward passes with equal signatures lie on the same linear piece.
    pub fn activation_pattern(&self) -> &[u32] {
        &self.pattern
    }

    /// Reverse sweep from the scalar `loss`, seeded with `seed`, returning the
    /// gradient of `seed * loss` for every parameter of the store.
    pub fn backward(self, loss: Var, seed: f64) -> Result<Gradients> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::dim("backward requires a scalar loss"));
        }
        let mut out = Gradients::zeros_like(self.store);
        if !self.requires[loss.0] {
            return Ok(out);
        }
        let Tape { values, ops, requires, param_of, .. } = self;
        let mut grads: Vec<Option<Tensor>> = vec![None; values.len()];
        grads[loss.0] = Some(Tensor::scalar(seed).reshaped(values[loss.0].shape())?);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(op) = &ops[i] {
                let mut sink = GradSink { values: &values[..i], grads: &mut grads[..i], requires: &requires[..i] };
                op.backward(&values[i], &g, &mut sink);
            } else if let Some(id) = param_of[i] {
                out.0[id.0].add_assign(&g);
            }
        }
        Ok(out)
    }
}
