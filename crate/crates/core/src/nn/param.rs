use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng;

/// Learnable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        let grad = Tensor::zeros(tensor.shape());
        Parameter { name: name.into(), tensor, grad }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of a model's parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, p: Parameter) -> ParamId {
        self.params.push(p);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill(0.0));
    }

    /// Overwrites every parameter's gradient.
    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        if grads.0.len() != self.params.len() {
            return Err(Error::dim("gradient count does not match parameter count"));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            if p.grad.shape() != g.shape() {
                return Err(Error::dim(format!("gradient shape mismatch for {}", p.name)));
            }
            p.grad.data_mut().copy_from_slice(g.data());
        }
        Ok(())
    }

    /// Replaces tensor values from another store with identical names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::dim(format!("{} parameters, expected {}", other.len(), self.len())));
        }
        for (p, q) in self.params.iter_mut().zip(other.iter()) {
            if p.name != q.name || p.tensor.shape() != q.tensor.shape() {
                return Err(Error::dim(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    q.name,
                    q.tensor.shape(),
                    p.name,
                    p.tensor.shape()
                )));
            }
            p.tensor = q.tensor.clone();
        }
        Ok(())
    }
}

/// One gradient tensor per parameter, aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients(store.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| a.add_assign(b));
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|t| t.scale(s));
    }
}

/// Uniform initialization on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut rng::Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}
