use crate::error::{Error, Result};
use crate::graph::GraphSignal;
use crate::nn::ops::{cross_entropy, fully_connected};
use crate::nn::param::{uniform_init, Gradients, ParamId, ParamStore, Parameter};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::rng;

/// A trainable map from graph signals to class logits.
///
/// `prepare` holds the parameter-free part of the forward pass so datasets can
/// be transformed once and reused across epochs.
pub trait Classifier: Sync {
    type Input: Send + Sync;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn n_classes(&self) -> usize;
    fn prepare(&self, x: &GraphSignal) -> Result<Self::Input>;
    fn forward<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Self::Input) -> Result<Var>;
}

/// Class logits for one prepared input.
pub fn logits<M: Classifier>(model: &M, input: &M::Input) -> Result<Vec<f64>> {
    let mut tape = Tape::inference(model.params());
    let out = model.forward(&mut tape, input)?;
    Ok(tape.value(out).data().to_vec())
}

/// Cross-entropy loss of one sample and the gradient of `scale * loss`.
pub fn loss_and_gradients<M: Classifier>(
    model: &M,
    input: &M::Input,
    label: usize,
    scale: f64,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(model.params());
    let out = model.forward(&mut tape, input)?;
    let loss = cross_entropy(&mut tape, out, label)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((value, tape.backward(loss, scale)?))
}

/// Loss and the activation pattern of one forward pass.
pub(crate) fn loss_with_pattern<M: Classifier>(model: &M, input: &M::Input, label: usize) -> Result<(f64, Vec<u32>)> {
    let mut tape = Tape::inference(model.params()).with_pattern_tracking();
    let out = model.forward(&mut tape, input)?;
    let loss = cross_entropy(&mut tape, out, label)?;
    Ok((tape.value(loss).data()[0], tape.activation_pattern().to_vec()))
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(logits: &[f64]) -> usize {
    (0..logits.len()).fold(0, |best, i| if logits[i] > logits[best] { i } else { best })
}

/// Affine classifier on the flattened signal, `W vec(x) + b`.
#[derive(Debug, Clone)]
pub struct LinearClassifier {
    params: ParamStore,
    weight: ParamId,
    bias: ParamId,
    n_classes: usize,
}

impl LinearClassifier {
    pub fn new(n_inputs: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let weight = params.add(Parameter::new("readout.weight", uniform_init(&[n_classes, n_inputs], n_inputs, &mut rng)));
        let bias = params.add(Parameter::new("readout.bias", Tensor::zeros(&[n_classes])));
        LinearClassifier { params, weight, bias, n_classes }
    }
}

impl Classifier for LinearClassifier {
    type Input = Tensor;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn prepare(&self, x: &GraphSignal) -> Result<Tensor> {
        Ok(Tensor::from_vec(x.values().to_vec()))
    }

    fn forward<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Tensor) -> Result<Var> {
        let x = tape.constant_ref(input);
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        fully_connected(tape, x, w, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn linear_gradient_matches_closed_form() {
        let model = LinearClassifier::new(3, 2, 1);
        let x = Tensor::from_vec(vec![0.5, -1.0, 2.0]);
        let (_, g) = loss_and_gradients(&model, &x, 1, 1.0).unwrap();
        let z = logits(&model, &x).unwrap();
        let (_, dz) = crate::nn::ops::softmax_cross_entropy(&z, 1).unwrap();
        for (c, &dzc) in dz.iter().enumerate() {
            for d in 0..3 {
                assert!((g.0[0].data()[c * 3 + d] - dzc * x.data()[d]).abs() < 1e-15);
            }
            assert!((g.0[1].data()[c] - dzc).abs() < 1e-15);
        }
    }
}
