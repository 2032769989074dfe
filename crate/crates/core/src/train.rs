//! Mini-batch training with ADAM and cross-entropy, and evaluation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledDataset;
use crate::nn::{
    adam_step, argmax, logits, loss_and_gradients, softmax_cross_entropy, AdamConfig, AdamState, Classifier,
    Gradients,
};
use crate::rng;

/// Samples per gradient-reduction chunk. Fixed so that the floating-point
/// summation order, and thus every update, is independent of thread count.
const REDUCTION_CHUNK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Validation loss is recorded every `eval_every` optimizer steps.
    pub eval_every: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 40, batch_size: 100, eval_every: 20, adam: AdamConfig::default() }
    }
}

/// Loss history of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    /// Mean batch loss of every optimizer step.
    pub train_loss: Vec<f64>,
    /// `(steps taken, mean validation loss)`, starting before the first step.
    pub validation_loss: Vec<(usize, f64)>,
}

impl TrainingTrace {
    pub fn steps(&self) -> usize {
        self.train_loss.len()
    }
}

/// Training stopped early; carries the trace recorded so far.
#[derive(Debug, thiserror::Error)]
#[error("training aborted after {} steps: {error}", trace.steps())]
pub struct TrainAbort {
    pub trace: TrainingTrace,
    pub error: Error,
}

/// Model-ready inputs with their labels.
pub struct PreparedDataset<I> {
    pub inputs: Vec<I>,
    pub labels: Vec<usize>,
}

impl<I> PreparedDataset<I> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Runs the parameter-free part of the model over a dataset.
pub fn prepare<M: Classifier>(model: &M, data: &LabeledDataset) -> Result<PreparedDataset<M::Input>> {
    if data.n_classes > model.n_classes() {
        return Err(Error::dim(format!(
            "dataset has {} classes, model emits {}",
            data.n_classes,
            model.n_classes()
        )));
    }
    let inputs = data.signals.par_iter().map(|x| model.prepare(x)).collect::<Result<Vec<_>>>()?;
    Ok(PreparedDataset { inputs, labels: data.labels.clone() })
}

/// Mean loss and gradient of the mean loss over `batch`.
pub fn batch_gradients<M: Classifier>(
    model: &M,
    data: &PreparedDataset<M::Input>,
    batch: &[usize],
) -> Result<(f64, Gradients)> {
    let scale = 1.0 / batch.len() as f64;
    let partials = batch
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut total = Gradients::zeros_like(model.params());
            let mut loss = 0.0;
            for &i in chunk {
                let (l, g) = loss_and_gradients(model, &data.inputs[i], data.labels[i], scale)?;
                loss += l;
                total.add_assign(&g);
            }
            Ok((loss, total))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grads) = iter.next().expect("batch is nonempty");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss * scale, grads))
}

/// Trains for a fixed number of epochs over seeded shuffles of `train`.
///
/// Every optimizer step uses the mean cross-entropy of one batch; the last
/// batch of an epoch may be smaller. A non-finite loss or gradient aborts
/// with the partial trace.
pub fn train<M: Classifier>(
    model: &mut M,
    train: &PreparedDataset<M::Input>,
    validation: Option<&PreparedDataset<M::Input>>,
    config: &TrainConfig,
    adam: &mut AdamState,
    seed: u64,
) -> Result<TrainingTrace, TrainAbort> {
    let mut trace = TrainingTrace::default();
    let abort = |trace: TrainingTrace, error: Error| TrainAbort { trace, error };
    if config.epochs == 0 {
        return Ok(trace);
    }
    if train.is_empty() || config.batch_size == 0 {
        return Err(abort(trace, Error::invalid("training needs samples and a positive batch size")));
    }
    let eval_every = config.eval_every.max(1);
    let record_validation = |model: &M, trace: &mut TrainingTrace| -> Result<()> {
        if let Some(v) = validation {
            let loss = evaluate(model, v)?.loss;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("validation loss at step {}", trace.steps())));
            }
            trace.validation_loss.push((trace.steps(), loss));
        }
        Ok(())
    };
    if let Err(e) = record_validation(model, &mut trace) {
        return Err(abort(trace, e));
    }
    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let step = batch_gradients(model, train, batch).and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at step {}", trace.steps() + 1)));
                }
                model.params_mut().set_grads(&grads)?;
                adam_step(model.params_mut(), adam)?;
                Ok(loss)
            });
            match step {
                Ok(loss) => trace.train_loss.push(loss),
                Err(e) => return Err(abort(trace, e)),
            }
            if trace.steps() % eval_every == 0 {
                if let Err(e) = record_validation(model, &mut trace) {
                    return Err(abort(trace, e));
                }
            }
        }
    }
    Ok(trace)
}

/// Test-set metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Fraction of samples whose argmax logit (lowest class on ties) is the label.
    pub accuracy: f64,
    pub loss: f64,
    pub predictions: Vec<usize>,
}

pub fn evaluate<M: Classifier>(model: &M, data: &PreparedDataset<M::Input>) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let per_sample = data
        .inputs
        .par_iter()
        .zip(data.labels.par_iter())
        .map(|(x, &y)| {
            let z = logits(model, x)?;
            let (loss, _) = softmax_cross_entropy(&z, y)?;
            Ok((argmax(&z), loss))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = per_sample.iter().zip(&data.labels).filter(|((p, _), &y)| *p == y).count();
    let loss = per_sample.iter().map(|(_, l)| l).sum::<f64>() / data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss,
        predictions: per_sample.into_iter().map(|(p, _)| p).collect(),
    })
}
