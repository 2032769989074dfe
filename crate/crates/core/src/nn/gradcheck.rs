use crate::error::Result;
use crate::nn::model::{loss_and_gradients, loss_with_pattern, Classifier};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over the compared coordinates.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose perturbations cross a ReLU or max-pool kink.
    pub excluded: Vec<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares the analytic cross-entropy gradient of every parameter entry with
/// central finite differences, `|a - n| / max(|a|, |n|, 1e-6)`.
///
/// A coordinate is excluded when the forward passes at `theta +- h` do not
/// share the activation pattern of `theta`, i.e. the loss is not smooth on
/// the stencil.
pub fn gradient_check<M: Classifier>(model: &mut M, input: &M::Input, label: usize) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_gradients(model, input, label, 1.0)?;
    let (_, base_pattern) = loss_with_pattern(model, input, label)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, excluded: Vec::new() };
    for p in 0..model.params().len() {
        let id = crate::nn::ParamId(p);
        let name = model.params().get(id).name.clone();
        for i in 0..model.params().get(id).tensor.len() {
            let original = model.params().get(id).tensor.data()[i];
            model.params_mut().get_mut(id).tensor.data_mut()[i] = original + FD_STEP;
            let plus = loss_with_pattern(model, input, label);
            model.params_mut().get_mut(id).tensor.data_mut()[i] = original - FD_STEP;
            let minus = loss_with_pattern(model, input, label);
            model.params_mut().get_mut(id).tensor.data_mut()[i] = original;
            let ((lp, pp), (lm, pm)) = (plus?, minus?);
            if pp != base_pattern || pm != base_pattern {
                report.excluded.push((name.clone(), i));
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let a = analytic.0[p].data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::LinearClassifier;
    use crate::nn::ops::{max_pool_groups, relu};
    use crate::nn::param::{ParamId, ParamStore, Parameter};
    use crate::nn::tape::{Tape, Var};
    use crate::nn::tensor::Tensor;
    use crate::graph::GraphSignal;

    #[test]
    fn linear_model_is_exact() {
        let mut model = LinearClassifier::new(6, 3, 4);
        let x = Tensor::from_vec(vec![0.3, -0.2, 1.1, 0.0, 2.0, -0.7]);
        let report = gradient_check(&mut model, &x, 2).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 21);
        assert!(report.excluded.is_empty());
    }

    /// Pools two parameters that start exactly tied.
    struct TiedPool {
        params: ParamStore,
        h: ParamId,
    }

    impl Classifier for TiedPool {
        type Input = ();

        fn params(&self) -> &ParamStore {
            &self.params
        }

        fn params_mut(&mut self) -> &mut ParamStore {
            &mut self.params
        }

        fn n_classes(&self) -> usize {
            2
        }

        fn prepare(&self, _x: &GraphSignal) -> Result<()> {
            Ok(())
        }

        fn forward<'a>(&'a self, tape: &mut Tape<'a>, _input: &'a ()) -> Result<Var> {
            let h = tape.param(self.h);
            let r = relu(tape, h);
            max_pool_groups(tape, r, &[vec![0, 1], vec![2]])
        }
    }

    #[test]
    fn ties_are_reported_not_failed() {
        let mut params = ParamStore::new();
        let h = params.add(Parameter::new("h", Tensor::from_vec(vec![0.5, 0.5, -0.25])));
        let mut model = TiedPool { params, h };
        let report = gradient_check(&mut model, &(), 0).unwrap();
        assert!(report.excluded.contains(&("h".to_string(), 0)));
        assert!(report.excluded.contains(&("h".to_string(), 1)));
        assert!(report.passed(1e-6), "{report:?}");
    }
}
