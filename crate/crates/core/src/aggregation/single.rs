use serde::{Deserialize, Serialize};

use crate::aggregation::aggregate_at_node;
use crate::aggregation::inner::{InnerLayerConfig, InnerStack};
use crate::error::{Error, Result};
use crate::graph::{GraphShiftOperator, GraphSignal};
use crate::nn::{fully_connected, logits, uniform_init, Classifier, ParamId, ParamStore, Parameter, Tape, Tensor, Var};
use crate::rng;

/// Single-node aggregation architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationConfig {
    pub designated_node: usize,
    /// Number of shift powers gathered; the graph size when absent.
    #[serde(default)]
    pub sequence_length: Option<usize>,
    pub inner_layers: Vec<InnerLayerConfig>,
}

/// Regular CNN applied to the shift sequence observed at one node.
pub struct AggregationGNNModel {
    gso: GraphShiftOperator,
    config: AggregationConfig,
    length: usize,
    in_features: usize,
    stack: InnerStack,
    readout_weight: ParamId,
    readout_bias: ParamId,
    params: ParamStore,
    n_classes: usize,
}

impl AggregationGNNModel {
    pub fn new(
        gso: GraphShiftOperator,
        config: AggregationConfig,
        in_features: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = gso.n_nodes();
        if config.designated_node >= n {
            return Err(Error::Config(format!("designated node {} out of range", config.designated_node)));
        }
        let length = config.sequence_length.unwrap_or(n);
        if length == 0 || in_features == 0 || n_classes == 0 {
            return Err(Error::Config("sequence length, features and classes must be positive".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let stack = InnerStack::build(&mut params, &mut rng, "inner", &config.inner_layers, in_features, length, None)?;
        let d = stack.out_features * stack.out_len;
        let readout_weight = params.add(Parameter::new("readout.weight", uniform_init(&[n_classes, d], d, &mut rng)));
        let readout_bias = params.add(Parameter::new("readout.bias", Tensor::zeros(&[n_classes])));
        Ok(AggregationGNNModel {
            gso,
            config,
            length,
            in_features,
            stack,
            readout_weight,
            readout_bias,
            params,
            n_classes,
        })
    }

    pub fn config(&self) -> &AggregationConfig {
        &self.config
    }

    pub fn sequence_length(&self) -> usize {
        self.length
    }

    pub fn inner_taps(&self) -> Vec<ParamId> {
        self.stack.layers.iter().map(|l| l.taps).collect()
    }

    pub fn readout_ids(&self) -> (ParamId, ParamId) {
        (self.readout_weight, self.readout_bias)
    }
}

impl Classifier for AggregationGNNModel {
    /// `z_p` as a `[1, F, T]` tensor.
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
        if x.n_features() != self.in_features {
            return Err(Error::dim(format!("signal has {} features, model expects {}", x.n_features(), self.in_features)));
        }
        aggregate_at_node(&self.gso, x, self.config.designated_node, self.length)?
            .reshaped(&[1, self.in_features, self.length])
    }

    fn forward<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Tensor) -> Result<Var> {
        let z = tape.constant_ref(input);
        let out = self.stack.forward(tape, z)?;
        let w = tape.param(self.readout_weight);
        let b = tape.param(self.readout_bias);
        fully_connected(tape, out, w, b)
    }
}

/// Logits of the aggregation GNN for one graph signal.
pub fn aggregation_forward(model: &AggregationGNNModel, x: &GraphSignal) -> Result<Vec<f64>> {
    logits(model, &model.prepare(x)?)
}
