//! Aggregation GNNs: shift sequences gathered at designated nodes and processed
//! by regular CNNs, in single-node and multinode form.

mod inner;
pub mod multinode;
pub mod single;

use crate::error::{Error, Result};
use crate::graph::{GraphShiftOperator, GraphSignal};
use crate::nn::Tensor;

pub use inner::{time_conv, time_conv_op, InnerLayerConfig};
pub use multinode::{multinode_forward, MultinodeConfig, MultinodeGNNModel, OuterLayerConfig};
pub use single::{aggregation_forward, AggregationConfig, AggregationGNNModel};

/// `z[g, k] = [S^k x^g]_node` for `k < length`, as an `[F, length]` tensor.
pub fn aggregate_at_node(gso: &GraphShiftOperator, x: &GraphSignal, node: usize, length: usize) -> Result<Tensor> {
    aggregate_at_nodes(gso, x, &[node], length)?.reshaped(&[x.n_features(), length])
}

/// Shift sequences gathered at several nodes: an `[nodes.len(), F, length]`
/// tensor holding `[S^k x^g]_p`.
pub fn aggregate_at_nodes(
    gso: &GraphShiftOperator,
    x: &GraphSignal,
    nodes: &[usize],
    length: usize,
) -> Result<Tensor> {
    let n = gso.n_nodes();
    if length == 0 {
        return Err(Error::invalid("aggregation length must be >= 1"));
    }
    if let Some(&p) = nodes.iter().find(|&&p| p >= n) {
        return Err(Error::invalid(format!("node {p} out of range for {n} nodes")));
    }
    let f = x.n_features();
    let seq = gso.shift_sequence(x, length)?;
    let mut out = vec![0.0; nodes.len() * f * length];
    for (i, &p) in nodes.iter().enumerate() {
        for g in 0..f {
            for (k, s) in seq.iter().enumerate() {
                out[(i * f + g) * length + k] = s.feature(g)[p];
            }
        }
    }
    Tensor::new(vec![nodes.len(), f, length], out)
}
