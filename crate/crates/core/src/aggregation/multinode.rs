use serde::{Deserialize, Serialize};

use crate::aggregation::aggregate_at_nodes;
use crate::aggregation::inner::{InnerLayerConfig, InnerStack};
use crate::error::{Error, Result};
use crate::graph::{GraphShiftOperator, GraphSignal};
use crate::nn::ops::axpy;
use crate::nn::{
    fully_connected, logits, uniform_init, Backward, Classifier, GradSink, ParamId, ParamStore, Parameter, Tape,
    Tensor, Var,
};
use crate::rng;
use crate::sampling::{cross_k_shifts, NodeSelectionPlan, ReducedShiftSet};

/// One exchange stage: gather `n_shifts` shift samples at `n_nodes` nodes and
/// run the inner CNN at each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterLayerConfig {
    pub n_nodes: usize,
    pub n_shifts: usize,
    pub inner_layers: Vec<InnerLayerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultinodeConfig {
    pub outer_layers: Vec<OuterLayerConfig>,
    /// Give every node its own inner filters instead of sharing them within
    /// an outer layer.
    #[serde(default)]
    pub per_node_filters: bool,
}

struct OuterLayer {
    nodes: Vec<usize>,
    /// `[S^q]_{P_r, P_{r-1}}` for `q < Q_r`; absent for the first layer,
    /// whose gather is part of input preparation.
    gather: Option<ReducedShiftSet>,
    stack: InnerStack,
}

/// Multinode aggregation GNN over nested node sets `P_1 ⊇ P_2 ⊇ ...`.
pub struct MultinodeGNNModel {
    gso: GraphShiftOperator,
    plan: NodeSelectionPlan,
    config: MultinodeConfig,
    outer: Vec<OuterLayer>,
    readout_weight: ParamId,
    readout_bias: ParamId,
    params: ParamStore,
    in_features: usize,
    n_classes: usize,
}

impl MultinodeGNNModel {
    /// `plan` layer `r` lists the nodes of outer layer `r`.
    pub fn new(
        gso: GraphShiftOperator,
        plan: NodeSelectionPlan,
        config: MultinodeConfig,
        in_features: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let r_total = config.outer_layers.len();
        if r_total == 0 || in_features == 0 || n_classes == 0 {
            return Err(Error::Config("multinode model needs outer layers, features and classes".into()));
        }
        if plan.n_nodes() != gso.n_nodes() || plan.n_layers() != r_total {
            return Err(Error::Config(format!(
                "plan with {} layers over {} nodes does not fit {r_total} outer layers over {} nodes",
                plan.n_layers(),
                plan.n_nodes(),
                gso.n_nodes()
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let mut outer: Vec<OuterLayer> = Vec::with_capacity(r_total);
        let mut features = in_features;
        for (i, c) in config.outer_layers.iter().enumerate() {
            let r = i + 1;
            let nodes = plan.selected(r)?;
            if nodes.len() != c.n_nodes {
                return Err(Error::Config(format!(
                    "outer layer {r}: {} nodes configured, plan keeps {}",
                    c.n_nodes,
                    nodes.len()
                )));
            }
            if c.n_shifts == 0 {
                return Err(Error::Config(format!("outer layer {r}: at least one shift is required")));
            }
            let gather = match outer.last() {
                Some(prev) => Some(cross_k_shifts(&gso, &nodes, &prev.nodes, c.n_shifts)?),
                None => None,
            };
            let per_node = config.per_node_filters.then_some(nodes.len());
            let prefix = format!("outer{r}");
            let stack = InnerStack::build(&mut params, &mut rng, &prefix, &c.inner_layers, features, c.n_shifts, per_node)?;
            features = stack.out_features * stack.out_len;
            outer.push(OuterLayer { nodes, gather, stack });
        }
        let d = outer.last().unwrap().nodes.len() * features;
        let readout_weight = params.add(Parameter::new("readout.weight", uniform_init(&[n_classes, d], d, &mut rng)));
        let readout_bias = params.add(Parameter::new("readout.bias", Tensor::zeros(&[n_classes])));
        Ok(MultinodeGNNModel {
            gso,
            plan,
            config,
            outer,
            readout_weight,
            readout_bias,
            params,
            in_features,
            n_classes,
        })
    }

    pub fn config(&self) -> &MultinodeConfig {
        &self.config
    }

    pub fn plan(&self) -> &NodeSelectionPlan {
        &self.plan
    }

    pub fn readout_ids(&self) -> (ParamId, ParamId) {
        (self.readout_weight, self.readout_bias)
    }

    /// Inner tap parameters of outer layer `r` (1-based).
    pub fn inner_taps(&self, r: usize) -> Vec<ParamId> {
        self.outer[r - 1].stack.layers.iter().map(|l| l.taps).collect()
    }

    /// Per-node features `x_r` after every outer layer, each `[P_r, D_r]`.
    pub fn outer_outputs(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::inference(&self.params);
        let outs = self.run(&mut tape, input)?;
        outs.into_iter()
            .zip(&self.outer)
            .map(|(v, o)| {
                let t = tape.value(v).clone();
                let p = o.nodes.len();
                let d = t.len() / p;
                t.reshaped(&[p, d])
            })
            .collect()
    }

    fn run<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Tensor) -> Result<Vec<Var>> {
        let mut outs = Vec::with_capacity(self.outer.len());
        let mut z = tape.constant_ref(input);
        for layer in &self.outer {
            if let Some(gather) = &layer.gather {
                z = gather_shifted(tape, *outs.last().unwrap(), gather)?;
            }
            outs.push(layer.stack.forward(tape, z)?);
        }
        Ok(outs)
    }
}

impl Classifier for MultinodeGNNModel {
    /// First-layer shift sequences `[P_1, F, Q_1]`.
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
        aggregate_at_nodes(&self.gso, x, &self.outer[0].nodes, self.config.outer_layers[0].n_shifts)
    }

    fn forward<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Tensor) -> Result<Var> {
        let outs = self.run(tape, input)?;
        let w = tape.param(self.readout_weight);
        let b = tape.param(self.readout_bias);
        fully_connected(tape, *outs.last().unwrap(), w, b)
    }
}

/// Logits of the multinode GNN for one graph signal.
pub fn multinode_forward(model: &MultinodeGNNModel, x: &GraphSignal) -> Result<Vec<f64>> {
    logits(model, &model.prepare(x)?)
}

/// Zero-pads per-node features `x` (`[P_prev, D]`, read flat) to the graph and
/// gathers `out[p, g, q] = [S^q P_prev^T x^g]_p` at the next node set.
fn gather_shifted<'a>(tape: &mut Tape<'a>, x: Var, gather: &'a ReducedShiftSet) -> Result<Var> {
    let xv = tape.value(x);
    let (p_out, p_in, q_len) = (gather.n_rows(), gather.n_cols(), gather.order());
    if !xv.len().is_multiple_of(p_in) {
        return Err(Error::dim(format!("{} values do not split over {p_in} nodes", xv.len())));
    }
    let d = xv.len() / p_in;
    let mut out = vec![0.0; p_out * d * q_len];
    for q in 0..q_len {
        let s = gather.matrix(q);
        for p in 0..p_out {
            for m in 0..p_in {
                let w = s[p * p_in + m];
                if w == 0.0 {
                    continue;
                }
                let xm = &xv.data()[m * d..(m + 1) * d];
                for g in 0..d {
                    out[(p * d + g) * q_len + q] += w * xm[g];
                }
            }
        }
    }
    let out = Tensor::new(vec![p_out, d, q_len], out)?;
    Ok(tape.record(out, &[x], GatherBackward { x, gather, d }))
}

struct GatherBackward<'a> {
    x: Var,
    gather: &'a ReducedShiftSet,
    d: usize,
}

impl Backward for GatherBackward<'_> {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let (p_out, p_in, q_len, d) = (self.gather.n_rows(), self.gather.n_cols(), self.gather.order(), self.d);
        let gx = sink.slot(self.x);
        let mut col = vec![0.0; d];
        for p in 0..p_out {
            for q in 0..q_len {
                for (g, c) in col.iter_mut().enumerate() {
                    *c = grad.data()[(p * d + g) * q_len + q];
                }
                let s = self.gather.matrix(q);
                for m in 0..p_in {
                    let w = s[p * p_in + m];
                    if w != 0.0 {
                        axpy(w, &col, &mut gx[m * d..(m + 1) * d]);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{aggregation_forward, time_conv, AggregationConfig, AggregationGNNModel};
    use crate::graph::GsoVariant;
    use crate::nn::{gradient_check, max_over_groups};
    use rand::Rng as _;

    fn random_graph(n: usize, seed: u64) -> GraphShiftOperator {
        let mut r = rng::seeded(seed);
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                if r.random::<f64>() < 0.4 {
                    let w = r.random_range(0.2..1.0);
                    dense[i * n + j] = w;
                    dense[j * n + i] = w;
                }
            }
        }
        GraphShiftOperator::from_dense(n, &dense, GsoVariant::RawAdjacency).unwrap().scale_by_spectral_radius().unwrap()
    }

    fn inner(taps: usize, features: usize, pool: usize) -> InnerLayerConfig {
        InnerLayerConfig { n_taps: taps, out_features: features, pool_factor: pool, pool_groups: None }
    }

    fn toy() -> (GraphShiftOperator, NodeSelectionPlan, MultinodeConfig) {
        let gso = random_graph(10, 4);
        let plan = NodeSelectionPlan::from_layers(10, vec![vec![2, 7, 0, 5], vec![7, 5]]).unwrap();
        let config = MultinodeConfig {
            outer_layers: vec![
                OuterLayerConfig { n_nodes: 4, n_shifts: 3, inner_layers: vec![inner(2, 3, 1), inner(2, 2, 2)] },
                OuterLayerConfig { n_nodes: 2, n_shifts: 3, inner_layers: vec![inner(2, 2, 3)] },
            ],
            per_node_filters: false,
        };
        (gso, plan, config)
    }

    fn random_signal(n: usize, seed: u64) -> GraphSignal {
        let mut r = rng::seeded(seed);
        GraphSignal::from_vec((0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Inner CNN on one node's `[F, T]` sequence, from plain convolution and
    /// pooling definitions.
    fn oracle_inner(z: Tensor, taps: &[&Tensor], pools: &[usize]) -> Vec<f64> {
        let mut z = z;
        for (h, &pool) in taps.iter().zip(pools) {
            let u = time_conv(&z, h).unwrap();
            let [f, t] = *u.shape() else { unreachable!() };
            let groups: Vec<Vec<usize>> = (0..t / pool).map(|j| (j * pool..(j + 1) * pool).collect()).collect();
            let mut out = Vec::new();
            for row in u.data().chunks(t) {
                out.extend(max_over_groups(row, &groups).unwrap().0.into_iter().map(|v| v.max(0.0)));
            }
            z = Tensor::new(vec![f, groups.len()], out).unwrap();
        }
        z.into_data()
    }

    #[test]
    fn two_outer_layers_match_dense_step_by_step_oracle() {
        let (gso, plan, config) = toy();
        let model = MultinodeGNNModel::new(gso.clone(), plan, config, 1, 3, 11).unwrap();
        let x = random_signal(10, 12);
        let n = 10;
        let s = gso.to_dense();
        let matvec = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| s[i * n + j] * v[j]).sum()).collect() };
        let p = model.params();
        let taps = |ids: Vec<ParamId>| ids.into_iter().map(|id| &p.get(id).tensor).collect::<Vec<_>>();
        // outer layer 1: shift sequences of x at P_1
        let p1 = [2usize, 7, 0, 5];
        let mut powers = vec![x.values().to_vec()];
        for _ in 1..3 {
            powers.push(matvec(powers.last().unwrap()));
        }
        let x1: Vec<Vec<f64>> = p1
            .iter()
            .map(|&node| {
                let z = Tensor::new(vec![1, 3], (0..3).map(|q| powers[q][node]).collect()).unwrap();
                oracle_inner(z, &taps(model.inner_taps(1)), &[1, 2])
            })
            .collect();
        let d1 = x1[0].len();
        // outer layer 2: zero-pad each feature, shift, gather at P_2
        let p2 = [7usize, 5];
        let mut z2 = vec![vec![vec![0.0; 3]; d1]; 2];
        for g in 0..d1 {
            let mut padded = vec![0.0; n];
            for (m, &node) in p1.iter().enumerate() {
                padded[node] = x1[m][g];
            }
            for q in 0..3 {
                for (z, &node) in z2.iter_mut().zip(&p2) {
                    z[g][q] = padded[node];
                }
                padded = matvec(&padded);
            }
        }
        let x2: Vec<f64> = z2
            .into_iter()
            .flat_map(|zi| {
                let t = Tensor::new(vec![d1, 3], zi.concat()).unwrap();
                oracle_inner(t, &taps(model.inner_taps(2)), &[3])
            })
            .collect();
        let (w, b) = model.readout_ids();
        let (w, b) = (&p.get(w).tensor, &p.get(b).tensor);
        let expect: Vec<f64> =
            (0..3).map(|c| b.data()[c] + (0..x2.len()).map(|j| w.data()[c * x2.len() + j] * x2[j]).sum::<f64>()).collect();
        let got = multinode_forward(&model, &x).unwrap();
        for (a, e) in got.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12, "{got:?} vs {expect:?}");
        }
    }

    #[test]
    fn single_outer_layer_at_one_node_is_aggregation() {
        let gso = random_graph(8, 2);
        let layers = vec![inner(3, 4, 2), inner(2, 3, 2)];
        let plan = NodeSelectionPlan::from_layers(8, vec![vec![5]]).unwrap();
        let config = MultinodeConfig {
            outer_layers: vec![OuterLayerConfig { n_nodes: 1, n_shifts: 8, inner_layers: layers.clone() }],
            per_node_filters: false,
        };
        let multi = MultinodeGNNModel::new(gso.clone(), plan, config, 1, 3, 9).unwrap();
        let agg_config = AggregationConfig { designated_node: 5, sequence_length: None, inner_layers: layers };
        let mut single = AggregationGNNModel::new(gso, agg_config, 1, 3, 1).unwrap();
        for (dst, src) in single.params_mut().iter_mut().zip(multi.params().iter()) {
            dst.tensor = src.tensor.clone();
        }
        let x = random_signal(8, 3);
        let a = aggregation_forward(&single, &x).unwrap();
        let b = multinode_forward(&multi, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_signal_gives_zero_logits_at_zero_bias() {
        let (gso, plan, config) = toy();
        let model = MultinodeGNNModel::new(gso, plan, config, 1, 3, 1).unwrap();
        let x = GraphSignal::zeros(1, 10);
        assert!(multinode_forward(&model, &x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shared_inner_filters_commute_with_node_order() {
        let (gso, _, config) = toy();
        let plan_a = NodeSelectionPlan::from_layers(10, vec![vec![2, 7, 0, 5], vec![7, 5]]).unwrap();
        let plan_b = NodeSelectionPlan::from_layers(10, vec![vec![5, 2, 7, 0], vec![7, 5]]).unwrap();
        let a = MultinodeGNNModel::new(gso.clone(), plan_a, config.clone(), 1, 3, 5).unwrap();
        let b = MultinodeGNNModel::new(gso, plan_b, config, 1, 3, 5).unwrap();
        let x = random_signal(10, 6);
        let oa = a.outer_outputs(&a.prepare(&x).unwrap()).unwrap();
        let ob = b.outer_outputs(&b.prepare(&x).unwrap()).unwrap();
        let d = oa[0].shape()[1];
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            for g in 0..d {
                assert!((oa[0].data()[i * d + g] - ob[0].data()[j * d + g]).abs() < 1e-12);
            }
        }
        assert!(oa[1].max_abs_diff(&ob[1]) < 1e-12);
    }

    #[test]
    fn gradient_check_shared_and_per_node() {
        for per_node in [false, true] {
            let (gso, plan, mut config) = toy();
            config.per_node_filters = per_node;
            let mut model = MultinodeGNNModel::new(gso, plan, config, 1, 3, 21).unwrap();
            let input = model.prepare(&random_signal(10, 22)).unwrap();
            let report = gradient_check(&mut model, &input, 0).unwrap();
            assert!(report.passed(1e-4), "{report:?}");
        }
    }

    #[test]
    fn rejects_plan_mismatch() {
        let (gso, plan, mut config) = toy();
        config.outer_layers[1].n_nodes = 3;
        assert!(MultinodeGNNModel::new(gso, plan, config, 1, 3, 0).is_err());
    }
}
