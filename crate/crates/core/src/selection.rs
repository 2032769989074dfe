//! Selection GNN: graph convolutions with reduced k-shift filters, neighborhood
//! max-pooling on retained nodes, and a fully connected readout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphShiftOperator, GraphSignal};
use crate::nn::ops::{axpy, dot};
use crate::nn::{
    fully_connected, gather_rows, max_over_groups, max_pool_groups, relu, uniform_init, Backward, Classifier,
    GradSink, ParamId, ParamStore, Parameter, Tape, Tensor, Var,
};
use crate::rng;
use crate::sampling::{graph_neighborhood, reduced_k_shifts, NodeSelectionPlan, ReducedShiftSet, SelectionMatrix};

/// Hyperparameters of one convolution + pooling layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionLayerConfig {
    pub n_taps: usize,
    pub in_features: usize,
    pub out_features: usize,
    pub n_nodes_out: usize,
    pub pool_reach: usize,
    #[serde(default)]
    pub pool_threshold: f64,
    /// Optional tap tying: `tap_groups[k]` is the trainable group used by tap
    /// `k`. Groups must be numbered `0..G` with every group used.
    #[serde(default)]
    pub tap_groups: Option<Vec<usize>>,
}

impl SelectionLayerConfig {
    /// Number of trainable tap groups (`n_taps` when untied).
    pub fn n_tap_groups(&self) -> usize {
        self.tap_groups.as_ref().map_or(self.n_taps, |g| g.iter().max().map_or(0, |m| m + 1))
    }

    /// Reduced shift powers needed for filtering and pooling.
    pub fn shift_order(&self) -> usize {
        self.n_taps.max(self.pool_reach + 1)
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("selection layer {layer}: {what}")));
        if self.n_taps == 0 || self.in_features == 0 || self.out_features == 0 || self.n_nodes_out == 0 {
            return bad("taps, features and node count must be positive");
        }
        if self.pool_threshold.is_nan() || self.pool_threshold < 0.0 {
            return bad("pool threshold must be >= 0");
        }
        if let Some(groups) = &self.tap_groups {
            let g = self.n_tap_groups();
            if groups.len() != self.n_taps || (0..g).any(|i| !groups.contains(&i)) {
                return bad("tap groups must map every tap to one of 0..G with all groups used");
            }
        }
        Ok(())
    }
}

/// `u^f = sum_g sum_k h[k, f, g] S^(k) x^g` on the layer's retained nodes.
///
/// `x` is `F_in x N` row-major, `taps` has shape `[K, F_out, F_in]`.
pub fn graph_conv_reduced(x: &GraphSignal, taps: &Tensor, shifts: &ReducedShiftSet) -> Result<GraphSignal> {
    let (k, f_out, f_in) = tap_dims(taps)?;
    check_conv_dims(x.n_features(), x.n_nodes(), f_in, k, shifts)?;
    let z = shifted_inputs(x.values(), f_in, k, shifts);
    let u = mix_features(&z, taps.data(), k, f_out, f_in, x.n_nodes());
    GraphSignal::new(f_out, x.n_nodes(), u)
}

/// Zero-pads `x` to the full graph with `D^T`, then filters it on the full
/// graph by repeated sparse shifts: `sum_k h_k S^k D^T x`.
pub fn graph_conv_padded(
    x: &GraphSignal,
    taps: &Tensor,
    gso: &GraphShiftOperator,
    d: &SelectionMatrix,
) -> Result<GraphSignal> {
    let (k_taps, f_out, f_in) = tap_dims(taps)?;
    let n = gso.n_nodes();
    if d.rows() != x.n_nodes() || d.cols() != n || x.n_features() != f_in {
        return Err(Error::dim(format!(
            "padded conv: D {}x{}, signal {}x{}, graph {n}, taps in {f_in}",
            d.rows(),
            d.cols(),
            x.n_features(),
            x.n_nodes()
        )));
    }
    let picks = d.picks()?;
    let mut out = vec![0.0; f_out * n];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    for g in 0..f_in {
        cur.iter_mut().for_each(|v| *v = 0.0);
        for (m, &p) in picks.iter().enumerate() {
            cur[p] = x.feature(g)[m];
        }
        for k in 0..k_taps {
            if k > 0 {
                gso.shift_into(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            for f in 0..f_out {
                let h = taps.data()[(k * f_out + f) * f_in + g];
                axpy(h, &cur, &mut out[f * n..(f + 1) * n]);
            }
        }
    }
    GraphSignal::new(f_out, n, out)
}

/// Neighborhood max-pooling at the retained nodes followed by ReLU.
///
/// `c` selects the retained nodes out of the `u` node ordering and `shifts`
/// are the reduced shifts of that ordering.
pub fn graph_pool(
    u: &GraphSignal,
    shifts: &ReducedShiftSet,
    c: &SelectionMatrix,
    reach: usize,
    threshold: f64,
) -> Result<GraphSignal> {
    if c.cols() != u.n_nodes() || shifts.n_rows() != u.n_nodes() {
        return Err(Error::dim("pooling: sampling matrix, shifts and signal disagree"));
    }
    let groups = pooling_groups(shifts, c, reach, threshold)?;
    let mut out = Vec::with_capacity(u.n_features() * groups.len());
    for f in 0..u.n_features() {
        let (vals, _) = max_over_groups(u.feature(f), &groups)?;
        out.extend(vals.into_iter().map(|v| v.max(0.0)));
    }
    GraphSignal::new(u.n_features(), groups.len(), out)
}

fn pooling_groups(
    shifts: &ReducedShiftSet,
    c: &SelectionMatrix,
    reach: usize,
    threshold: f64,
) -> Result<Vec<Vec<usize>>> {
    c.picks()?.into_iter().map(|row| graph_neighborhood(shifts, row, reach, threshold)).collect()
}

fn tap_dims(taps: &Tensor) -> Result<(usize, usize, usize)> {
    match *taps.shape() {
        [k, f_out, f_in] => Ok((k, f_out, f_in)),
        ref s => Err(Error::dim(format!("filter taps must be [K, F_out, F_in], got {s:?}"))),
    }
}

fn check_conv_dims(f: usize, n: usize, f_in: usize, k: usize, shifts: &ReducedShiftSet) -> Result<()> {
    if f != f_in || shifts.n_rows() != n || shifts.n_cols() != n || shifts.order() < k {
        return Err(Error::dim(format!(
            "conv: signal {f}x{n}, taps in {f_in} with {k} taps, shifts {}x{} of order {}",
            shifts.n_rows(),
            shifts.n_cols(),
            shifts.order()
        )));
    }
    Ok(())
}

/// `z[(g * K + k) * N ..]` holds `S^(k) x^g`.
fn shifted_inputs(x: &[f64], f_in: usize, k_taps: usize, shifts: &ReducedShiftSet) -> Vec<f64> {
    let n = shifts.n_cols();
    let mut z = vec![0.0; f_in * k_taps * n];
    for g in 0..f_in {
        let xg = &x[g * n..(g + 1) * n];
        for k in 0..k_taps {
            let s = shifts.matrix(k);
            let out = &mut z[(g * k_taps + k) * n..(g * k_taps + k + 1) * n];
            for (r, o) in out.iter_mut().enumerate() {
                *o = dot(&s[r * n..(r + 1) * n], xg);
            }
        }
    }
    z
}

fn mix_features(z: &[f64], h: &[f64], k_taps: usize, f_out: usize, f_in: usize, n: usize) -> Vec<f64> {
    let mut u = vec![0.0; f_out * n];
    for f in 0..f_out {
        let uf = &mut u[f * n..(f + 1) * n];
        for g in 0..f_in {
            for k in 0..k_taps {
                let coef = h[(k * f_out + f) * f_in + g];
                if coef != 0.0 {
                    axpy(coef, &z[(g * k_taps + k) * n..(g * k_taps + k + 1) * n], uf);
                }
            }
        }
    }
    u
}

/// Tape form of [`graph_conv_reduced`] on an `[F_in, N]` value.
pub fn graph_conv_reduced_op<'a>(
    tape: &mut Tape<'a>,
    x: Var,
    taps: Var,
    shifts: &'a ReducedShiftSet,
) -> Result<Var> {
    let (k, f_out, f_in) = tap_dims(tape.value(taps))?;
    let xv = tape.value(x);
    let n = *xv.shape().last().unwrap();
    check_conv_dims(xv.len() / n, n, f_in, k, shifts)?;
    let z = shifted_inputs(xv.data(), f_in, k, shifts);
    let u = mix_features(&z, tape.value(taps).data(), k, f_out, f_in, n);
    let out = Tensor::new(vec![f_out, n], u)?;
    Ok(tape.record(out, &[x, taps], ConvReducedBackward { x, taps, shifts, z, dims: (k, f_out, f_in, n) }))
}

/// Convolution from precomputed shifted inputs `z` (`[F_in * K, N]`, laid out
/// as in [`shifted_inputs`]). Used for the first layer, whose input never
/// changes during training; no gradient flows into `z`.
fn graph_conv_shifted_op(tape: &mut Tape<'_>, z: Var, taps: Var, n: usize) -> Result<Var> {
    let (k, f_out, f_in) = tap_dims(tape.value(taps))?;
    if tape.value(z).len() != f_in * k * n {
        return Err(Error::dim(format!("shifted input has {} values, expected {}", tape.value(z).len(), f_in * k * n)));
    }
    let u = mix_features(tape.value(z).data(), tape.value(taps).data(), k, f_out, f_in, n);
    let out = Tensor::new(vec![f_out, n], u)?;
    Ok(tape.record(out, &[taps], ConvShiftedBackward { z, taps, dims: (k, f_out, f_in, n) }))
}

struct ConvShiftedBackward {
    z: Var,
    taps: Var,
    dims: (usize, usize, usize, usize),
}

impl Backward for ConvShiftedBackward {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let (k_taps, f_out, f_in, n) = self.dims;
        if !sink.wants(self.taps) {
            return;
        }
        let z = sink.value(self.z).data().to_vec();
        let gu = grad.data();
        let gh = sink.slot(self.taps);
        for k in 0..k_taps {
            for f in 0..f_out {
                for g in 0..f_in {
                    let zg = &z[(g * k_taps + k) * n..(g * k_taps + k + 1) * n];
                    gh[(k * f_out + f) * f_in + g] += dot(&gu[f * n..(f + 1) * n], zg);
                }
            }
        }
    }
}

struct ConvReducedBackward<'a> {
    x: Var,
    taps: Var,
    shifts: &'a ReducedShiftSet,
    z: Vec<f64>,
    dims: (usize, usize, usize, usize),
}

impl Backward for ConvReducedBackward<'_> {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let (k_taps, f_out, f_in, n) = self.dims;
        let gu = grad.data();
        if sink.wants(self.taps) {
            let gh = sink.slot(self.taps);
            for k in 0..k_taps {
                for f in 0..f_out {
                    for g in 0..f_in {
                        let zg = &self.z[(g * k_taps + k) * n..(g * k_taps + k + 1) * n];
                        gh[(k * f_out + f) * f_in + g] += dot(&gu[f * n..(f + 1) * n], zg);
                    }
                }
            }
        }
        if sink.wants(self.x) {
            let h = sink.value(self.taps).data().to_vec();
            let gx = sink.slot(self.x);
            let mut gz = vec![0.0; n];
            for g in 0..f_in {
                for k in 0..k_taps {
                    gz.iter_mut().for_each(|v| *v = 0.0);
                    for f in 0..f_out {
                        axpy(h[(k * f_out + f) * f_in + g], &gu[f * n..(f + 1) * n], &mut gz);
                    }
                    // gx^g += S^(k)^T gz
                    let s = self.shifts.matrix(k);
                    let gxg = &mut gx[g * n..(g + 1) * n];
                    for (r, &w) in gz.iter().enumerate() {
                        if w != 0.0 {
                            axpy(w, &s[r * n..(r + 1) * n], gxg);
                        }
                    }
                }
            }
        }
    }
}

struct SelectionLayer {
    config: SelectionLayerConfig,
    shifts: ReducedShiftSet,
    groups: Vec<Vec<usize>>,
    taps: ParamId,
}

/// Selection graph neural network over a fixed graph and node plan.
pub struct SelectionGNNModel {
    gso: GraphShiftOperator,
    plan: NodeSelectionPlan,
    layers: Vec<SelectionLayer>,
    readout_weight: ParamId,
    readout_bias: ParamId,
    params: ParamStore,
    in_features: usize,
    n_classes: usize,
}

impl SelectionGNNModel {
    /// Builds the model and caches reduced shifts and pooling neighborhoods.
    /// Taps and readout weights are drawn from `seed`; the readout bias is zero.
    pub fn new(
        gso: GraphShiftOperator,
        plan: NodeSelectionPlan,
        configs: Vec<SelectionLayerConfig>,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if configs.is_empty() || n_classes == 0 {
            return Err(Error::Config("selection model needs at least one layer and one class".into()));
        }
        if plan.n_nodes() != gso.n_nodes() {
            return Err(Error::Config(format!(
                "plan covers {} nodes, graph has {}",
                plan.n_nodes(),
                gso.n_nodes()
            )));
        }
        if plan.n_layers() != configs.len() {
            return Err(Error::Config(format!(
                "plan has {} layers, model has {}",
                plan.n_layers(),
                configs.len()
            )));
        }
        let sizes = plan.layer_sizes();
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(configs.len());
        for (i, config) in configs.into_iter().enumerate() {
            let l = i + 1;
            config.validate(l)?;
            if config.n_nodes_out != sizes[l] {
                return Err(Error::Config(format!(
                    "selection layer {l}: n_nodes_out {} but plan keeps {}",
                    config.n_nodes_out, sizes[l]
                )));
            }
            if let Some(prev) = layers.last().map(|p: &SelectionLayer| p.config.out_features) {
                if config.in_features != prev {
                    return Err(Error::Config(format!(
                        "selection layer {l}: in_features {} but previous layer emits {prev}",
                        config.in_features
                    )));
                }
            }
            let d = plan.nested_sampling(l - 1)?;
            let shifts = reduced_k_shifts(&gso, &d, config.shift_order())?;
            let groups = pooling_groups(&shifts, &plan.sampling_matrix(l)?, config.pool_reach, config.pool_threshold)?;
            let fan_in = config.in_features * config.n_taps;
            let shape = [config.n_tap_groups(), config.out_features, config.in_features];
            let taps = params.add(Parameter::new(format!("layer{l}.taps"), uniform_init(&shape, fan_in, &mut rng)));
            layers.push(SelectionLayer { config, shifts, groups, taps });
        }
        let last = &layers.last().unwrap().config;
        let d = last.out_features * last.n_nodes_out;
        let readout_weight =
            params.add(Parameter::new("readout.weight", uniform_init(&[n_classes, d], d, &mut rng)));
        let readout_bias = params.add(Parameter::new("readout.bias", Tensor::zeros(&[n_classes])));
        let in_features = layers[0].config.in_features;
        Ok(SelectionGNNModel { gso, plan, layers, readout_weight, readout_bias, params, in_features, n_classes })
    }

    pub fn gso(&self) -> &GraphShiftOperator {
        &self.gso
    }

    pub fn plan(&self) -> &NodeSelectionPlan {
        &self.plan
    }

    pub fn layer_configs(&self) -> Vec<&SelectionLayerConfig> {
        self.layers.iter().map(|l| &l.config).collect()
    }

    /// Cached reduced shifts of layer `l` (1-based).
    pub fn shifts(&self, l: usize) -> &ReducedShiftSet {
        &self.layers[l - 1].shifts
    }

    /// Pooling neighborhoods of layer `l` (1-based), as positions in the
    /// layer's input node ordering.
    pub fn pooling_neighborhoods(&self, l: usize) -> &[Vec<usize>] {
        &self.layers[l - 1].groups
    }

    pub fn taps_id(&self, l: usize) -> ParamId {
        self.layers[l - 1].taps
    }

    pub fn readout_ids(&self) -> (ParamId, ParamId) {
        (self.readout_weight, self.readout_bias)
    }
}

impl Classifier for SelectionGNNModel {
    /// First-layer shifted inputs `S^(k) x^g` as an `[F * K_1, N]` tensor.
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
        if x.n_features() != self.in_features || x.n_nodes() != self.gso.n_nodes() {
            return Err(Error::dim(format!(
                "input signal {}x{}, model expects {}x{}",
                x.n_features(),
                x.n_nodes(),
                self.in_features,
                self.gso.n_nodes()
            )));
        }
        let first = &self.layers[0];
        let k = first.config.n_taps;
        let z = shifted_inputs(x.values(), self.in_features, k, &first.shifts);
        Tensor::new(vec![self.in_features * k, x.n_nodes()], z)
    }

    fn forward<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Tensor) -> Result<Var> {
        let mut x = tape.constant_ref(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = tape.param(layer.taps);
            if let Some(map) = &layer.config.tap_groups {
                h = gather_rows(tape, h, map)?;
            }
            let u = if l == 0 {
                graph_conv_shifted_op(tape, x, h, self.gso.n_nodes())?
            } else {
                graph_conv_reduced_op(tape, x, h, &layer.shifts)?
            };
            let v = max_pool_groups(tape, u, &layer.groups)?;
            x = relu(tape, v);
        }
        let w = tape.param(self.readout_weight);
        let b = tape.param(self.readout_bias);
        fully_connected(tape, x, w, b)
    }
}
