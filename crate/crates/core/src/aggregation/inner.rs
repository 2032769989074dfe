use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{axpy, dot};
use crate::nn::{
    contiguous_groups, max_pool_groups, relu, uniform_init, Backward, GradSink, ParamId, ParamStore, Parameter,
    Tape, Tensor, Var,
};
use crate::rng::Rng;

/// One regular CNN layer: time convolution, max-pooling, ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerLayerConfig {
    pub n_taps: usize,
    pub out_features: usize,
    /// Contiguous pooling window; a trailing partial window is dropped.
    pub pool_factor: usize,
    /// Explicit pooling groups over the layer's sequence positions, replacing
    /// the contiguous windows.
    #[serde(default)]
    pub pool_groups: Option<Vec<Vec<usize>>>,
}

/// `[u^f]_n = sum_g sum_k h[k, f, g] [z^g]_{n-k}` with zeros left of the
/// border; `z` is `[F_in, T]`, `taps` is `[K, F_out, F_in]`, output `[F_out, T]`.
pub fn time_conv(z: &Tensor, taps: &Tensor) -> Result<Tensor> {
    let [f_in, t] = *z.shape() else {
        return Err(Error::dim(format!("sequence must be [F, T], got {:?}", z.shape())));
    };
    let [k, f_out, f_in_taps] = *taps.shape() else {
        return Err(Error::dim(format!("taps must be [K, F_out, F_in], got {:?}", taps.shape())));
    };
    if f_in_taps != f_in || k > t {
        return Err(Error::dim(format!("{k} taps over {f_in_taps} features for a {f_in}x{t} sequence")));
    }
    let dims = ConvDims { p: 1, f_in, f_out, k, t, per_node: false };
    Tensor::new(vec![f_out, t], conv_forward(z.data(), taps.data(), dims))
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    p: usize,
    f_in: usize,
    f_out: usize,
    k: usize,
    t: usize,
    per_node: bool,
}

impl ConvDims {
    fn tap_offset(&self, p: usize, k: usize, f: usize, g: usize) -> usize {
        let node = if self.per_node { p * self.k * self.f_out * self.f_in } else { 0 };
        node + (k * self.f_out + f) * self.f_in + g
    }
}

fn conv_forward(z: &[f64], h: &[f64], d: ConvDims) -> Vec<f64> {
    let t = d.t;
    let mut u = vec![0.0; d.p * d.f_out * t];
    for p in 0..d.p {
        for f in 0..d.f_out {
            let uf = &mut u[(p * d.f_out + f) * t..(p * d.f_out + f + 1) * t];
            for g in 0..d.f_in {
                let zg = &z[(p * d.f_in + g) * t..(p * d.f_in + g + 1) * t];
                for k in 0..d.k.min(t) {
                    axpy(h[d.tap_offset(p, k, f, g)], &zg[..t - k], &mut uf[k..]);
                }
            }
        }
    }
    u
}

/// Batched time convolution over nodes: `z` is `[P, F_in, T]`, `taps` is
/// `[K, F_out, F_in]` (shared) or `[P, K, F_out, F_in]` (one filter bank per
/// node). Output `[P, F_out, T]`.
pub fn time_conv_op(tape: &mut Tape<'_>, z: Var, taps: Var) -> Result<Var> {
    let zv = tape.value(z);
    let hv = tape.value(taps);
    let [p, f_in, t] = *zv.shape() else {
        return Err(Error::dim(format!("batched sequence must be [P, F, T], got {:?}", zv.shape())));
    };
    let (k, f_out, f_in_taps, per_node) = match *hv.shape() {
        [k, fo, fi] => (k, fo, fi, false),
        [q, k, fo, fi] if q == p => (k, fo, fi, true),
        ref s => return Err(Error::dim(format!("taps {s:?} do not fit {p} nodes"))),
    };
    if f_in_taps != f_in || k > t {
        return Err(Error::dim(format!("{k} taps over {f_in_taps} features for [{p}, {f_in}, {t}]")));
    }
    let dims = ConvDims { p, f_in, f_out, k, t, per_node };
    let out = Tensor::new(vec![p, f_out, t], conv_forward(zv.data(), hv.data(), dims))?;
    Ok(tape.record(out, &[z, taps], TimeConvBackward { z, taps, dims }))
}

struct TimeConvBackward {
    z: Var,
    taps: Var,
    dims: ConvDims,
}

impl Backward for TimeConvBackward {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let d = self.dims;
        let t = d.t;
        let gu = grad.data();
        if sink.wants(self.taps) {
            let z = sink.value(self.z).data().to_vec();
            let gh = sink.slot(self.taps);
            for p in 0..d.p {
                for f in 0..d.f_out {
                    let guf = &gu[(p * d.f_out + f) * t..(p * d.f_out + f + 1) * t];
                    for g in 0..d.f_in {
                        let zg = &z[(p * d.f_in + g) * t..(p * d.f_in + g + 1) * t];
                        for k in 0..d.k {
                            gh[d.tap_offset(p, k, f, g)] += dot(&guf[k..], &zg[..t - k]);
                        }
                    }
                }
            }
        }
        if sink.wants(self.z) {
            let h = sink.value(self.taps).data().to_vec();
            let gz = sink.slot(self.z);
            for p in 0..d.p {
                for f in 0..d.f_out {
                    let guf = &gu[(p * d.f_out + f) * t..(p * d.f_out + f + 1) * t];
                    for g in 0..d.f_in {
                        let gzg = &mut gz[(p * d.f_in + g) * t..(p * d.f_in + g + 1) * t];
                        for k in 0..d.k {
                            axpy(h[d.tap_offset(p, k, f, g)], &guf[k..], &mut gzg[..t - k]);
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct InnerLayer {
    pub(crate) taps: ParamId,
    pub(crate) groups: Vec<Vec<usize>>,
}

/// A stack of inner CNN layers with its resolved shapes.
pub(crate) struct InnerStack {
    pub(crate) layers: Vec<InnerLayer>,
    pub(crate) out_features: usize,
    pub(crate) out_len: usize,
}

impl InnerStack {
    /// Allocates taps for every layer. Filters longer than the running
    /// sequence are truncated to its length, since their extra taps would only
    /// ever see zero padding.
    pub(crate) fn build(
        params: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        configs: &[InnerLayerConfig],
        in_features: usize,
        seq_len: usize,
        per_node: Option<usize>,
    ) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Config(format!("{prefix}: at least one inner layer is required")));
        }
        let (mut f, mut t) = (in_features, seq_len);
        let mut layers = Vec::with_capacity(configs.len());
        for (i, c) in configs.iter().enumerate() {
            let l = i + 1;
            if c.n_taps == 0 || c.out_features == 0 {
                return Err(Error::Config(format!("{prefix} layer {l}: taps and features must be positive")));
            }
            let groups = match &c.pool_groups {
                Some(g) => {
                    if g.is_empty() || g.iter().any(|grp| grp.is_empty() || grp.iter().any(|&i| i >= t)) {
                        return Err(Error::Config(format!(
                            "{prefix} layer {l}: pooling groups must be nonempty and index a length-{t} sequence"
                        )));
                    }
                    g.clone()
                }
                None => contiguous_groups(t, c.pool_factor).map_err(|_| {
                    Error::Config(format!("{prefix} layer {l}: pool factor {} exceeds length {t}", c.pool_factor))
                })?,
            };
            let k = c.n_taps.min(t);
            let mut shape = vec![k, c.out_features, f];
            if let Some(p) = per_node {
                shape.insert(0, p);
            }
            let taps = params.add(Parameter::new(format!("{prefix}.layer{l}.taps"), uniform_init(&shape, k * f, rng)));
            layers.push(InnerLayer { taps, groups });
            f = c.out_features;
            t = layers.last().unwrap().groups.len();
        }
        Ok(InnerStack { layers, out_features: f, out_len: t })
    }

    /// `[P, F_in, T]` to `[P, F_L, T_L]`.
    pub(crate) fn forward<'a>(&'a self, tape: &mut Tape<'a>, mut z: Var) -> Result<Var> {
        for layer in &self.layers {
            let h = tape.param(layer.taps);
            let u = time_conv_op(tape, z, h)?;
            let v = max_pool_groups(tape, u, &layer.groups)?;
            z = relu(tape, v);
        }
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, Classifier};
    use approx::assert_abs_diff_eq;

    fn seq(v: &[f64]) -> Tensor {
        Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn time_conv_examples() {
        let z = seq(&[1.0, 2.0, 3.0]);
        let id = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(time_conv(&z, &id).unwrap().data(), z.data());
        let delay = Tensor::new(vec![2, 1, 1], vec![0.0, 1.0]).unwrap();
        assert_eq!(time_conv(&z, &delay).unwrap().data(), &[0.0, 1.0, 2.0]);
        let long = Tensor::new(vec![4, 1, 1], vec![0.0; 4]).unwrap();
        assert!(time_conv(&z, &long).is_err());
    }

    #[test]
    fn time_conv_is_linear() {
        let taps = Tensor::new(vec![2, 2, 1], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let a = seq(&[1.0, -2.0, 0.5, 3.0]);
        let b = seq(&[0.0, 1.5, -1.0, 2.0]);
        let mix: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let lhs = time_conv(&seq(&mix), &taps).unwrap();
        let (ca, cb) = (time_conv(&a, &taps).unwrap(), time_conv(&b, &taps).unwrap());
        for i in 0..lhs.len() {
            assert_abs_diff_eq!(lhs.data()[i], 2.0 * ca.data()[i] - 3.0 * cb.data()[i], epsilon = 1e-12);
        }
    }

    struct PerNode {
        params: ParamStore,
        stack: InnerStack,
        readout: (ParamId, ParamId),
    }

    impl Classifier for PerNode {
        type Input = Tensor;
        fn params(&self) -> &ParamStore {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamStore {
            &mut self.params
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn prepare(&self, _x: &crate::graph::GraphSignal) -> Result<Tensor> {
            unreachable!()
        }
        fn forward<'a>(&'a self, tape: &mut Tape<'a>, input: &'a Tensor) -> Result<Var> {
            let z = tape.constant_ref(input);
            let out = self.stack.forward(tape, z)?;
            let (w, b) = (tape.param(self.readout.0), tape.param(self.readout.1));
            crate::nn::fully_connected(tape, out, w, b)
        }
    }

    #[test]
    fn per_node_filters_pass_gradient_check() {
        let mut rng = crate::rng::seeded(5);
        let mut params = ParamStore::new();
        let configs = vec![
            InnerLayerConfig { n_taps: 3, out_features: 3, pool_factor: 2, pool_groups: None },
            InnerLayerConfig { n_taps: 4, out_features: 2, pool_factor: 1, pool_groups: None },
        ];
        let stack = InnerStack::build(&mut params, &mut rng, "inner", &configs, 2, 7, Some(3)).unwrap();
        assert_eq!((stack.out_features, stack.out_len), (2, 3));
        assert_eq!(params.get(stack.layers[1].taps).tensor.shape(), &[3, 3, 2, 3]);
        let d = 3 * stack.out_features * stack.out_len;
        let w = params.add(Parameter::new("w", uniform_init(&[2, d], d, &mut rng)));
        let b = params.add(Parameter::new("b", Tensor::zeros(&[2])));
        let mut model = PerNode { params, stack, readout: (w, b) };
        let input = uniform_init(&[3, 2, 7], 1, &mut rng);
        let report = gradient_check(&mut model, &input, 1).unwrap();
        assert!(report.passed(1e-4), "{report:?}");
    }
}
