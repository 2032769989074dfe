use crate::error::{Error, Result};
use crate::nn::tape::{Backward, GradSink, Tape, Var};
use crate::nn::tensor::Tensor;

/// Elementwise `max(0, x)`; the derivative at exactly 0 is taken as 0.
pub fn relu(tape: &mut Tape<'_>, x: Var) -> Var {
    let input = tape.value(x);
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    if tape.tracks_pattern() {
        let signs: Vec<u32> = input.data().iter().map(|&v| u32::from(v > 0.0)).collect();
        tape.push_pattern(signs);
    }
    tape.record(out, &[x], ReluBackward { x })
}

struct ReluBackward {
    x: Var,
}

impl Backward for ReluBackward {
    fn backward(&self, out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let gx = sink.slot(self.x);
        for ((gx, &g), &o) in gx.iter_mut().zip(grad.data()).zip(out.data()) {
            if o > 0.0 {
                *gx += g;
            }
        }
    }
}

/// Plain-slice form of [`max_pool_groups`]; returns the maxima and their
/// argmax indices (lowest index on ties).
pub fn max_over_groups(x: &[f64], groups: &[Vec<usize>]) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut out = Vec::with_capacity(groups.len());
    let mut arg = Vec::with_capacity(groups.len());
    for group in groups {
        let Some(&first) = group.first() else {
            return Err(Error::invalid("empty pooling group"));
        };
        let mut best = first;
        for &i in group {
            if i >= x.len() {
                return Err(Error::invalid(format!("pooling index {i} out of range for length {}", x.len())));
            }
            if x[i] > x[best] || (x[i] == x[best] && i < best) {
                best = i;
            }
        }
        out.push(x[best]);
        arg.push(best);
    }
    Ok((out, arg))
}

/// Max over index groups of the last axis, applied independently to every
/// leading row: `[.., M] -> [.., groups.len()]`.
pub fn max_pool_groups(tape: &mut Tape<'_>, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
    let input = tape.value(x);
    let width = *input.shape().last().expect("tensor has at least one axis");
    let rows = input.len() / width;
    let mut out = Vec::with_capacity(rows * groups.len());
    let mut argmax = Vec::with_capacity(rows * groups.len());
    for r in 0..rows {
        let (vals, arg) = max_over_groups(&input.data()[r * width..(r + 1) * width], groups)?;
        out.extend(vals);
        argmax.extend(arg.into_iter().map(|a| r * width + a));
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = groups.len();
    if tape.tracks_pattern() {
        let code: Vec<u32> = argmax.iter().map(|&a| a as u32).collect();
        tape.push_pattern(code);
    }
    let out = Tensor::new(shape, out)?;
    Ok(tape.record(out, &[x], MaxPoolBackward { x, argmax }))
}

struct MaxPoolBackward {
    x: Var,
    argmax: Vec<usize>,
}

impl Backward for MaxPoolBackward {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let gx = sink.slot(self.x);
        for (&a, &g) in self.argmax.iter().zip(grad.data()) {
            gx[a] += g;
        }
    }
}

/// Contiguous windows of `factor` entries over a length-`len` axis; a trailing
/// partial window is dropped.
pub fn contiguous_groups(len: usize, factor: usize) -> Result<Vec<Vec<usize>>> {
    if factor == 0 || factor > len {
        return Err(Error::invalid(format!("pool factor {factor} invalid for length {len}")));
    }
    Ok((0..len / factor).map(|j| (j * factor..(j + 1) * factor).collect()).collect())
}

/// `W x + b` with `x` read as a flat vector, `W` of shape `[C, D]` and `b` of
/// shape `[C]`.
pub fn fully_connected(tape: &mut Tape<'_>, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xv, wv, bv) = (tape.value(x), tape.value(w), tape.value(b));
    let d = xv.len();
    if wv.shape().len() != 2 || wv.shape()[1] != d || bv.len() != wv.shape()[0] {
        return Err(Error::dim(format!(
            "fully connected: W {:?}, b {:?}, x of length {d}",
            wv.shape(),
            bv.shape()
        )));
    }
    let c = wv.shape()[0];
    let out: Vec<f64> = (0..c)
        .map(|i| bv.data()[i] + dot(&wv.data()[i * d..(i + 1) * d], xv.data()))
        .collect();
    Ok(tape.record(Tensor::from_vec(out), &[x, w, b], LinearBackward { x, w, b }))
}

struct LinearBackward {
    x: Var,
    w: Var,
    b: Var,
}

impl Backward for LinearBackward {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let g = grad.data();
        let d = sink.value(self.x).len();
        if sink.wants(self.w) {
            let x = sink.value(self.x).data().to_vec();
            let gw = sink.slot(self.w);
            for (i, &gi) in g.iter().enumerate() {
                axpy(gi, &x, &mut gw[i * d..(i + 1) * d]);
            }
        }
        if sink.wants(self.b) {
            sink.slot(self.b).iter_mut().zip(g).for_each(|(a, &b)| *a += b);
        }
        if sink.wants(self.x) {
            let w = sink.value(self.w).data().to_vec();
            let gx = sink.slot(self.x);
            for (i, &gi) in g.iter().enumerate() {
                axpy(gi, &w[i * d..(i + 1) * d], gx);
            }
        }
    }
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// `softmax(logits) - one_hot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::invalid(format!("label {label} out of range for {} classes", logits.len())));
    }
    let top = (0..logits.len()).fold(0, |b, i| if logits[i] > logits[b] { i } else { b });
    let max = logits[top];
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let rest: f64 = exps.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, e)| e).sum();
    let sum = 1.0 + rest;
    let loss = rest.ln_1p() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Scalar cross-entropy loss node.
pub fn cross_entropy(tape: &mut Tape<'_>, logits: Var, label: usize) -> Result<Var> {
    let (loss, grad) = softmax_cross_entropy(tape.value(logits).data(), label)?;
    Ok(tape.record(Tensor::scalar(loss), &[logits], CrossEntropyBackward { logits, grad }))
}

struct CrossEntropyBackward {
    logits: Var,
    grad: Vec<f64>,
}

impl Backward for CrossEntropyBackward {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let s = grad.data()[0];
        axpy(s, &self.grad, sink.slot(self.logits));
    }
}

/// Rows of `src` (first axis) picked by `map`: `out[i] = src[map[i]]`.
/// Gradients of repeated rows add up, which ties their values during training.
pub fn gather_rows(tape: &mut Tape<'_>, src: Var, map: &[usize]) -> Result<Var> {
    let sv = tape.value(src);
    let rows = sv.shape()[0];
    let width = sv.len() / rows;
    if map.is_empty() || map.iter().any(|&m| m >= rows) {
        return Err(Error::invalid(format!("row map {map:?} invalid for {rows} rows")));
    }
    let mut data = Vec::with_capacity(map.len() * width);
    for &m in map {
        data.extend_from_slice(&sv.data()[m * width..(m + 1) * width]);
    }
    let mut shape = sv.shape().to_vec();
    shape[0] = map.len();
    let out = Tensor::new(shape, data)?;
    Ok(tape.record(out, &[src], GatherRowsBackward { src, map: map.to_vec(), width }))
}

struct GatherRowsBackward {
    src: Var,
    map: Vec<usize>,
    width: usize,
}

impl Backward for GatherRowsBackward {
    fn backward(&self, _out: &Tensor, grad: &Tensor, sink: &mut GradSink<'_, '_>) {
        let w = self.width;
        let gs = sink.slot(self.src);
        for (i, &m) in self.map.iter().enumerate() {
            axpy(1.0, &grad.data()[i * w..(i + 1) * w], &mut gs[m * w..(m + 1) * w]);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::{ParamStore, Parameter};
    use approx::assert_abs_diff_eq;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn relu_examples() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[-1.0, 0.0, 2.0]));
        let y = relu(&mut tape, x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let z = relu(&mut tape, y);
        assert_eq!(tape.value(z).data(), tape.value(y).data());
        let neg = tape.constant(t(&[-3.0, -0.5]));
        let n = relu(&mut tape, neg);
        assert_eq!(tape.value(n).data(), &[0.0, 0.0]);
    }

    #[test]
    fn max_pool_examples() {
        let (v, _) = max_over_groups(&[1.0, 5.0, 3.0, 2.0], &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(v, vec![5.0, 3.0]);
        let (v, _) = max_over_groups(&[1.0, 5.0], &[vec![0], vec![1]]).unwrap();
        assert_eq!(v, vec![1.0, 5.0]);
        assert!(max_over_groups(&[1.0], &[vec![]]).is_err());
        assert!(max_over_groups(&[1.0], &[vec![1]]).is_err());
    }

    #[test]
    fn max_pool_tie_routes_gradient_to_lowest_index() {
        let mut store = ParamStore::new();
        let id = store.add(Parameter::new("x", t(&[4.0, 4.0, 1.0, 0.0])));
        let mut tape = Tape::new(&store);
        let x = tape.param(id);
        let y = max_pool_groups(&mut tape, x, &[vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
        let g = tape.backward(y, 1.0).unwrap();
        assert_eq!(g.0[0].data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pooling_rows_independently() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::new(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, 8.0, 7.0, 6.0, 5.0]).unwrap());
        let groups = contiguous_groups(4, 2).unwrap();
        let y = max_pool_groups(&mut tape, x, &groups).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 2]);
        assert_eq!(tape.value(y).data(), &[2.0, 4.0, 8.0, 6.0]);
        assert_eq!(contiguous_groups(7, 2).unwrap().len(), 3);
    }

    #[test]
    fn fully_connected_examples() {
        let mut store = ParamStore::new();
        let w = store.add(Parameter::new("w", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()));
        let b = store.add(Parameter::new("b", t(&[0.0, 0.0])));
        let z = store.add(Parameter::new("z", Tensor::zeros(&[2, 2])));
        let c = store.add(Parameter::new("c", t(&[3.0, -1.0])));
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[0.5, -2.0]));
        let (wv, bv, zv, cv) = (tape.param(w), tape.param(b), tape.param(z), tape.param(c));
        let y = fully_connected(&mut tape, x, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -2.0]);
        let y = fully_connected(&mut tape, x, zv, cv).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, -1.0]);
        let bad = tape.constant(t(&[1.0, 2.0, 3.0]));
        assert!(fully_connected(&mut tape, bad, wv, bv).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, grad) = softmax_cross_entropy(&[0.3; 4], 2).unwrap();
        assert_abs_diff_eq!(loss, 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(grad.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
        let (loss, _) = softmax_cross_entropy(&[10.0, -10.0], 0).unwrap();
        assert_abs_diff_eq!(loss, (-20f64).exp().ln_1p(), epsilon = 1e-20);
        assert_abs_diff_eq!(loss, 2.061e-9, epsilon = 1e-12);
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn gather_rows_accumulates_tied_gradients() {
        let mut store = ParamStore::new();
        let id = store.add(Parameter::new("h", Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap()));
        let mut tape = Tape::new(&store);
        let h = tape.param(id);
        let e = gather_rows(&mut tape, h, &[0, 0, 1]).unwrap();
        assert_eq!(tape.value(e).data(), &[1.0, 1.0, 2.0]);
        let zero = tape.constant(t(&[0.0]));
        let w = tape.constant(Tensor::new(vec![1, 3], vec![1.0, 1.0, 1.0]).unwrap());
        let y = fully_connected(&mut tape, e, w, zero).unwrap();
        let g = tape.backward(y, 1.0).unwrap();
        assert_eq!(g.0[0].data(), &[2.0, 1.0]);
    }
}
