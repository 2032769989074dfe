use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::signal::GraphSignal;
use crate::graph::spectral;

/// Which matrix representation of the graph the operator holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsoVariant {
    RawAdjacency,
    ScaledAdjacency,
    NormalizedLaplacian,
}

impl GsoVariant {
    /// Laplacian spectra order frequencies by ascending eigenvalue, adjacency
    /// spectra by descending eigenvalue.
    pub fn low_frequency_first_is_ascending(self) -> bool {
        matches!(self, GsoVariant::NormalizedLaplacian)
    }
}

/// Weighted edge `(src, dst, weight)`. It is stored at `[S]_{dst,src}`, so one
/// shift moves the value at `src` into `dst`.
pub type Edge = (usize, usize, f64);

/// Sparse `N x N` graph shift operator in compressed sparse row layout.
///
/// Row `m` lists the in-neighbors of node `m`: `[S x]_m = sum_n S[m][n] x[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphShiftOperator {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
    variant: GsoVariant,
    directed: bool,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl GraphShiftOperator {
    /// Builds a raw adjacency operator from `(src, dst, weight)` triples.
    ///
    /// With `symmetrize`, the result is `(A + A^T) / 2`.
    pub fn from_edge_list(edges: &[Edge], n_nodes: usize, symmetrize: bool) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &(src, dst, w) in edges {
            if src >= n_nodes || dst >= n_nodes {
                return Err(Error::invalid(format!(
                    "edge ({src}, {dst}) out of range for {n_nodes} nodes"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight of edge ({src}, {dst})")));
            }
            if !seen.insert((src, dst)) {
                return Err(Error::invalid(format!("duplicate edge ({src}, {dst})")));
            }
        }
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len() * 2);
        for &(src, dst, w) in edges {
            if symmetrize {
                triplets.push((dst, src, 0.5 * w));
                triplets.push((src, dst, 0.5 * w));
            } else {
                triplets.push((dst, src, w));
            }
        }
        Ok(Self::from_triplets(n_nodes, triplets, GsoVariant::RawAdjacency))
    }

    /// `(row, col, value)` triplets; duplicates are summed and explicit zeros dropped.
    pub(crate) fn from_triplets(
        n_nodes: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        variant: GsoVariant,
    ) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_nodes + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut weights: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, w) in triplets {
            if last == Some((r, c)) {
                *weights.last_mut().unwrap() += w;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            weights.push(w);
        }
        // drop entries that cancelled to exactly zero
        let mut keep_ptr = vec![0usize; n_nodes + 1];
        let (mut ci, mut wi) = (Vec::with_capacity(col_idx.len()), Vec::with_capacity(col_idx.len()));
        let mut k = 0;
        for r in 0..n_nodes {
            for _ in 0..row_ptr[r + 1] {
                if weights[k] != 0.0 {
                    ci.push(col_idx[k]);
                    wi.push(weights[k]);
                    keep_ptr[r + 1] += 1;
                }
                k += 1;
            }
        }
        for r in 0..n_nodes {
            keep_ptr[r + 1] += keep_ptr[r];
        }
        let mut gso = GraphShiftOperator {
            n_nodes,
            row_ptr: keep_ptr,
            col_idx: ci,
            weights: wi,
            variant,
            directed: false,
        };
        gso.directed = !gso.is_symmetric(SYMMETRY_TOL);
        gso
    }

    /// Dense row-major matrix, mostly for oracles and small-graph utilities.
    pub fn from_dense(n_nodes: usize, dense: &[f64], variant: GsoVariant) -> Result<Self> {
        if dense.len() != n_nodes * n_nodes {
            return Err(Error::dim("dense matrix is not N x N"));
        }
        let mut triplets = Vec::new();
        for r in 0..n_nodes {
            for c in 0..n_nodes {
                let w = dense[r * n_nodes + c];
                if !w.is_finite() {
                    return Err(Error::NonFinite(format!("entry ({r}, {c})")));
                }
                if w != 0.0 {
                    triplets.push((r, c, w));
                }
            }
        }
        Ok(Self::from_triplets(n_nodes, triplets, variant))
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn variant(&self) -> GsoVariant {
        self.variant
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    /// Nonzero `(row, col, weight)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.weights[k]))
        })
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.weights[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, ws) = self.row(r);
        cols.binary_search(&c).map(|k| ws[k]).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_nodes;
        let mut d = vec![0.0; n * n];
        for (r, c, w) in self.entries() {
            d[r * n + c] = w;
        }
        d
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.entries().all(|(r, c, w)| (self.get(c, r) - w).abs() <= tol)
    }

    pub fn has_negative_weights(&self) -> bool {
        self.weights.iter().any(|&w| w < 0.0)
    }

    /// Weighted degree: row sum of `|S|` plus column sum, halved when symmetric
    /// (so it equals the plain row sum on undirected graphs).
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n_nodes];
        for (r, c, w) in self.entries() {
            deg[r] += w.abs();
            deg[c] += w.abs();
        }
        if !self.directed {
            deg.iter_mut().for_each(|d| *d *= 0.5);
        }
        deg
    }

    /// `out = S x` for one feature row.
    pub fn shift_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_nodes);
        debug_assert_eq!(out.len(), self.n_nodes);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.weights[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    /// `out = S^T x` for one feature row.
    pub fn shift_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.weights[k] * xr;
            }
        }
    }

    /// One application of the shift to every feature row, `O(|E| F)`.
    pub fn apply_shift(&self, x: &GraphSignal) -> Result<GraphSignal> {
        self.check_signal(x)?;
        let mut out = GraphSignal::zeros(x.n_features(), self.n_nodes);
        for f in 0..x.n_features() {
            self.shift_into(x.feature(f), out.feature_mut(f));
        }
        Ok(out)
    }

    /// `[x, Sx, ..., S^{count-1} x]` by repeated sparse shifts.
    pub fn shift_sequence(&self, x: &GraphSignal, count: usize) -> Result<Vec<GraphSignal>> {
        if count == 0 {
            return Err(Error::invalid("shift sequence needs count >= 1"));
        }
        self.check_signal(x)?;
        let mut seq = Vec::with_capacity(count);
        seq.push(x.clone());
        for _ in 1..count {
            let next = self.apply_shift(seq.last().unwrap())?;
            seq.push(next);
        }
        Ok(seq)
    }

    fn check_signal(&self, x: &GraphSignal) -> Result<()> {
        if x.n_nodes() != self.n_nodes {
            return Err(Error::dim(format!(
                "signal on {} nodes, operator on {}",
                x.n_nodes(),
                self.n_nodes
            )));
        }
        Ok(())
    }

    fn map_weights(&self, variant: GsoVariant, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let triplets = self.entries().map(|(r, c, w)| (r, c, f(r, c, w))).collect();
        Self::from_triplets(self.n_nodes, triplets, variant)
    }

    /// `S / rho(S)`, where `rho` is the largest eigenvalue modulus found by
    /// power iteration.
    pub fn scale_by_spectral_radius(&self) -> Result<Self> {
        if self.nnz() == 0 {
            return Err(Error::invalid("cannot normalize an all-zero operator"));
        }
        let rho = spectral::spectral_radius(self)?;
        if rho <= f64::EPSILON {
            return Err(Error::invalid("operator is nilpotent (spectral radius 0)"));
        }
        Ok(self.map_weights(GsoVariant::ScaledAdjacency, |_, _, w| w / rho))
    }

    /// `D^{-1/2} (diag(A 1) - A) D^{-1/2}` with `D = diag(A 1)`.
    pub fn normalized_laplacian(&self) -> Result<Self> {
        if !self.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::invalid("normalized Laplacian requires a symmetric operator"));
        }
        if self.has_negative_weights() {
            return Err(Error::invalid("normalized Laplacian requires nonnegative weights"));
        }
        let n = self.n_nodes;
        let mut deg = vec![0.0; n];
        for (r, _, w) in self.entries() {
            deg[r] += w;
        }
        if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
            return Err(Error::invalid(format!("node {i} is isolated")));
        }
        let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut triplets: Vec<(usize, usize, f64)> =
            self.entries().map(|(r, c, w)| (r, c, -w * inv_sqrt[r] * inv_sqrt[c])).collect();
        triplets.extend((0..n).map(|i| (i, i, deg[i] * inv_sqrt[i] * inv_sqrt[i])));
        let mut out = Self::from_triplets(n, triplets, GsoVariant::NormalizedLaplacian);
        // enforce exact symmetry against rounding in the products above
        out.symmetrize_in_place();
        Ok(out)
    }

    fn symmetrize_in_place(&mut self) {
        let snapshot = self.clone();
        for r in 0..self.n_nodes {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if c != r {
                    self.weights[k] = 0.5 * (snapshot.weights[k] + snapshot.get(c, r));
                }
            }
        }
        self.directed = false;
    }

    /// Reinterprets the operator under another variant without touching weights.
    /// Only used to wrap externally normalized matrices.
    pub fn with_variant(mut self, variant: GsoVariant) -> Self {
        self.variant = variant;
        self
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// Random weighted graph as a dense row-major matrix with a path backbone,
    /// so every node has at least one neighbor.
    fn dense_graph(symmetric: bool) -> impl Strategy<Value = (usize, Vec<f64>)> {
        (2usize..12).prop_flat_map(move |n| {
            (Just(n), prop::collection::vec((prop::bool::weighted(0.3), 0.1f64..2.0), n * n)).prop_map(
                move |(n, cells)| {
                    let mut d = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            let (on, w) = cells[i * n + j];
                            if i != j && on {
                                d[i * n + j] = w;
                                if symmetric {
                                    d[j * n + i] = w;
                                }
                            }
                        }
                    }
                    for i in 0..n - 1 {
                        d[(i + 1) * n + i] = d[(i + 1) * n + i].max(1.0);
                        if symmetric {
                            d[i * n + i + 1] = d[(i + 1) * n + i];
                        }
                    }
                    (n, d)
                },
            )
        })
    }

    fn signal(n: usize, values: &[f64]) -> GraphSignal {
        GraphSignal::from_vec(values[..n].to_vec()).unwrap()
    }

    proptest! {
        #[test]
        fn shift_is_linear(
            (n, d) in dense_graph(false),
            xs in prop::collection::vec(-1.0f64..1.0, 12),
            ys in prop::collection::vec(-1.0f64..1.0, 12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let s = GraphShiftOperator::from_dense(n, &d, GsoVariant::RawAdjacency).unwrap();
            let (x, y) = (signal(n, &xs), signal(n, &ys));
            let mix: Vec<f64> = x.values().iter().zip(y.values()).map(|(p, q)| a * p + b * q).collect();
            let lhs = s.apply_shift(&GraphSignal::from_vec(mix).unwrap()).unwrap();
            let (sx, sy) = (s.apply_shift(&x).unwrap(), s.apply_shift(&y).unwrap());
            for i in 0..n {
                let rhs = a * sx.values()[i] + b * sy.values()[i];
                prop_assert!((lhs.values()[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn directed_cycle_power_n_is_identity(n in 2usize..40, xs in prop::collection::vec(-1.0f64..1.0, 40)) {
            let edges: Vec<Edge> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
            let s = GraphShiftOperator::from_edge_list(&edges, n, false).unwrap();
            let x = signal(n, &xs);
            let seq = s.shift_sequence(&x, n + 1).unwrap();
            prop_assert_eq!(&seq[n], &x);
        }

        #[test]
        fn shift_sequence_matches_dense_powers((n, d) in dense_graph(false), xs in prop::collection::vec(-1.0f64..1.0, 12)) {
            let s = GraphShiftOperator::from_dense(n, &d, GsoVariant::RawAdjacency).unwrap();
            let x = signal(n, &xs);
            let seq = s.shift_sequence(&x, 6).unwrap();
            let m = DMatrix::from_row_slice(n, n, &d);
            let mut p = DMatrix::<f64>::identity(n, n);
            for y in &seq {
                let want = &p * nalgebra::DVector::from_column_slice(x.values());
                let scale = 1.0 + want.amax();
                for i in 0..n {
                    prop_assert!((y.values()[i] - want[i]).abs() <= 1e-12 * scale);
                }
                p = &m * p;
            }
        }

        #[test]
        fn normalized_laplacian_spectrum_in_range((n, d) in dense_graph(true)) {
            let a = GraphShiftOperator::from_dense(n, &d, GsoVariant::RawAdjacency).unwrap();
            let l = a.normalized_laplacian().unwrap();
            prop_assert!(l.is_symmetric(1e-12));
            let eig = DMatrix::from_row_slice(n, n, &l.to_dense()).symmetric_eigen();
            for &v in eig.eigenvalues.iter() {
                prop_assert!((-1e-9..=2.0 + 1e-9).contains(&v), "eigenvalue {}", v);
            }
        }

        #[test]
        fn scaled_operator_has_unit_radius((n, d) in dense_graph(true)) {
            let s = GraphShiftOperator::from_dense(n, &d, GsoVariant::RawAdjacency).unwrap()
                .scale_by_spectral_radius().unwrap();
            let eig = DMatrix::from_row_slice(n, n, &s.to_dense()).symmetric_eigen();
            let rho = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!((rho - 1.0).abs() < 1e-8, "radius {}", rho);
        }
    }
}
