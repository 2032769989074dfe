use crate::error::{Error, Result};
use crate::graph::gso::GraphShiftOperator;
use crate::sampling::plan::SelectionMatrix;

/// Dense `[S^k]_{rows, cols}` blocks for `k = 0..order`.
///
/// When rows and columns are the same retained set this is the reduced
/// k-shift family `D S^k D^T`; `S^(0)` is then the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedShiftSet {
    n_rows: usize,
    n_cols: usize,
    matrices: Vec<Vec<f64>>,
}

impl ReducedShiftSet {
    pub fn order(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Row-major `n_rows x n_cols` block of `S^k`.
    pub fn matrix(&self, k: usize) -> &[f64] {
        &self.matrices[k]
    }

    pub fn get(&self, k: usize, r: usize, c: usize) -> f64 {
        self.matrices[k][r * self.n_cols + c]
    }
}

/// `[S^k]_{rows[i], cols[j]}` for `k < order`, computed by `k` sparse shifts of
/// each column indicator; dense powers of `S` are never formed.
pub fn cross_k_shifts(
    gso: &GraphShiftOperator,
    rows: &[usize],
    cols: &[usize],
    order: usize,
) -> Result<ReducedShiftSet> {
    let n = gso.n_nodes();
    if order == 0 {
        return Err(Error::invalid("shift order must be >= 1"));
    }
    if let Some(&v) = rows.iter().chain(cols).find(|&&v| v >= n) {
        return Err(Error::dim(format!("node {v} out of range for {n} nodes")));
    }
    let (nr, nc) = (rows.len(), cols.len());
    let mut matrices = vec![vec![0.0; nr * nc]; order];
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (j, &col) in cols.iter().enumerate() {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[col] = 1.0;
        for (k, m) in matrices.iter_mut().enumerate() {
            if k > 0 {
                gso.shift_into(&v, &mut w);
                std::mem::swap(&mut v, &mut w);
            }
            for (i, &row) in rows.iter().enumerate() {
                m[i * nc + j] = v[row];
            }
        }
    }
    Ok(ReducedShiftSet { n_rows: nr, n_cols: nc, matrices })
}

/// `S^(k) = D S^k D^T` for `k < order`.
pub fn reduced_k_shifts(gso: &GraphShiftOperator, d: &SelectionMatrix, order: usize) -> Result<ReducedShiftSet> {
    if d.cols() != gso.n_nodes() {
        return Err(Error::dim(format!(
            "sampling matrix has {} columns, graph has {} nodes",
            d.cols(),
            gso.n_nodes()
        )));
    }
    let nodes = d.picks()?;
    cross_k_shifts(gso, &nodes, &nodes, order)
}

/// Nodes `m` reachable from row `node_row` through some `S^(k)`, `k <= alpha`.
///
/// With `threshold == 0` an entry counts when it is nonzero; otherwise when
/// its raw value is at least `threshold`. The node itself is always included.
pub fn graph_neighborhood(
    shifts: &ReducedShiftSet,
    node_row: usize,
    alpha: usize,
    threshold: f64,
) -> Result<Vec<usize>> {
    if alpha >= shifts.order() {
        return Err(Error::invalid(format!(
            "reach {alpha} needs shift order > {alpha}, have {}",
            shifts.order()
        )));
    }
    if node_row >= shifts.n_rows() {
        return Err(Error::dim(format!("row {node_row} out of range")));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::invalid("neighborhood threshold must be >= 0"));
    }
    let nc = shifts.n_cols();
    let mut members = vec![false; nc];
    if node_row < nc {
        members[node_row] = true;
    }
    for k in 0..=alpha {
        let row = &shifts.matrix(k)[node_row * nc..(node_row + 1) * nc];
        for (m, &v) in row.iter().enumerate() {
            let hit = if threshold == 0.0 { v != 0.0 } else { v >= threshold };
            members[m] |= hit;
        }
    }
    Ok((0..nc).filter(|&m| members[m]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::plan::NodeSelectionPlan;

    fn cycle4() -> GraphShiftOperator {
        GraphShiftOperator::from_edge_list(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)], 4, false)
            .unwrap()
    }

    fn path5() -> GraphShiftOperator {
        let e: Vec<_> = (0..4).flat_map(|i| [(i, i + 1, 1.0), (i + 1, i, 1.0)]).collect();
        GraphShiftOperator::from_edge_list(&e, 5, false).unwrap()
    }

    fn dense_pow(s: &[f64], n: usize, k: usize) -> Vec<f64> {
        let mut p: Vec<f64> = (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
        for _ in 0..k {
            let mut q = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    q[r * n + c] = (0..n).map(|t| p[r * n + t] * s[t * n + c]).sum();
                }
            }
            p = q;
        }
        p
    }

    #[test]
    fn identity_selection_gives_dense_powers() {
        let s = path5();
        let set = reduced_k_shifts(&s, &SelectionMatrix::identity(5), 4).unwrap();
        for k in 0..4 {
            assert_eq!(set.matrix(k), dense_pow(&s.to_dense(), 5, k).as_slice());
        }
    }

    #[test]
    fn cycle_half_selection_dichotomy() {
        let plan = NodeSelectionPlan::from_layers(4, vec![vec![0, 2]]).unwrap();
        let d = plan.nested_sampling(1).unwrap();
        let set = reduced_k_shifts(&cycle4(), &d, 3).unwrap();
        assert_eq!(set.matrix(0), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(set.matrix(1), &[0.0; 4]);
        assert_eq!(set.matrix(2), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_selection() {
        let bad = SelectionMatrix::from_picks(&[1, 1], 4).unwrap();
        assert!(reduced_k_shifts(&cycle4(), &bad, 2).is_err());
        let wrong_width = SelectionMatrix::identity(3);
        assert!(reduced_k_shifts(&cycle4(), &wrong_width, 2).is_err());
    }

    #[test]
    fn neighborhoods_on_path() {
        let s = path5();
        let set = reduced_k_shifts(&s, &SelectionMatrix::identity(5), 3).unwrap();
        assert_eq!(graph_neighborhood(&set, 3, 0, 0.0).unwrap(), vec![3]);
        assert_eq!(graph_neighborhood(&set, 2, 1, 0.0).unwrap(), vec![1, 2, 3]);
        assert_eq!(graph_neighborhood(&set, 0, 2, 0.0).unwrap(), vec![0, 1, 2]);
        assert!(graph_neighborhood(&set, 0, 3, 0.0).is_err());
    }

    #[test]
    fn neighborhood_threshold_uses_raw_values() {
        let s = GraphShiftOperator::from_edge_list(&[(0, 1, 0.2), (1, 0, 0.2), (1, 2, 0.9), (2, 1, 0.9)], 3, false)
            .unwrap();
        let set = reduced_k_shifts(&s, &SelectionMatrix::identity(3), 2).unwrap();
        assert_eq!(graph_neighborhood(&set, 1, 1, 0.5).unwrap(), vec![1, 2]);
        assert_eq!(graph_neighborhood(&set, 1, 1, 0.0).unwrap(), vec![0, 1, 2]);
    }
}
