//! Eigenvalue utilities used for normalization and node-selection scores.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::gso::GraphShiftOperator;

pub const POWER_ITERATION_MAX: usize = 10_000;
const POWER_ITERATION_TOL: f64 = 1e-12;

/// Largest eigenvalue modulus by power iteration on the norm ratio `|S v| / |v|`.
///
/// Nonnegative operators are shifted by `c I` (Perron-Frobenius gives
/// `rho(S + cI) = rho(S) + c`), which separates the dominant eigenvalue from
/// others of equal modulus, e.g. on cycles and bipartite graphs.
pub fn spectral_radius(gso: &GraphShiftOperator) -> Result<f64> {
    let n = gso.n_nodes();
    if gso.nnz() == 0 {
        return Ok(0.0);
    }
    let shift = if gso.has_negative_weights() {
        0.0
    } else if is_acyclic(gso) {
        // a nonnegative matrix with an acyclic support is nilpotent
        return Ok(0.0);
    } else {
        let max_row: f64 = (0..n)
            .map(|r| gso.row(r).1.iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        0.5 * max_row
    };
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * (i as f64 + 1.0) / n as f64).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    for _ in 0..POWER_ITERATION_MAX {
        gso.shift_into(&v, &mut w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return Ok(0.0);
        }
        let rho = norm - shift;
        std::mem::swap(&mut v, &mut w);
        if (rho - prev).abs() <= POWER_ITERATION_TOL * rho.abs().max(f64::MIN_POSITIVE) {
            return Ok(rho.max(0.0));
        }
        prev = rho;
    }
    Err(Error::Convergence("power iteration", POWER_ITERATION_MAX))
}

/// Kahn's algorithm over the support of `S`.
fn is_acyclic(gso: &GraphShiftOperator) -> bool {
    let n = gso.n_nodes();
    let mut indegree = vec![0usize; n];
    for (r, c, w) in gso.entries() {
        if w != 0.0 {
            if r == c {
                return false;
            }
            indegree[c] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut seen = 0;
    while let Some(r) = stack.pop() {
        seen += 1;
        let (cols, weights) = gso.row(r);
        for (&c, &w) in cols.iter().zip(weights) {
            if w != 0.0 && c != r {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    stack.push(c);
                }
            }
        }
    }
    seen == n
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Orthonormal eigenpairs of a symmetric operator.
#[derive(Debug, Clone)]
pub struct Eigenbasis {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Eigendecomposition of a symmetric operator, ordered from low to high graph
/// frequency for its variant.
pub fn frequency_ordered_eigenbasis(gso: &GraphShiftOperator) -> Result<Eigenbasis> {
    if !gso.is_symmetric(1e-12) {
        return Err(Error::invalid("eigenbasis requires a symmetric operator"));
    }
    let n = gso.n_nodes();
    let dense = DMatrix::from_row_slice(n, n, &gso.to_dense());
    let mut basis = symmetric_eigen(dense)?;
    if !gso.variant().low_frequency_first_is_ascending() {
        basis.values.reverse();
        basis.vectors.reverse();
    }
    Ok(basis)
}

/// Eigenpairs of a dense symmetric matrix in ascending eigenvalue order.
pub(crate) fn symmetric_eigen(m: DMatrix<f64>) -> Result<Eigenbasis> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or(Error::Convergence("symmetric eigensolver", 0))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    Ok(Eigenbasis { values, vectors })
}
