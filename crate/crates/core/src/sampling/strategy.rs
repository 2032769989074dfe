//! Node selection strategies. Each strategy produces a ranking of nodes; a
//! plan keeps the first `N_l` ranked nodes at layer `l`, which makes the
//! layers nested by construction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::gso::GraphShiftOperator;
use crate::graph::spectral::{frequency_ordered_eigenbasis, symmetric_eigen};
use crate::sampling::plan::NodeSelectionPlan;

/// Scores closer than this are ties, resolved toward the lower node index.
const TIE_TOL: f64 = 1e-10;

/// Ordered candidate nodes produced by a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub order: Vec<usize>,
    /// When set, each layer lists its nodes in ranking order; otherwise by
    /// ascending node index.
    pub keep_rank_order: bool,
}

pub trait SelectionStrategy {
    /// The best `count` nodes, best first.
    fn rank(&self, gso: &GraphShiftOperator, count: usize) -> Result<Ranking>;
}

/// Ranks by weighted degree.
#[derive(Debug, Clone, Copy, Default)]
pub struct DegreeStrategy;

/// Experimentally designed sampling: leverage scores of the `n_basis`
/// lowest-frequency eigenvectors. Each pick deflates the remaining rows
/// against the rows already chosen (pivoted leverage), so redundant nodes,
/// such as equivalent nodes of one component, are not picked twice.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdsStrategy {
    /// Defaults to the first-layer node count.
    pub n_basis: Option<usize>,
}

/// Greedy spectral-proxy selection with `(S^k)^T S^k` restricted to the
/// unselected nodes.
#[derive(Debug, Clone, Copy)]
pub struct SpectralProxyStrategy {
    pub proxy_order: usize,
}

impl Default for SpectralProxyStrategy {
    fn default() -> Self {
        SpectralProxyStrategy { proxy_order: 2 }
    }
}

/// Runtime-selectable strategy, as named in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Degree,
    Eds,
    Sp,
}

impl std::str::FromStr for SamplingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree" => Ok(SamplingKind::Degree),
            "eds" => Ok(SamplingKind::Eds),
            "sp" => Ok(SamplingKind::Sp),
            other => Err(Error::Config(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for SamplingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingKind::Degree => "degree",
            SamplingKind::Eds => "eds",
            SamplingKind::Sp => "sp",
        })
    }
}

/// Picks the highest score among `candidates`, ties to the lowest index.
fn argmax_low_index(candidates: impl Iterator<Item = usize>, score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let s = score(i);
        best = match best {
            None => Some((i, s)),
            Some((b, bs)) => {
                let scale = bs.abs().max(s.abs()).max(1.0);
                if s > bs + TIE_TOL * scale || ((s - bs).abs() <= TIE_TOL * scale && i < b) {
                    Some((i, s))
                } else {
                    Some((b, bs))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

fn top_k_by_score(scores: &[f64], count: usize) -> Vec<usize> {
    let mut taken = vec![false; scores.len()];
    let mut order = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = argmax_low_index((0..scores.len()).filter(|&i| !taken[i]), |i| scores[i]).unwrap();
        taken[pick] = true;
        order.push(pick);
    }
    order
}

fn check_count(gso: &GraphShiftOperator, count: usize) -> Result<()> {
    if count == 0 || count > gso.n_nodes() {
        return Err(Error::invalid(format!(
            "cannot select {count} of {} nodes",
            gso.n_nodes()
        )));
    }
    Ok(())
}

impl SelectionStrategy for DegreeStrategy {
    fn rank(&self, gso: &GraphShiftOperator, count: usize) -> Result<Ranking> {
        check_count(gso, count)?;
        Ok(Ranking { order: top_k_by_score(&gso.degrees(), count), keep_rank_order: false })
    }
}

impl SelectionStrategy for EdsStrategy {
    fn rank(&self, gso: &GraphShiftOperator, count: usize) -> Result<Ranking> {
        check_count(gso, count)?;
        let n_basis = self.n_basis.unwrap_or(count);
        if n_basis < count || n_basis > gso.n_nodes() {
            return Err(Error::invalid(format!(
                "EDS basis size {n_basis} must lie in [{count}, {}]",
                gso.n_nodes()
            )));
        }
        let basis = frequency_ordered_eigenbasis(gso)?;
        let n = gso.n_nodes();
        // rows[i] = node i's coordinates in the truncated eigenbasis
        let mut rows: Vec<Vec<f64>> =
            (0..n).map(|i| basis.vectors[..n_basis].iter().map(|v| v[i]).collect()).collect();
        let mut taken = vec![false; n];
        let mut order = Vec::with_capacity(count);
        for _ in 0..count {
            let energy = |i: usize| rows[i].iter().map(|x| x * x).sum::<f64>();
            let pick = argmax_low_index((0..n).filter(|&i| !taken[i]), energy).unwrap();
            taken[pick] = true;
            order.push(pick);
            let norm = energy(pick).sqrt();
            if norm <= TIE_TOL {
                continue;
            }
            let dir: Vec<f64> = rows[pick].iter().map(|x| x / norm).collect();
            for (i, row) in rows.iter_mut().enumerate() {
                if taken[i] {
                    continue;
                }
                let proj: f64 = row.iter().zip(&dir).map(|(a, b)| a * b).sum();
                row.iter_mut().zip(&dir).for_each(|(a, b)| *a -= proj * b);
            }
        }
        Ok(Ranking { order, keep_rank_order: false })
    }
}

impl SelectionStrategy for SpectralProxyStrategy {
    fn rank(&self, gso: &GraphShiftOperator, count: usize) -> Result<Ranking> {
        check_count(gso, count)?;
        if self.proxy_order == 0 {
            return Err(Error::invalid("spectral proxy order must be >= 1"));
        }
        if !gso.is_symmetric(1e-12) {
            return Err(Error::invalid("spectral proxies require a symmetric operator"));
        }
        let n = gso.n_nodes();
        let s = DMatrix::from_row_slice(n, n, &gso.to_dense());
        let mut sk = DMatrix::identity(n, n);
        for _ in 0..self.proxy_order {
            sk = &sk * &s;
        }
        let gram = sk.transpose() * &sk;
        let mut selected: Vec<usize> = Vec::with_capacity(count);
        let mut taken = vec![false; n];
        while selected.len() < count {
            let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            let sub = DMatrix::from_fn(rest.len(), rest.len(), |a, b| gram[(rest[a], rest[b])]);
            let eig = symmetric_eigen(sub)?;
            // energy in the whole minimum eigenspace, so degenerate minima stay basis-independent
            let lo = eig.values[0];
            let tol = 1e-9 * eig.values.last().unwrap().abs().max(1.0);
            let mut energy = vec![0.0; rest.len()];
            for (val, vec) in eig.values.iter().zip(&eig.vectors) {
                if val - lo > tol {
                    break;
                }
                energy.iter_mut().zip(vec).for_each(|(e, x)| *e += x * x);
            }
            let pos = argmax_low_index(0..rest.len(), |a| energy[a]).unwrap();
            taken[rest[pos]] = true;
            selected.push(rest[pos]);
        }
        Ok(Ranking { order: selected, keep_rank_order: true })
    }
}

/// Nested plan keeping the top `counts[l]` ranked nodes at layer `l + 1`.
pub fn build_plan(
    strategy: &dyn SelectionStrategy,
    gso: &GraphShiftOperator,
    counts: &[usize],
) -> Result<NodeSelectionPlan> {
    if counts.is_empty() {
        return Err(Error::invalid("plan needs at least one layer count"));
    }
    if counts.contains(&0) || counts.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid(format!("layer counts must be positive and nonincreasing: {counts:?}")));
    }
    let ranking = strategy.rank(gso, counts[0])?;
    let layers = counts
        .iter()
        .map(|&c| {
            let mut layer = ranking.order[..c].to_vec();
            if !ranking.keep_rank_order {
                layer.sort_unstable();
            }
            layer
        })
        .collect();
    NodeSelectionPlan::from_layers(gso.n_nodes(), layers)
}

pub fn select_by_degree(gso: &GraphShiftOperator, counts: &[usize]) -> Result<NodeSelectionPlan> {
    build_plan(&DegreeStrategy, gso, counts)
}

pub fn select_by_eds(gso: &GraphShiftOperator, counts: &[usize], n_basis: Option<usize>) -> Result<NodeSelectionPlan> {
    build_plan(&EdsStrategy { n_basis }, gso, counts)
}

pub fn select_by_spectral_proxies(
    gso: &GraphShiftOperator,
    counts: &[usize],
    proxy_order: usize,
) -> Result<NodeSelectionPlan> {
    build_plan(&SpectralProxyStrategy { proxy_order }, gso, counts)
}

/// Dispatches on a configured strategy name.
pub fn select(
    kind: SamplingKind,
    gso: &GraphShiftOperator,
    counts: &[usize],
    n_basis: Option<usize>,
    proxy_order: usize,
) -> Result<NodeSelectionPlan> {
    match kind {
        SamplingKind::Degree => select_by_degree(gso, counts),
        SamplingKind::Eds => select_by_eds(gso, counts, n_basis),
        SamplingKind::Sp => select_by_spectral_proxies(gso, counts, proxy_order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undirected(edges: &[(usize, usize)], n: usize) -> GraphShiftOperator {
        let e: Vec<_> = edges.iter().flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)]).collect();
        GraphShiftOperator::from_edge_list(&e, n, false).unwrap()
    }

    fn cycle4() -> GraphShiftOperator {
        GraphShiftOperator::from_edge_list(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)], 4, false)
            .unwrap()
    }

    #[test]
    fn degree_picks_star_center() {
        let star = undirected(&[(0, 1), (0, 2), (0, 3)], 4);
        let plan = select_by_degree(&star, &[1]).unwrap();
        assert_eq!(plan.selected(1).unwrap(), vec![0]);
    }

    #[test]
    fn degree_ties_go_low() {
        let plan = select_by_degree(&cycle4(), &[2]).unwrap();
        assert_eq!(plan.selected(1).unwrap(), vec![0, 1]);
    }

    #[test]
    fn full_count_is_identity_plan() {
        let g = undirected(&[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)], 4);
        let plan = select_by_degree(&g, &[4]).unwrap();
        assert_eq!(plan.sampling_matrix(1).unwrap(), crate::sampling::SelectionMatrix::identity(4));
    }

    #[test]
    fn counts_validated() {
        let g = cycle4();
        assert!(select_by_degree(&g, &[5]).is_err());
        assert!(select_by_degree(&g, &[2, 3]).is_err());
        assert!(select_by_degree(&g, &[0]).is_err());
        assert!(select_by_degree(&g, &[]).is_err());
    }

    #[test]
    fn eds_full_basis_is_index_order() {
        let g = undirected(&[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)], 5);
        let r = EdsStrategy { n_basis: Some(5) }.rank(&g, 5).unwrap();
        assert_eq!(r.order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn eds_single_edge_ties_low() {
        let g = undirected(&[(0, 1)], 2);
        let plan = select_by_eds(&g, &[1], Some(1)).unwrap();
        assert_eq!(plan.selected(1).unwrap(), vec![0]);
    }

    #[test]
    fn eds_two_triangles_one_per_component() {
        let g = undirected(&[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 6);
        let l = g.normalized_laplacian().unwrap();
        let plan = select_by_eds(&l, &[2], Some(2)).unwrap();
        let picked = plan.selected(1).unwrap();
        assert!(picked[0] < 3 && picked[1] >= 3, "{picked:?}");
    }

    #[test]
    fn eds_rejects_asymmetric_and_small_basis() {
        assert!(select_by_eds(&cycle4(), &[1], None).is_err());
        let g = undirected(&[(0, 1), (1, 2)], 3);
        assert!(select_by_eds(&g, &[2], Some(1)).is_err());
    }

    #[test]
    fn sp_single_edge_and_full() {
        let g = undirected(&[(0, 1)], 2);
        let plan = select_by_spectral_proxies(&g, &[1], 2).unwrap();
        assert_eq!(plan.selected(1).unwrap(), vec![0]);

        let g = undirected(&[(0, 1), (1, 2), (2, 3), (3, 4)], 5)
            .scale_by_spectral_radius()
            .unwrap();
        let plan = select_by_spectral_proxies(&g, &[5], 2).unwrap();
        let mut all = plan.selected(1).unwrap();
        assert!(plan.sampling_matrix(1).unwrap().satisfies_selection_law());
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sp_path5_golden() {
        // greedy order from an independent dense numpy eigensolve of the same rule
        let g = undirected(&[(0, 1), (1, 2), (2, 3), (3, 4)], 5)
            .scale_by_spectral_radius()
            .unwrap();
        let plan = select_by_spectral_proxies(&g, &[2], 2).unwrap();
        assert_eq!(plan.selected(1).unwrap(), vec![0, 4]);
        let r = SpectralProxyStrategy { proxy_order: 2 }.rank(&g, 5).unwrap();
        assert_eq!(r.order, vec![0, 4, 1, 3, 2]);
    }

    #[test]
    fn sp_nested_layers_keep_greedy_prefix() {
        let g = crate::graph::sbm::sbm_generate(30, 3, 0.6, 0.1, 2).unwrap().gso;
        let plan = select_by_spectral_proxies(&g, &[8, 4, 4], 2).unwrap();
        let l1 = plan.selected(1).unwrap();
        assert_eq!(plan.selected(2).unwrap(), l1[..4].to_vec());
        assert_eq!(plan.selected(3).unwrap(), l1[..4].to_vec());
    }

    #[test]
    fn sampling_kind_parses() {
        assert_eq!("sp".parse::<SamplingKind>().unwrap(), SamplingKind::Sp);
        assert!("random".parse::<SamplingKind>().is_err());
    }
}
