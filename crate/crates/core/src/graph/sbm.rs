use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::gso::{GraphShiftOperator, GsoVariant};
use crate::rng;

pub const MAX_CONNECT_ATTEMPTS: u64 = 100;

/// A stochastic block model draw: the adjacency operator and the community of each node.
#[derive(Debug, Clone)]
pub struct SbmGraph {
    pub gso: GraphShiftOperator,
    pub communities: Vec<usize>,
}

/// Undirected, unweighted SBM with equal contiguous communities
/// (node `i` belongs to community `i / (n_nodes / n_communities)`).
///
/// Disconnected draws are discarded and regenerated from a derived seed.
pub fn sbm_generate(
    n_nodes: usize,
    n_communities: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<SbmGraph> {
    if n_communities == 0 || n_nodes == 0 || !n_nodes.is_multiple_of(n_communities) {
        return Err(Error::invalid(format!(
            "{n_nodes} nodes cannot be split into {n_communities} equal communities"
        )));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::invalid(format!("need 0 <= p_out <= p_in <= 1, got {p_out}, {p_in}")));
    }
    let size = n_nodes / n_communities;
    let communities: Vec<usize> = (0..n_nodes).map(|i| i / size).collect();
    for attempt in 0..MAX_CONNECT_ATTEMPTS {
        let mut r = rng::seeded(rng::derive_seed(seed, &[attempt]));
        let mut triplets = Vec::new();
        for i in 0..n_nodes {
            for j in i + 1..n_nodes {
                let p = if communities[i] == communities[j] { p_in } else { p_out };
                if r.random::<f64>() < p {
                    triplets.push((i, j, 1.0));
                    triplets.push((j, i, 1.0));
                }
            }
        }
        let gso = GraphShiftOperator::from_triplets(n_nodes, triplets, GsoVariant::RawAdjacency);
        if is_connected(&gso) {
            return Ok(SbmGraph { gso, communities });
        }
    }
    Err(Error::Convergence("connected SBM resampling", MAX_CONNECT_ATTEMPTS as usize))
}

/// Weak connectivity by breadth-first search over both edge directions.
pub fn is_connected(gso: &GraphShiftOperator) -> bool {
    let n = gso.n_nodes();
    let mut adj = vec![Vec::new(); n];
    for (r, c, _) in gso.entries() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Largest-degree node of each community, ties to the lowest index.
pub fn community_hubs(gso: &GraphShiftOperator, communities: &[usize]) -> Vec<usize> {
    let deg = gso.degrees();
    let n_comm = communities.iter().copied().max().map_or(0, |m| m + 1);
    let mut best: Vec<Option<usize>> = vec![None; n_comm];
    for (node, &c) in communities.iter().enumerate() {
        match best[c] {
            Some(b) if deg[b] >= deg[node] => {}
            _ => best[c] = Some(node),
        }
    }
    best.into_iter().flatten().collect()
}
