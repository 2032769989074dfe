use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::gso::{GraphShiftOperator, GsoVariant};
use crate::graph::signal::GraphSignal;
use crate::rng;

/// Graph signals with class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub signals: Vec<GraphSignal>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn new(signals: Vec<GraphSignal>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if signals.len() != labels.len() {
            return Err(Error::dim(format!("{} signals, {} labels", signals.len(), labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!("label {l} outside {n_classes} classes")));
        }
        if let Some(first) = signals.first() {
            let shape = (first.n_features(), first.n_nodes());
            if signals.iter().any(|s| (s.n_features(), s.n_nodes()) != shape) {
                return Err(Error::dim("signals in a dataset must share one shape"));
            }
        }
        Ok(LabeledDataset { signals, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }
}

/// Samples `(S^t delta_c, index of c in source_nodes)` with `c` uniform over
/// `source_nodes` and `t` uniform over `0..max_t`.
pub fn diffuse_source_dataset(
    gso: &GraphShiftOperator,
    source_nodes: &[usize],
    max_t: usize,
    n_samples: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if gso.variant() != GsoVariant::ScaledAdjacency {
        return Err(Error::invalid("diffusion datasets need a spectrally scaled adjacency"));
    }
    if source_nodes.is_empty() || max_t == 0 {
        return Err(Error::invalid("need at least one source and max_t >= 1"));
    }
    let n = gso.n_nodes();
    if let Some(&c) = source_nodes.iter().find(|&&c| c >= n) {
        return Err(Error::invalid(format!("source node {c} out of range for {n} nodes")));
    }
    let diffusions: Vec<Vec<GraphSignal>> = source_nodes
        .iter()
        .map(|&c| gso.shift_sequence(&GraphSignal::impulse(n, c), max_t))
        .collect::<Result<_>>()?;
    let mut r = rng::seeded(seed);
    let mut signals = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let class = r.random_range(0..source_nodes.len());
        let t = r.random_range(0..max_t);
        signals.push(diffusions[class][t].clone());
        labels.push(class);
    }
    LabeledDataset::new(signals, labels, source_nodes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled_cycle() -> GraphShiftOperator {
        GraphShiftOperator::from_edge_list(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)], 4, false)
            .unwrap()
            .scale_by_spectral_radius()
            .unwrap()
    }

    #[test]
    fn zero_time_is_impulse() {
        let s = scaled_cycle();
        let d = diffuse_source_dataset(&s, &[1, 3], 1, 50, 9).unwrap();
        for (x, &l) in d.signals.iter().zip(&d.labels) {
            assert_eq!(x, &GraphSignal::impulse(4, [1, 3][l]));
        }
    }

    #[test]
    fn cycle_diffusion_is_rotation() {
        let s = scaled_cycle();
        let d = diffuse_source_dataset(&s, &[0], 3, 200, 4).unwrap();
        let mut saw_two = false;
        for x in &d.signals {
            let hot = x.values().iter().position(|&v| v > 0.5).unwrap();
            if hot == 2 {
                saw_two = true;
                // t = 2 from node 0 on the 4-cycle lands on node 2
                assert!((x.values()[2] - 1.0).abs() < 1e-9);
            }
        }
        assert!(saw_two);
    }

    #[test]
    fn balanced_classes() {
        // multinomial(10000, 1/5): sd = 40, so [1800, 2200] is a 5-sigma band
        let g = crate::graph::sbm::sbm_generate(100, 5, 0.8, 0.2, 1).unwrap();
        let s = g.gso.scale_by_spectral_radius().unwrap();
        let src = crate::graph::sbm::community_hubs(&g.gso, &g.communities);
        let d = diffuse_source_dataset(&s, &src, 25, 10_000, 2).unwrap();
        for c in d.class_counts() {
            assert!((1800..=2200).contains(&c), "class count {c}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = scaled_cycle();
        assert!(diffuse_source_dataset(&s, &[4], 3, 10, 0).is_err());
        assert!(diffuse_source_dataset(&s, &[], 3, 10, 0).is_err());
        let raw = GraphShiftOperator::from_edge_list(&[(0, 1, 1.0)], 2, false).unwrap();
        assert!(diffuse_source_dataset(&raw, &[0], 3, 10, 0).is_err());
    }
}
