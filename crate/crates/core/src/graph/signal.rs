use crate::error::{Error, Result};

/// `F` feature rows over `N` nodes, stored row-major (`values[f * N + n]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal {
    n_features: usize,
    n_nodes: usize,
    values: Vec<f64>,
}

impl GraphSignal {
    pub fn new(n_features: usize, n_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if n_features == 0 || n_nodes == 0 {
            return Err(Error::invalid("graph signal needs at least one feature and one node"));
        }
        if values.len() != n_features * n_nodes {
            return Err(Error::dim(format!(
                "{} values for a {n_features}x{n_nodes} signal",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("signal entry {i}")));
        }
        Ok(GraphSignal { n_features, n_nodes, values })
    }

    /// Single-feature signal.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(1, n, values)
    }

    pub fn zeros(n_features: usize, n_nodes: usize) -> Self {
        GraphSignal { n_features, n_nodes, values: vec![0.0; n_features * n_nodes] }
    }

    /// Kronecker delta at `node`.
    pub fn impulse(n_nodes: usize, node: usize) -> Self {
        let mut s = Self::zeros(1, n_nodes);
        s.values[node] = 1.0;
        s
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn feature(&self, f: usize) -> &[f64] {
        &self.values[f * self.n_nodes..(f + 1) * self.n_nodes]
    }

    pub(crate) fn feature_mut(&mut self, f: usize) -> &mut [f64] {
        &mut self.values[f * self.n_nodes..(f + 1) * self.n_nodes]
    }
}
