use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Dense binary matrix whose rows select entries of a longer vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl SelectionMatrix {
    /// Row `m` has its single one at column `picks[m]`.
    pub fn from_picks(picks: &[usize], cols: usize) -> Result<Self> {
        let mut data = vec![0u8; picks.len() * cols];
        for (m, &c) in picks.iter().enumerate() {
            if c >= cols {
                return Err(Error::invalid(format!("pick {c} out of range for {cols} columns")));
            }
            data[m * cols + c] = 1;
        }
        Ok(SelectionMatrix { rows: picks.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_picks(&(0..n).collect::<Vec<_>>(), n).unwrap()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    /// Binary entries, every row sums to one, every column sums to at most one.
    pub fn satisfies_selection_law(&self) -> bool {
        let binary = self.data.iter().all(|&v| v <= 1);
        let rows_ok = (0..self.rows)
            .all(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().map(|&v| v as usize).sum::<usize>() == 1);
        let cols_ok = (0..self.cols).all(|c| (0..self.rows).map(|r| self.get(r, c) as usize).sum::<usize>() <= 1);
        binary && rows_ok && cols_ok
    }

    /// Column index of the one in each row, when the selection law holds.
    pub fn picks(&self) -> Result<Vec<usize>> {
        if !self.satisfies_selection_law() {
            return Err(Error::invalid("matrix violates the selection law"));
        }
        Ok((0..self.rows)
            .map(|r| (0..self.cols).find(|&c| self.get(r, c) == 1).unwrap())
            .collect())
    }

    /// Integer matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &SelectionMatrix) -> Result<SelectionMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::dim(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut data = vec![0u8; self.rows * rhs.cols];
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) == 0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    data[r * rhs.cols + c] += self.get(r, k) * rhs.get(k, c);
                }
            }
        }
        Ok(SelectionMatrix { rows: self.rows, cols: rhs.cols, data })
    }
}

/// Nested per-layer node subsets of an `N`-node graph.
///
/// Layer 0 is the whole graph; layer `l >= 1` keeps `selected(l)`, an ordered
/// list of original node indices that is a subset of layer `l - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSelectionPlan {
    n_nodes: usize,
    selected: Vec<Vec<usize>>,
}

impl NodeSelectionPlan {
    pub fn from_layers(n_nodes: usize, selected: Vec<Vec<usize>>) -> Result<Self> {
        let mut previous: Vec<bool> = vec![true; n_nodes];
        let mut prev_len = n_nodes;
        for (l, layer) in selected.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::invalid(format!("layer {} selects no nodes", l + 1)));
            }
            if layer.len() > prev_len {
                return Err(Error::invalid(format!("layer {} grows the node count", l + 1)));
            }
            let mut current = vec![false; n_nodes];
            for &v in layer {
                if v >= n_nodes {
                    return Err(Error::invalid(format!("node {v} out of range")));
                }
                if current[v] {
                    return Err(Error::invalid(format!("node {v} selected twice in layer {}", l + 1)));
                }
                if !previous[v] {
                    return Err(Error::invalid(format!(
                        "node {v} in layer {} was dropped by an earlier layer",
                        l + 1
                    )));
                }
                current[v] = true;
            }
            previous = current;
            prev_len = layer.len();
        }
        Ok(NodeSelectionPlan { n_nodes, selected })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of sampling layers `L` (layer 0 excluded).
    pub fn n_layers(&self) -> usize {
        self.selected.len()
    }

    /// `[N_0 = N, N_1, ..., N_L]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.n_nodes).chain(self.selected.iter().map(Vec::len)).collect()
    }

    /// Retained original-node indices at `layer` (layer 0 is every node).
    pub fn selected(&self, layer: usize) -> Result<Vec<usize>> {
        match layer {
            0 => Ok((0..self.n_nodes).collect()),
            l if l <= self.selected.len() => Ok(self.selected[l - 1].clone()),
            l => Err(Error::invalid(format!("layer {l} out of range (plan has {})", self.n_layers()))),
        }
    }

    /// `C_l`: picks the layer-`l` nodes out of the layer-`l-1` ordering.
    pub fn sampling_matrix(&self, layer: usize) -> Result<SelectionMatrix> {
        if layer == 0 || layer > self.n_layers() {
            return Err(Error::invalid(format!("sampling matrix for layer {layer} out of range")));
        }
        let prev = self.selected(layer - 1)?;
        let mut position = vec![usize::MAX; self.n_nodes];
        for (i, &v) in prev.iter().enumerate() {
            position[v] = i;
        }
        let picks: Vec<usize> = self.selected[layer - 1].iter().map(|&v| position[v]).collect();
        SelectionMatrix::from_picks(&picks, prev.len())
    }

    /// `D_l = C_l ... C_1`, locating layer-`l` nodes in the original graph
    /// (`D_0` is the identity).
    pub fn nested_sampling(&self, layer: usize) -> Result<SelectionMatrix> {
        let nodes = self.selected(layer)?;
        SelectionMatrix::from_picks(&nodes, self.n_nodes)
    }

    /// Keeps only the first `layers` sampling layers.
    pub fn truncated(&self, layers: usize) -> NodeSelectionPlan {
        NodeSelectionPlan { n_nodes: self.n_nodes, selected: self.selected[..layers.min(self.n_layers())].to_vec() }
    }

    /// One line per layer with the retained node indices in order, preceded by
    /// a `# nodes <N>` comment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# nodes {}", self.n_nodes).unwrap();
        for layer in &self.selected {
            let line: Vec<String> = layer.iter().map(usize::to_string).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n_nodes = None;
        let mut layers = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("nodes") {
                    let n = parts.next().and_then(|s| s.parse().ok());
                    n_nodes = Some(n.ok_or_else(|| Error::Format("bad `# nodes` header".into()))?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let layer = line
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| Error::Format(format!("bad node index {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            layers.push(layer);
        }
        let n = n_nodes.ok_or_else(|| Error::Format("plan text lacks `# nodes <N>` header".into()))?;
        Self::from_layers(n, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_sampling_composes() {
        let plan = NodeSelectionPlan::from_layers(4, vec![vec![0, 2], vec![0]]).unwrap();
        let d2 = plan.nested_sampling(2).unwrap();
        assert_eq!(d2, SelectionMatrix::from_picks(&[0], 4).unwrap());
        let c1 = plan.sampling_matrix(1).unwrap();
        let c2 = plan.sampling_matrix(2).unwrap();
        assert_eq!(c2.matmul(&c1).unwrap(), d2);
        assert_eq!(plan.nested_sampling(0).unwrap(), SelectionMatrix::identity(4));
        assert!(plan.nested_sampling(3).is_err());
        assert!(plan.sampling_matrix(0).is_err());
    }

    #[test]
    fn identity_layer() {
        let plan = NodeSelectionPlan::from_layers(3, vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(plan.sampling_matrix(1).unwrap(), SelectionMatrix::identity(3));
        assert_eq!(plan.nested_sampling(1).unwrap(), SelectionMatrix::identity(3));
    }

    #[test]
    fn rejects_non_nested_and_duplicates() {
        assert!(NodeSelectionPlan::from_layers(4, vec![vec![0, 1], vec![2]]).is_err());
        assert!(NodeSelectionPlan::from_layers(4, vec![vec![0, 0]]).is_err());
        assert!(NodeSelectionPlan::from_layers(4, vec![vec![4]]).is_err());
        assert!(NodeSelectionPlan::from_layers(4, vec![vec![1], vec![1, 2]]).is_err());
        assert!(NodeSelectionPlan::from_layers(4, vec![vec![]]).is_err());
    }

    #[test]
    fn selection_law_detects_violations() {
        let ok = SelectionMatrix::from_picks(&[2, 0], 3).unwrap();
        assert!(ok.satisfies_selection_law());
        let twice = SelectionMatrix::from_picks(&[1, 1], 3).unwrap();
        assert!(!twice.satisfies_selection_law());
        assert!(twice.picks().is_err());
    }

    #[test]
    fn text_round_trip() {
        let plan = NodeSelectionPlan::from_layers(10, vec![vec![7, 3, 1, 9], vec![3, 9]]).unwrap();
        let text = plan.to_text();
        assert_eq!(text, "# nodes 10\n7 3 1 9\n3 9\n");
        assert_eq!(NodeSelectionPlan::from_text(&text).unwrap(), plan);
        assert!(NodeSelectionPlan::from_text("1 2\n").is_err());
    }
}
