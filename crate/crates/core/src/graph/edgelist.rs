//! Plain-text edge lists: one `src dst weight` triple per line, `#` comments,
//! optional `N <count>` header. Without the header the node count is the
//! largest index plus one. Entries land at `[S]_{dst,src}`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::gso::{Edge, GraphShiftOperator};

pub fn parse_edge_list(text: &str) -> Result<(Vec<Edge>, usize)> {
    let mut edges = Vec::new();
    let mut declared: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::Format(format!("line {}: {what}: {raw:?}", lineno + 1));
        if fields[0] == "N" {
            if fields.len() != 2 || declared.is_some() {
                return Err(bad("malformed node-count header"));
            }
            declared = Some(fields[1].parse().map_err(|_| bad("node count is not an integer"))?);
            continue;
        }
        if fields.len() != 3 {
            return Err(bad("expected `src dst weight`"));
        }
        let src: usize = fields[0].parse().map_err(|_| bad("bad source index"))?;
        let dst: usize = fields[1].parse().map_err(|_| bad("bad destination index"))?;
        let w: f64 = fields[2].parse().map_err(|_| bad("bad weight"))?;
        edges.push((src, dst, w));
    }
    let inferred = edges.iter().map(|&(s, d, _)| s.max(d) + 1).max().unwrap_or(0);
    let n = declared.unwrap_or(inferred);
    if n == 0 {
        return Err(Error::Format("edge list declares no nodes".into()));
    }
    Ok((edges, n))
}

pub fn read_edge_list(path: &Path, symmetrize: bool) -> Result<GraphShiftOperator> {
    let text = std::fs::read_to_string(path)?;
    let (edges, n) = parse_edge_list(&text)?;
    GraphShiftOperator::from_edge_list(&edges, n, symmetrize)
}

/// Serializes the operator's nonzero entries with an explicit node-count header.
/// Weights use the shortest round-trip decimal form.
pub fn format_edge_list(gso: &GraphShiftOperator) -> String {
    let mut out = String::new();
    writeln!(out, "# src dst weight; entry stored at S[dst][src]").unwrap();
    writeln!(out, "N {}", gso.n_nodes()).unwrap();
    for (dst, src, w) in gso.entries() {
        writeln!(out, "{src} {dst} {w}").unwrap();
    }
    out
}

pub fn write_edge_list(path: &Path, gso: &GraphShiftOperator) -> Result<()> {
    std::fs::write(path, format_edge_list(gso))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_and_inference() {
        let (e, n) = parse_edge_list("# cycle\n0 1 1\n1 2 0.5 # trailing\n\n").unwrap();
        assert_eq!(n, 3);
        assert_eq!(e, vec![(0, 1, 1.0), (1, 2, 0.5)]);
        let (_, n) = parse_edge_list("N 7\n0 1 1\n").unwrap();
        assert_eq!(n, 7);
        assert!(parse_edge_list("0 1\n").is_err());
        assert!(parse_edge_list("a 1 1\n").is_err());
        assert!(parse_edge_list("").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let g = crate::graph::sbm::sbm_generate(20, 2, 0.7, 0.1, 5).unwrap();
        let s = g.gso.scale_by_spectral_radius().unwrap();
        let (edges, n) = parse_edge_list(&format_edge_list(&s)).unwrap();
        let back = GraphShiftOperator::from_edge_list(&edges, n, false).unwrap();
        assert_eq!(back.to_dense(), s.to_dense());
    }
}
