//! Benchmark metrics and their text form.
//!
//! A report has three sections: `[metrics]` with one `key=value` per line,
//! `[table]` with a human-readable summary, and `[config]` echoing the
//! resolved configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::train::TrainingTrace;

/// Outcome of one (graph, realization) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub graph: usize,
    pub realization: usize,
    pub accuracy: f64,
    pub test_loss: f64,
    pub trace: TrainingTrace,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub architecture: String,
    pub sampling: String,
    /// Sorted by graph, then realization.
    pub cells: Vec<CellResult>,
    /// Mean accuracy of each graph over its realizations.
    pub graph_means: Vec<f64>,
    /// Mean of the graph means.
    pub mean_accuracy: f64,
    /// Population standard deviation of the graph means.
    pub std_accuracy: f64,
    pub wall_clock_seconds: f64,
    pub config_echo: String,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricsReport {
    pub fn from_cells(
        architecture: impl Into<String>,
        sampling: impl Into<String>,
        mut cells: Vec<CellResult>,
        wall_clock_seconds: f64,
        config_echo: String,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("report needs at least one cell"));
        }
        if let Some(c) = cells.iter().find(|c| !(0.0..=1.0).contains(&c.accuracy)) {
            return Err(Error::invalid(format!("accuracy {} outside [0, 1]", c.accuracy)));
        }
        cells.sort_by_key(|c| (c.graph, c.realization));
        let mut per_graph: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for c in &cells {
            per_graph.entry(c.graph).or_default().push(c.accuracy);
        }
        let graph_means: Vec<f64> = per_graph.values().map(|a| mean_std(a).0).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&graph_means);
        Ok(MetricsReport {
            architecture: architecture.into(),
            sampling: sampling.into(),
            cells,
            graph_means,
            mean_accuracy,
            std_accuracy,
            wall_clock_seconds,
            config_echo,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[metrics]\n");
        let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "{k}={v}").unwrap();
        kv("architecture", &self.architecture);
        kv("sampling", &self.sampling);
        kv("n_cells", &self.cells.len());
        kv("n_graphs", &self.graph_means.len());
        kv("mean_accuracy", &self.mean_accuracy);
        kv("std_accuracy", &self.std_accuracy);
        kv("wall_clock_seconds", &self.wall_clock_seconds);
        let graphs: Vec<usize> = {
            let mut g: Vec<usize> = self.cells.iter().map(|c| c.graph).collect();
            g.dedup();
            g
        };
        for (g, m) in graphs.iter().zip(&self.graph_means) {
            kv(&format!("graph.{g}.mean_accuracy"), m);
        }
        for c in &self.cells {
            let p = format!("cell.{}.{}", c.graph, c.realization);
            kv(&format!("{p}.accuracy"), &c.accuracy);
            kv(&format!("{p}.test_loss"), &c.test_loss);
            kv(&format!("{p}.steps"), &c.trace.steps());
            if let (Some(first), Some(last)) = (c.trace.train_loss.first(), c.trace.train_loss.last()) {
                kv(&format!("{p}.initial_train_loss"), first);
                kv(&format!("{p}.final_train_loss"), last);
            }
            if let Some((_, v)) = c.trace.validation_loss.last() {
                kv(&format!("{p}.final_validation_loss"), v);
            }
            kv(&format!("{p}.seconds"), &c.seconds);
        }
        out.push_str("\n[table]\n");
        writeln!(out, "{:>5} {:>11} {:>9} {:>10} {:>9}", "graph", "realization", "accuracy", "test_loss", "seconds")
            .unwrap();
        for c in &self.cells {
            writeln!(
                out,
                "{:>5} {:>11} {:>8.1}% {:>10.4} {:>9.1}",
                c.graph,
                c.realization,
                100.0 * c.accuracy,
                c.test_loss,
                c.seconds
            )
            .unwrap();
        }
        writeln!(
            out,
            "{} / {}: {:.1} (+-{:.1})% over {} graphs, {:.1} s",
            self.architecture,
            self.sampling,
            100.0 * self.mean_accuracy,
            100.0 * self.std_accuracy,
            self.graph_means.len(),
            self.wall_clock_seconds
        )
        .unwrap();
        out.push_str("\n[config]\n");
        out.push_str(&self.config_echo);
        out
    }
}

/// `key=value` pairs of the `[metrics]` section of a report.
pub fn parse_metrics(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut inside = false;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('[') && line.ends_with(']') {
            inside = line == "[metrics]";
            continue;
        }
        if !inside || line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("bad metrics line {line:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    if map.is_empty() {
        return Err(Error::Format("report has no [metrics] section".into()));
    }
    Ok(map)
}

/// Loss trace as text: `[train]` lines `step loss` (1-based), then
/// `[validation]` lines `step loss` (0 is before the first update).
pub fn format_trace(trace: &TrainingTrace) -> String {
    let mut out = String::from("[train]\n");
    for (i, l) in trace.train_loss.iter().enumerate() {
        writeln!(out, "{} {l}", i + 1).unwrap();
    }
    out.push_str("[validation]\n");
    for (s, l) in &trace.validation_loss {
        writeln!(out, "{s} {l}").unwrap();
    }
    out
}

pub fn parse_trace(text: &str) -> Result<TrainingTrace> {
    let mut trace = TrainingTrace::default();
    let mut section = "";
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line == "[train]" || line == "[validation]" {
            section = line;
            continue;
        }
        let bad = || Error::Format(format!("bad trace line {line:?}"));
        let (s, l) = line.split_once(' ').ok_or_else(bad)?;
        let step: usize = s.parse().map_err(|_| bad())?;
        let loss: f64 = l.trim().parse().map_err(|_| bad())?;
        match section {
            "[train]" => {
                if step != trace.train_loss.len() + 1 {
                    return Err(bad());
                }
                trace.train_loss.push(loss);
            }
            "[validation]" => trace.validation_loss.push((step, loss)),
            _ => return Err(bad()),
        }
    }
    Ok(trace)
}
