//! Configuration-driven experiments: dataset generation, training,
//! evaluation and the multi-graph source-localization benchmark.
//!
//! Every command reads and writes a single output directory:
//!
//! | file | written by |
//! |------|------------|
//! | `graph.edges`, `sources.txt`, `communities.txt` | generate |
//! | `train.gsd`, `validation.gsd`, `test.gsd` | generate |
//! | `model.ckpt`, `trace.txt`, `plan.txt`, `config.toml` | train |
//! | `report.txt` | evaluate, benchmark |
//! | `cells/g<G>_r<R>.txt`, `cells/g<G>_r<R>.trace` | benchmark |

pub mod config;
pub mod dataset;
pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::aggregation::{AggregationConfig, AggregationGNNModel, MultinodeGNNModel};
use crate::error::{Error, Result};
use crate::graph::edgelist::{read_edge_list, write_edge_list};
use crate::graph::{community_hubs, diffuse_source_dataset, sbm_generate, GraphShiftOperator, GsoVariant, LabeledDataset};
use crate::nn::{load_params, save_params, AdamState, Classifier, ParamStore};
use crate::rng::derive_seed;
use crate::sampling::{select, NodeSelectionPlan};
use crate::selection::SelectionGNNModel;
use crate::train::{evaluate, prepare, train, Evaluation, TrainAbort, TrainingTrace};

pub use config::{Architecture, ExperimentConfig};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use report::{format_trace, mean_std, parse_metrics, parse_trace, CellResult, MetricsReport};

pub const GRAPH_FILE: &str = "graph.edges";
pub const SOURCES_FILE: &str = "sources.txt";
pub const COMMUNITIES_FILE: &str = "communities.txt";
pub const TRAIN_FILE: &str = "train.gsd";
pub const VALIDATION_FILE: &str = "validation.gsd";
pub const TEST_FILE: &str = "test.gsd";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRACE_FILE: &str = "trace.txt";
pub const PLAN_FILE: &str = "plan.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const CELLS_DIR: &str = "cells";

/// Failure of an experiment command.
#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Abort(#[from] TrainAbort),
}

impl ExperimentError {
    /// The underlying error, whether or not training had started.
    pub fn root(&self) -> &Error {
        match self {
            ExperimentError::Core(e) => e,
            ExperimentError::Abort(a) => &a.error,
        }
    }
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Core(Error::Io(e))
    }
}

/// A graph with its diffusion sources, as generated or read from an edge list.
#[derive(Debug, Clone)]
pub struct GraphInstance {
    /// Unnormalized adjacency; the model and diffusion operators derive from it.
    pub adjacency: GraphShiftOperator,
    pub sources: Vec<usize>,
    pub communities: Option<Vec<usize>>,
}

impl GraphInstance {
    /// Draws the SBM (or reads the edge list) with the configured graph seed.
    /// SBM sources default to the highest-degree node of each community.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let g = &config.graph;
        let (adjacency, communities) = match &g.edge_list {
            Some(path) => (read_edge_list(path, g.symmetrize)?, None),
            None => {
                let sbm = sbm_generate(g.n_nodes, g.n_communities, g.p_in, g.p_out, config.seeds.graph)?;
                (sbm.gso, Some(sbm.communities))
            }
        };
        let sources = match (&config.dataset.sources, &communities) {
            (Some(s), _) => s.clone(),
            (None, Some(c)) => community_hubs(&adjacency, c),
            (None, None) => return Err(Error::Config("edge-list graphs need explicit dataset.sources".into())),
        };
        Self::check_sources(&sources, adjacency.n_nodes())?;
        Ok(GraphInstance { adjacency, sources, communities })
    }

    fn check_sources(sources: &[usize], n: usize) -> Result<()> {
        if sources.is_empty() {
            return Err(Error::Config("at least one source node is required".into()));
        }
        if let Some(&s) = sources.iter().find(|&&s| s >= n) {
            return Err(Error::Config(format!("source node {s} out of range for {n} nodes")));
        }
        let mut sorted = sources.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sources.len() {
            return Err(Error::Config("source nodes must be distinct".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.sources.len()
    }

    /// Operator the models run on.
    pub fn model_gso(&self, variant: GsoVariant) -> Result<GraphShiftOperator> {
        match variant {
            GsoVariant::RawAdjacency => Ok(self.adjacency.clone()),
            GsoVariant::ScaledAdjacency => self.adjacency.scale_by_spectral_radius(),
            GsoVariant::NormalizedLaplacian => self.adjacency.normalized_laplacian(),
        }
    }

    /// Writes `graph.edges`, `sources.txt` and, for SBM draws, `communities.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_edge_list(&dir.join(GRAPH_FILE), &self.adjacency)?;
        std::fs::write(dir.join(SOURCES_FILE), index_lines(&self.sources))?;
        if let Some(c) = &self.communities {
            std::fs::write(dir.join(COMMUNITIES_FILE), index_lines(c))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let adjacency = read_edge_list(&dir.join(GRAPH_FILE), false)?;
        let sources = parse_indices(&std::fs::read_to_string(dir.join(SOURCES_FILE))?)?;
        let communities_path = dir.join(COMMUNITIES_FILE);
        let communities = if communities_path.exists() {
            Some(parse_indices(&std::fs::read_to_string(communities_path)?)?)
        } else {
            None
        };
        Self::check_sources(&sources, adjacency.n_nodes()).map_err(|e| Error::Format(e.to_string()))?;
        Ok(GraphInstance { adjacency, sources, communities })
    }
}

fn index_lines(v: &[usize]) -> String {
    v.iter().map(|i| format!("{i}\n")).collect()
}

fn parse_indices(text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad node index {t:?}"))))
        .collect()
}

/// Train, validation and test sets.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

/// Draws one stream of `n_train + n_validation + n_test` diffused impulses with
/// the data seed and cuts it, in order, into the three splits.
pub fn generate_splits(config: &ExperimentConfig, graph: &GraphInstance) -> Result<Splits> {
    let d = &config.dataset;
    let scaled = graph.model_gso(GsoVariant::ScaledAdjacency)?;
    let total = d.n_train + d.n_validation + d.n_test;
    let all = diffuse_source_dataset(&scaled, &graph.sources, d.max_diffusion_time, total, config.seeds.data)?;
    let mut signals = all.signals.into_iter();
    let mut labels = all.labels.into_iter();
    let mut take = |n: usize| {
        LabeledDataset::new(signals.by_ref().take(n).collect(), labels.by_ref().take(n).collect(), all.n_classes)
    };
    Ok(Splits { train: take(d.n_train)?, validation: take(d.n_validation)?, test: take(d.n_test)? })
}

/// Node plan for the configured architecture and sampling strategy. The
/// aggregation architecture keeps the single top-ranked node.
pub fn node_plan(config: &ExperimentConfig, gso: &GraphShiftOperator) -> Result<NodeSelectionPlan> {
    let o = &config.sampling_options;
    select(config.sampling, gso, &config.selection_counts(), o.eds_basis, o.proxy_order)
}

/// Any of the three architectures.
pub enum Model {
    Selection(SelectionGNNModel),
    Aggregation(AggregationGNNModel),
    Multinode(MultinodeGNNModel),
}

macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            Model::Selection($m) => $body,
            Model::Aggregation($m) => $body,
            Model::Multinode($m) => $body,
        }
    };
}

impl Model {
    /// Builds the configured architecture with weights drawn from the init seed.
    pub fn build(
        config: &ExperimentConfig,
        gso: GraphShiftOperator,
        plan: NodeSelectionPlan,
        in_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let seed = config.seeds.init;
        let m = &config.model;
        Ok(match config.architecture {
            Architecture::Selection => {
                let layers = m.selection.layer_configs(in_features);
                Model::Selection(SelectionGNNModel::new(gso, plan, layers, n_classes, seed)?)
            }
            Architecture::Aggregation => {
                let node = plan.selected(1)?[0];
                let agg = AggregationConfig {
                    designated_node: node,
                    sequence_length: m.aggregation.sequence_length,
                    inner_layers: m.aggregation.inner_layers.clone(),
                };
                Model::Aggregation(AggregationGNNModel::new(gso, agg, in_features, n_classes, seed)?)
            }
            Architecture::Multinode => Model::Multinode(MultinodeGNNModel::new(
                gso,
                plan,
                m.multinode.clone(),
                in_features,
                n_classes,
                seed,
            )?),
        })
    }

    pub fn params(&self) -> &ParamStore {
        with_model!(self, m => m.params())
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        with_model!(self, m => m.params_mut())
    }

    /// Trains on `train` (monitoring `validation`) with the configured
    /// optimizer and shuffle seed.
    pub fn fit(
        &mut self,
        config: &ExperimentConfig,
        train_set: &LabeledDataset,
        validation: &LabeledDataset,
    ) -> Result<TrainingTrace, ExperimentError> {
        with_model!(self, m => fit(m, config, train_set, validation))
    }

    pub fn evaluate(&self, test: &LabeledDataset) -> Result<Evaluation> {
        with_model!(self, m => evaluate(m, &prepare(m, test)?))
    }
}

fn fit<M: Classifier>(
    model: &mut M,
    config: &ExperimentConfig,
    train_set: &LabeledDataset,
    validation: &LabeledDataset,
) -> Result<TrainingTrace, ExperimentError> {
    let tr = prepare(model, train_set)?;
    let va = prepare(model, validation)?;
    let mut adam = AdamState::new(config.train.adam, model.params());
    Ok(train(model, &tr, Some(&va), &config.train, &mut adam, config.seeds.shuffle)?)
}

/// Feature count of a split, checked against the graph size.
fn signal_shape(data: &LabeledDataset, n_nodes: usize) -> Result<usize> {
    let first = data.signals.first().ok_or_else(|| Error::invalid("dataset is empty"))?;
    if first.n_nodes() != n_nodes {
        return Err(Error::dim(format!("signals have {} nodes, graph has {n_nodes}", first.n_nodes())));
    }
    Ok(first.n_features())
}

/// Output of [`cmd_generate`].
#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub graph: GraphInstance,
    pub split_sizes: [usize; 3],
}

/// Generates the graph and the three dataset splits into the output directory.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<GenerateSummary> {
    config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let graph = GraphInstance::build(config)?;
    let splits = generate_splits(config, &graph)?;
    graph.save(dir)?;
    save_dataset(&dir.join(TRAIN_FILE), &splits.train)?;
    save_dataset(&dir.join(VALIDATION_FILE), &splits.validation)?;
    save_dataset(&dir.join(TEST_FILE), &splits.test)?;
    Ok(GenerateSummary { graph, split_sizes: [splits.train.len(), splits.validation.len(), splits.test.len()] })
}

/// Output of [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub trace: TrainingTrace,
    pub plan: NodeSelectionPlan,
    pub seconds: f64,
}

/// Trains on the generated splits; writes the checkpoint, the loss trace, the
/// node plan and the resolved configuration. An aborted run still writes the
/// partial trace.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainSummary, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let dir = &config.output_dir;
    let graph = GraphInstance::load(dir)?;
    let train_set = load_dataset(&dir.join(TRAIN_FILE))?;
    let validation = load_dataset(&dir.join(VALIDATION_FILE))?;
    let gso = graph.model_gso(config.graph.gso)?;
    let features = signal_shape(&train_set, gso.n_nodes())?;
    let plan = node_plan(config, &gso)?;
    let mut model = Model::build(config, gso, plan.clone(), features, train_set.n_classes)?;
    std::fs::write(dir.join(PLAN_FILE), plan.to_text())?;
    std::fs::write(dir.join(CONFIG_FILE), config.to_toml())?;
    let trace = match model.fit(config, &train_set, &validation) {
        Ok(t) => t,
        Err(ExperimentError::Abort(a)) => {
            std::fs::write(dir.join(TRACE_FILE), format_trace(&a.trace))?;
            return Err(a.into());
        }
        Err(e) => return Err(e),
    };
    std::fs::write(dir.join(TRACE_FILE), format_trace(&trace))?;
    save_params(&dir.join(CHECKPOINT_FILE), model.params())?;
    Ok(TrainSummary { trace, plan, seconds: start.elapsed().as_secs_f64() })
}

/// Loads the trained checkpoint and reports test accuracy as a one-cell
/// [`MetricsReport`], also written to `report.txt`.
pub fn cmd_evaluate(config: &ExperimentConfig) -> Result<MetricsReport> {
    cmd_evaluate_checkpoint(config, &config.output_dir.join(CHECKPOINT_FILE))
}

pub fn cmd_evaluate_checkpoint(config: &ExperimentConfig, checkpoint: &Path) -> Result<MetricsReport> {
    config.validate()?;
    let start = Instant::now();
    let dir = &config.output_dir;
    let graph = GraphInstance::load(dir)?;
    let test = load_dataset(&dir.join(TEST_FILE))?;
    let gso = graph.model_gso(config.graph.gso)?;
    let features = signal_shape(&test, gso.n_nodes())?;
    let plan_path = dir.join(PLAN_FILE);
    let plan = if plan_path.exists() {
        NodeSelectionPlan::from_text(&std::fs::read_to_string(plan_path)?)?
    } else {
        node_plan(config, &gso)?
    };
    let mut model = Model::build(config, gso, plan, features, test.n_classes)?;
    model.params_mut().load_values(&load_params(checkpoint)?)?;
    let evaluation = model.evaluate(&test)?;
    let trace_path = dir.join(TRACE_FILE);
    let trace =
        if trace_path.exists() { parse_trace(&std::fs::read_to_string(trace_path)?)? } else { TrainingTrace::default() };
    let seconds = start.elapsed().as_secs_f64();
    let cell = CellResult { graph: 0, realization: 0, accuracy: evaluation.accuracy, test_loss: evaluation.loss, trace, seconds };
    let report = MetricsReport::from_cells(
        config.architecture.to_string(),
        config.sampling.to_string(),
        vec![cell],
        seconds,
        config.to_toml(),
    )?;
    std::fs::write(dir.join(REPORT_FILE), report.to_text())?;
    Ok(report)
}

impl ExperimentConfig {
    /// Configuration of benchmark cell `(graph, realization)`: the graph seed
    /// is derived from the graph index, the data, init and shuffle seeds from
    /// both indices.
    pub fn cell_config(&self, graph: usize, realization: usize) -> ExperimentConfig {
        let mut c = self.clone();
        let (g, r) = (graph as u64, realization as u64);
        c.seeds.graph = derive_seed(self.seeds.graph, &[g]);
        c.seeds.data = derive_seed(self.seeds.data, &[g, r]);
        c.seeds.init = derive_seed(self.seeds.init, &[g, r]);
        c.seeds.shuffle = derive_seed(self.seeds.shuffle, &[g, r]);
        c
    }
}

/// Generates, trains and evaluates one configuration in memory; equivalent to
/// `generate`, `train` and `evaluate` run in sequence on the same configuration.
pub fn run_single(config: &ExperimentConfig) -> Result<(TrainingTrace, Evaluation), ExperimentError> {
    let graph = GraphInstance::build(config)?;
    let splits = generate_splits(config, &graph)?;
    let gso = graph.model_gso(config.graph.gso)?;
    let features = signal_shape(&splits.train, gso.n_nodes())?;
    let plan = node_plan(config, &gso)?;
    let mut model = Model::build(config, gso, plan, features, graph.n_classes())?;
    let trace = model.fit(config, &splits.train, &splits.validation)?;
    let evaluation = model.evaluate(&splits.test)?;
    Ok((trace, evaluation))
}

fn cell_stem(dir: &Path, graph: usize, realization: usize) -> PathBuf {
    dir.join(CELLS_DIR).join(format!("g{graph}_r{realization}"))
}

/// Runs `n_graphs x n_realizations` cells on up to `workers` threads and
/// aggregates them. Each finished cell is persisted under `cells/` at once,
/// so completed work survives a later failure.
pub fn cmd_benchmark(config: &ExperimentConfig) -> Result<MetricsReport, ExperimentError> {
    config.validate()?;
    let b = config.benchmark;
    if b.n_graphs == 0 || b.n_realizations == 0 {
        return Err(Error::Config("benchmark needs at least one graph and one realization".into()).into());
    }
    let start = Instant::now();
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir.join(CELLS_DIR))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(b.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let cells: Vec<(usize, usize)> =
        (0..b.n_graphs).flat_map(|g| (0..b.n_realizations).map(move |r| (g, r))).collect();
    let results = pool.install(|| {
        cells
            .par_iter()
            .map(|&(g, r)| -> Result<CellResult, ExperimentError> {
                let t0 = Instant::now();
                let cell_config = config.cell_config(g, r);
                let (trace, evaluation) = run_single(&cell_config)?;
                let cell = CellResult {
                    graph: g,
                    realization: r,
                    accuracy: evaluation.accuracy,
                    test_loss: evaluation.loss,
                    trace,
                    seconds: t0.elapsed().as_secs_f64(),
                };
                let stem = cell_stem(dir, g, r);
                let one = MetricsReport::from_cells(
                    config.architecture.to_string(),
                    config.sampling.to_string(),
                    vec![cell.clone()],
                    cell.seconds,
                    cell_config.to_toml(),
                )?;
                std::fs::write(stem.with_extension("txt"), one.to_text())?;
                std::fs::write(stem.with_extension("trace"), format_trace(&cell.trace))?;
                Ok(cell)
            })
            .collect::<Vec<_>>()
    });
    let mut done = Vec::with_capacity(results.len());
    for r in results {
        done.push(r?);
    }
    let mut echo = config.to_toml();
    let _ = writeln!(echo, "# cell seeds are derived from [seeds] and the (graph, realization) indices");
    let report = MetricsReport::from_cells(
        config.architecture.to_string(),
        config.sampling.to_string(),
        done,
        start.elapsed().as_secs_f64(),
        echo,
    )?;
    std::fs::write(dir.join(REPORT_FILE), report.to_text())?;
    Ok(report)
}
