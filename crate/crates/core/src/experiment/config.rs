use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{InnerLayerConfig, MultinodeConfig, OuterLayerConfig};
use crate::error::{Error, Result};
use crate::graph::GsoVariant;
use crate::sampling::SamplingKind;
use crate::selection::SelectionLayerConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Selection,
    Aggregation,
    Multinode,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Selection => "selection",
            Architecture::Aggregation => "aggregation",
            Architecture::Multinode => "multinode",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selection" => Ok(Architecture::Selection),
            "aggregation" => Ok(Architecture::Aggregation),
            "multinode" => Ok(Architecture::Multinode),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Edge-list file; when absent a stochastic block model is drawn.
    pub edge_list: Option<PathBuf>,
    pub symmetrize: bool,
    pub n_nodes: usize,
    pub n_communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Operator the models run on. Diffusion data always uses the spectrally
    /// scaled adjacency.
    pub gso: GsoVariant,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            edge_list: None,
            symmetrize: false,
            n_nodes: 100,
            n_communities: 5,
            p_in: 0.8,
            p_out: 0.2,
            gso: GsoVariant::ScaledAdjacency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Diffusion times are drawn from `0..max_diffusion_time`.
    pub max_diffusion_time: usize,
    /// Source nodes; the highest-degree node of each community when absent.
    pub sources: Option<Vec<usize>>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { n_train: 8000, n_validation: 2000, n_test: 200, max_diffusion_time: 25, sources: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub graph: u64,
    pub data: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig { graph: 1, data: 2, init: 3, shuffle: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOptions {
    /// Eigenvectors used for leverage scores; the first layer size when absent.
    pub eds_basis: Option<usize>,
    pub proxy_order: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { eds_basis: None, proxy_order: 2 }
    }
}

/// Selection layer without its input width, which follows from the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionLayerSpec {
    pub n_taps: usize,
    pub out_features: usize,
    pub n_nodes_out: usize,
    pub pool_reach: usize,
    #[serde(default)]
    pub pool_threshold: f64,
    #[serde(default)]
    pub tap_groups: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSpec {
    pub layers: Vec<SelectionLayerSpec>,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        let layer = |reach| SelectionLayerSpec {
            n_taps: 5,
            out_features: 32,
            n_nodes_out: 10,
            pool_reach: reach,
            pool_threshold: 0.0,
            tap_groups: None,
        };
        SelectionSpec { layers: vec![layer(6), layer(8)] }
    }
}

impl SelectionSpec {
    pub fn layer_configs(&self, in_features: usize) -> Vec<SelectionLayerConfig> {
        let mut f = in_features;
        self.layers
            .iter()
            .map(|s| {
                let c = SelectionLayerConfig {
                    n_taps: s.n_taps,
                    in_features: f,
                    out_features: s.out_features,
                    n_nodes_out: s.n_nodes_out,
                    pool_reach: s.pool_reach,
                    pool_threshold: s.pool_threshold,
                    tap_groups: s.tap_groups.clone(),
                };
                f = s.out_features;
                c
            })
            .collect()
    }
}

/// Single-node aggregation settings; the designated node comes from sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationSpec {
    pub sequence_length: Option<usize>,
    pub inner_layers: Vec<InnerLayerConfig>,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        AggregationSpec { sequence_length: None, inner_layers: vec![inner(4, 16), inner(8, 32)] }
    }
}

fn inner(n_taps: usize, out_features: usize) -> InnerLayerConfig {
    InnerLayerConfig { n_taps, out_features, pool_factor: 2, pool_groups: None }
}

fn default_multinode() -> MultinodeConfig {
    MultinodeConfig {
        outer_layers: vec![
            OuterLayerConfig { n_nodes: 10, n_shifts: 7, inner_layers: vec![inner(3, 16), inner(3, 16)] },
            OuterLayerConfig { n_nodes: 5, n_shifts: 5, inner_layers: vec![inner(3, 16), inner(3, 32)] },
        ],
        per_node_filters: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub selection: SelectionSpec,
    pub aggregation: AggregationSpec,
    pub multinode: MultinodeConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            selection: SelectionSpec::default(),
            aggregation: AggregationSpec::default(),
            multinode: default_multinode(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_graphs: usize,
    pub n_realizations: usize,
    /// Concurrent worker threads; all available cores when zero.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig { n_graphs: 10, n_realizations: 10, workers: 0 }
    }
}

/// Complete description of an experiment. Every field has a default, which
/// together reproduce the SBM source-localization setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architecture: Architecture,
    pub sampling: SamplingKind,
    pub output_dir: PathBuf,
    pub graph: GraphConfig,
    pub dataset: DatasetConfig,
    pub seeds: SeedConfig,
    pub sampling_options: SamplingOptions,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            architecture: Architecture::Selection,
            sampling: SamplingKind::Degree,
            output_dir: PathBuf::from("gnn-out"),
            graph: GraphConfig::default(),
            dataset: DatasetConfig::default(),
            seeds: SeedConfig::default(),
            sampling_options: SamplingOptions::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.n_train == 0 || d.n_validation == 0 || d.n_test == 0 {
            return Err(Error::Config("dataset split sizes must be positive".into()));
        }
        if d.n_train < d.n_validation {
            return Err(Error::Config("training split must be at least as large as validation".into()));
        }
        if d.max_diffusion_time == 0 {
            return Err(Error::Config("max_diffusion_time must be >= 1".into()));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.graph.edge_list.is_none() && d.sources.is_none() && self.graph.n_communities == 0 {
            return Err(Error::Config("SBM needs at least one community".into()));
        }
        if self.graph.edge_list.is_some() && d.sources.is_none() {
            return Err(Error::Config("edge-list graphs need explicit dataset.sources".into()));
        }
        Ok(())
    }

    /// Node counts requested from the sampling strategy.
    pub fn selection_counts(&self) -> Vec<usize> {
        match self.architecture {
            Architecture::Selection => self.model.selection.layers.iter().map(|l| l.n_nodes_out).collect(),
            Architecture::Aggregation => vec![1],
            Architecture::Multinode => self.model.multinode.outer_layers.iter().map(|l| l.n_nodes).collect(),
        }
    }
}
