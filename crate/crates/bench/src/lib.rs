//! Fixtures shared by the criterion benchmarks in `benches/`.

use gnn_core::experiment::{generate_splits, node_plan, ExperimentConfig, GraphInstance, Model};
use gnn_core::experiment::config::Architecture;
use gnn_core::{GraphShiftOperator, LabeledDataset};

/// The default SBM setup with `samples` training signals.
pub fn config(architecture: Architecture, samples: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig { architecture, ..ExperimentConfig::default() };
    c.dataset.n_train = samples;
    c.dataset.n_validation = samples;
    c.dataset.n_test = samples;
    c
}

/// Scaled-adjacency SBM graph and a training split of `samples` signals.
pub fn sbm_fixture(samples: usize) -> (GraphShiftOperator, LabeledDataset) {
    let c = config(Architecture::Selection, samples);
    let graph = GraphInstance::build(&c).expect("SBM draw");
    let splits = generate_splits(&c, &graph).expect("diffusion data");
    (graph.model_gso(c.graph.gso).expect("scaled adjacency"), splits.train)
}

/// Freshly initialized model of the given architecture on the SBM fixture.
pub fn model(architecture: Architecture) -> Model {
    let c = config(architecture, 1);
    let (gso, data) = sbm_fixture(1);
    let plan = node_plan(&c, &gso).expect("node plan");
    Model::build(&c, gso, plan, 1, data.n_classes.max(5)).expect("model")
}
