//! Graph neural networks over arbitrary graph shift operators: selection,
//! aggregation and multinode aggregation architectures, a small reverse-mode
//! training engine, and a seeded source-localization benchmark.

pub mod aggregation;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod nn;
pub mod rng;
pub mod sampling;
pub mod selection;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
pub use graph::{GraphShiftOperator, GraphSignal, GsoVariant, LabeledDataset};
pub use sampling::{NodeSelectionPlan, SamplingKind, SelectionMatrix};
