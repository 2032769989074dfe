//! Graph shift operators, graph signals, spectral utilities and synthetic
//! graph/signal generation.

pub mod diffusion;
pub mod edgelist;
pub mod gso;
pub mod sbm;
pub mod signal;
pub mod spectral;

pub use diffusion::{diffuse_source_dataset, LabeledDataset};
pub use gso::{Edge, GraphShiftOperator, GsoVariant};
pub use sbm::{community_hubs, sbm_generate, SbmGraph};
pub use signal::GraphSignal;
