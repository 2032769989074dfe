//! Node selection strategies, nested sampling matrices, reduced k-shift
//! matrices and graph neighborhoods.

pub mod plan;
pub mod shifts;
pub mod strategy;

pub use plan::{NodeSelectionPlan, SelectionMatrix};
pub use shifts::{cross_k_shifts, graph_neighborhood, reduced_k_shifts, ReducedShiftSet};
pub use strategy::{
    build_plan, select, select_by_degree, select_by_eds, select_by_spectral_proxies, DegreeStrategy,
    EdsStrategy, Ranking, SamplingKind, SelectionStrategy, SpectralProxyStrategy,
};
