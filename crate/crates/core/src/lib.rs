//! Nodal surplus statistics for quantum graphs.

pub mod error;
pub mod generate;
pub mod graph;
pub mod oracle;
pub mod orbits;
pub mod quantum;
pub mod sampler;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use generate::{generate, Family};
pub use graph::{Graph, Violation};
pub use oracle::{MetricGraph, SpectralSequence};
pub use orbits::{edge_orbits, EdgeOrbitPartition};
pub use sampler::{estimate_distribution, estimate_edge_distributions, SamplerConfig, SurplusDistribution};
