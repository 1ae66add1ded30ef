//! Semi-supervised node classification with a two-layer GCN, co-trained on
//! node-pair relations and iteratively rewired with self-predicted edges
//! that connect distant nodes to labeled nodes of the same category.

pub mod config;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod graph;
pub mod highway;
pub mod synthetic;

pub use config::{HighwayConfig, MaskPolicy};
pub use dataio::{DataSplit, Dataset, NodeFeatures};
pub use error::{HighwayError, Result};
pub use gcn::{GcnParameters, ModelOutput, PairSet};
pub use graph::{hop_distances, HopDistanceMap, Hops, NormalizedAdjacency, SparseGraph};
pub use highway::{highway_train, HighwayResult, IterationReport, PairSampling, PairStrategy, TrainingMode};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
