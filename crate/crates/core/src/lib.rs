//! Unsupervised, energy-based graph neural solver for six combinatorial
//! optimization tasks (MIS, MVC, MaxClique, MaxCut, MDS, K-coloring), with
//! head surgery, complement-graph reduction and multi-task pretraining.

pub mod dataset;
pub mod decode;
pub mod encoder;
pub mod energy;
pub mod error;
pub mod features;
pub mod graph;
pub mod oracle;
pub mod task;
pub mod train;

pub use dataset::{load_dataset, save_dataset, Dataset, Split};
pub use decode::{complement_set, decode, is_feasible, DecodeOutcome};
pub use encoder::{backward, forward, Architecture, FreezeScope, Params};
pub use energy::{discrete_objective, energy, energy_gradient, PenaltyWeights, SoftAssignment};
pub use error::{Error, Result};
pub use features::{node_features, FeatureMatrix};
pub use graph::Graph;
pub use oracle::{exact_solve, greedy_baseline, OracleResult};
pub use task::{Solution, TaskKind};
