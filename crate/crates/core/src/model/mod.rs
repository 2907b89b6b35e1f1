//! Ground-truth hierarchical selection models.
//!
//! Level 0 is the coarsest (top) level; level indices grow toward finer
//! detail, and the last level is the observed one. Every edge connects a
//! node at level `l+1` to a node at level `l`: the finer node is a *parent*
//! (a constituent) of the coarser *child* concept, which is a deterministic
//! selection over its parents. Generation runs in the inverse direction,
//! top down, each level drawn conditionally on the level above with support
//! restricted to selection preimages.

mod continuous;
mod dataset;
mod discrete;
mod func;
mod graph;
mod joint;

pub mod generate;

pub use continuous::{
    ContinuousSample, ContinuousSelectionModel, NodeEquation, ObservationMap,
};
pub use dataset::Dataset;
pub use discrete::{DiscreteSelectionModel, LevelConditional};
pub use func::SelectionFunction;
pub use graph::{NodeKind, SelectionGraph, ValidationIssue, ValidationReport};
pub use joint::JointTable;

/// Probability mass below this is treated as structurally zero when reading
/// supports off an exact table.
pub const MASS_TOL: f64 = 1e-13;

/// Normalization slack allowed for stored distributions.
pub const NORM_TOL: f64 = 1e-12;
