//! Laboratory for hierarchical selection models.
//!
//! A hierarchical selection model is a leveled graph in which every variable
//! at a coarser level is a deterministic function (a *selection variable*)
//! of the finer-level variables adjacent to it. Sampling runs in the inverse
//! direction, coarse to fine, with each level drawn conditionally on the one
//! above so that the selection constraint holds on every positive-probability
//! configuration. This crate provides:
//!
//! - synthesis of ground-truth discrete and continuous selection models,
//!   with exact joint enumeration for the discrete case ([`model`]);
//! - checkers for the identification conditions under which such models are
//!   recoverable from their observed distribution ([`conditions`]);
//! - the set-calculus machinery that converts union cardinalities into
//!   intersection cardinalities and parent-signature partitions ([`setcalc`]);
//! - the constructive level-by-level identification algorithm for discrete
//!   models: nonnegative-rank bottlenecks, co-parent search, latent
//!   introduction, and equivalence-class state merging ([`ident`]);
//! - K-sparse autoencoders with steering and attribution primitives ([`sae`]);
//! - constraint-based cross-level structure discovery over binarized codes
//!   ([`discovery`]);
//! - identification-quality metrics ([`metrics`]), brute-force reference
//!   oracles ([`oracle`]), and end-to-end experiments ([`pipeline`]).
//!
//! All randomized procedures are deterministic given a seed, and every type
//! is immutable after construction, so values can be shared freely across
//! threads.

pub mod conditions;
pub mod discovery;
pub mod error;
pub mod fixtures;
pub mod ident;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sae;
pub mod setcalc;

pub use error::{Error, Result};

/// Schema version stamped into every serialized artifact (models, datasets,
/// reports, checkpoints). Bumped on any incompatible format change.
pub const SCHEMA_VERSION: u32 = 1;
