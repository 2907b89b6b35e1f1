//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction, identification, training, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or graph failed a structural invariant.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A selection function was applied outside its domain.
    #[error("selection domain miss for node {node}: tuple {tuple:?} not in domain")]
    DomainMiss {
        /// Target node of the selection function.
        node: String,
        /// The offending parent-value tuple.
        tuple: Vec<u32>,
    },

    /// Exact enumeration would exceed the configured state cap.
    #[error("state space too large: {states} states exceeds cap {cap}")]
    StateCap {
        /// Number of joint states the enumeration would require.
        states: u128,
        /// Configured cap.
        cap: u128,
    },

    /// A set family is not realizable by any explicit family of sets.
    #[error("unrealizable family: {0}")]
    Unrealizable(String),

    /// No conditioning set satisfies the nonnegative-rank bottleneck
    /// criterion for the given variable.
    #[error("no bottleneck found for variable {0}")]
    NoBottleneck(String),

    /// Rank bounds straddle the bottleneck threshold, so the criterion can
    /// be neither asserted nor refuted.
    #[error("indeterminate nonnegative rank for {context}: lower {lower} < threshold {threshold} <= upper {upper}")]
    IndeterminateRank {
        /// Where the decision was needed.
        context: String,
        /// Linear-algebraic lower bound.
        lower: usize,
        /// Support-size threshold of the bottleneck test.
        threshold: usize,
        /// Best factorization upper bound found.
        upper: usize,
    },

    /// A co-parent map is not symmetric-consistent.
    #[error("inconsistent co-parent map: {a} lists {b} but not vice versa")]
    InconsistentCoparents {
        /// Variable whose co-parent set contains `b`.
        a: String,
        /// Variable missing the reciprocal entry.
        b: String,
    },

    /// Two parent configurations could not be conclusively merged or split.
    #[error("ambiguous state merge for latent {latent}: configurations {left:?} and {right:?} compare within tolerance band")]
    AmbiguousMerge {
        /// Latent whose selection function was being recovered.
        latent: String,
        /// First parent configuration.
        left: Vec<u32>,
        /// Second parent configuration.
        right: Vec<u32>,
    },

    /// Mismatched dimensions or variable sets.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A numeric routine received input outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Training diverged (smoothed loss increased for too many windows).
    #[error("training diverged after {steps} steps; smoothed loss rose over {windows} consecutive windows")]
    Diverged {
        /// Steps completed before divergence was declared.
        steps: usize,
        /// Number of consecutive rising windows observed.
        windows: usize,
    },

    /// A brute-force oracle exceeded its budget.
    #[error("oracle budget exceeded: {0}")]
    Budget(String),

    /// Configuration value rejected.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// CSV (de)serialization failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
