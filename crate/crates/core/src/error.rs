//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, simulation and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// The positive-entry graph of a transition matrix is not strongly
    /// connected, so no unique stationary distribution exists.
    #[error("transition matrix is reducible: no unique stationary distribution")]
    ReducibleChain,

    /// Observation symbol `0` is unreachable: `(Cᵀπ)` vanishes at that index.
    #[error("observation symbol {0} has zero probability under the supplied matrices")]
    UnreachableObservation(usize),

    /// A matrix row violates stochasticity beyond the renormalization band.
    #[error("{context} row {row} sums to {sum} (must be 1 within tolerance)")]
    RowSumInvalid {
        context: &'static str,
        row: usize,
        sum: f64,
    },

    /// A probability entry lies outside `[0, 1]`.
    #[error("{context} entry ({row},{col}) = {value} lies outside [0,1]")]
    EntryOutOfRange {
        context: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    /// A matrix flagged symmetric fails the symmetry check.
    #[error("matrix is not symmetric: |C[{row},{col}] - C[{col},{row}]| = {delta}")]
    NotSymmetric { row: usize, col: usize, delta: f64 },

    /// Mismatched dimensions between related objects.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An action index outside `0..m`.
    #[error("action index {action} out of range (m = {actions})")]
    InvalidAction { action: usize, actions: usize },

    /// A state index outside `0..n`.
    #[error("state index {state} out of range (n = {states})")]
    InvalidState { state: usize, states: usize },

    /// Subset enumeration requested for a state space above the supported cap.
    #[error("subset condition check supports n <= {cap}, got n = {n}")]
    SubsetCapExceeded { n: usize, cap: usize },

    /// A partition block (or its complement) carries no stationary mass.
    #[error("partition block has zero stationary mass")]
    ZeroMassBlock,

    /// The two-state conic system degenerates to a continuum of solutions.
    #[error("two-state system is underdetermined: coefficients vanish")]
    Underdetermined,

    /// No solution point survives intersection across action solution sets.
    #[error("no solution is consistent across all actions")]
    NoConsistentSolution,

    /// Every optimizer start failed to produce a finite candidate.
    #[error("no optimizer start converged to a finite candidate")]
    NoStartConverged,

    /// The observed symbol has zero likelihood under every support point.
    #[error(
        "observation impossible under every support point at step {step}; \
         increase the support resolution"
    )]
    InconsistentObservation { step: usize },

    /// The stationary-distribution identifiability condition fails.
    #[error("identifiability condition violated for {violations} state subsets")]
    IdentifiabilityNotSatisfied { violations: usize },

    /// Reconstruction inputs are mutually inconsistent.
    #[error("symmetric reconstruction failed: {detail}")]
    InconsistentReconstruction { detail: String },

    /// A configuration value is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
