use thiserror::Error;

/// Errors surfaced by the mechanism-discovery library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("iteration index {index} out of range 1..={max}")]
    IterationOutOfRange { index: usize, max: usize },

    #[error("no feasible mechanism size within the search cap (steps <= {cap})")]
    SizeSearchCapExceeded { cap: usize },

    #[error("search space 5^{cells} exceeds the brute-force guard of 10^9 raw matrices")]
    BruteForceGuard { cells: usize },

    #[error("unknown case study `{0}` (expected hypothetical, aldol or fructose)")]
    UnknownCase(String),

    #[error("ground-truth simulation failed: {0}")]
    TruthSimulationFailed(String),

    #[error("no feasible candidates at iteration {0}")]
    NoCandidates(usize),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("infeasible matrix: {0}")]
    InfeasibleMatrix(String),

    #[error("parse error: {0}")]
    Parse(String),
}
