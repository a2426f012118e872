//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model violates its invariants (bad cutoff, wrong sign pattern, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An operation was called with inconsistent or out-of-range arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical routine failed (non-convergence, overflow, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An optimizer or root-finder stalled; carries the best point reached.
    #[error("fit failed: {message} (best residual {residual:.3e})")]
    FitFailure {
        message: String,
        /// Best parameter vector reached before giving up.
        best: Vec<f64>,
        /// Objective value at `best`.
        residual: f64,
    },

    /// Dressed-state labeling was ambiguous for the named product state.
    #[error("degenerate labeling for product state ({0}, {1}): max overlap {2:.3} < 0.5", .label.0, .label.1, .overlap)]
    Degeneracy { label: (usize, usize), overlap: f64 },

    /// A fit is mathematically infeasible at the named level.
    #[error("infeasible at level {level}: {message}")]
    Infeasible { level: usize, message: String },

    /// A tomography design matrix cannot resolve all density-matrix elements.
    #[error("rank-deficient design matrix: rank {rank} < {needed}; unresolved elements {missing:?}")]
    RankDeficient {
        rank: usize,
        needed: usize,
        missing: Vec<(usize, usize)>,
    },

    /// Training or test data is missing a required state label.
    #[error("no records for state {state}")]
    Coverage { state: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A structured input file failed to parse or validate.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Coarse category used by the CLI for machine-readable reporting and
    /// exit codes: `input` (exit 2) or `numerical` (exit 3).
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidModel(_)
            | Error::InvalidInput(_)
            | Error::Coverage { .. }
            | Error::Io(_)
            | Error::Parse(_) => "input",
            Error::Numerical(_)
            | Error::FitFailure { .. }
            | Error::Degeneracy { .. }
            | Error::Infeasible { .. }
            | Error::RankDeficient { .. } => "numerical",
        }
    }
}
