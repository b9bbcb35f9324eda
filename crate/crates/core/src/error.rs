use thiserror::Error;

/// Errors produced by the solver, simulation, training, and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0} cells vs {1} cells")]
    GridMismatch(usize, usize),

    #[error("index {index} out of range for grid with {n_cells} cells")]
    IndexOutOfRange { index: usize, n_cells: usize },

    #[error("grid too small: need at least {needed} cells, got {got}")]
    GridTooSmall { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "successive approximation did not converge after {terms} terms \
         (last increment {increment:.3e})"
    )]
    NonConvergence { terms: usize, increment: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient history: step {requested} requested, {available} recorded")]
    InsufficientHistory { requested: usize, available: usize },

    #[error("dataset format: {0}")]
    Format(String),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
