use thiserror::Error;

/// Errors raised by the belief algebra, local inference and fusion rules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("precision matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A fused or divided precision failed its SPD factorization. Carries the
    /// smallest eigenvalue of the offending matrix.
    #[error("resulting precision is indefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    IndefinitePrecision { min_eigenvalue: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has zero prior probability")]
    ZeroPriorProbability { class: usize },

    #[error("optimizer diverged for agent {agent_id} at epoch {epoch} (loss = {loss})")]
    OptimizerDiverged { agent_id: usize, epoch: usize, loss: f64 },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<FusionError>,
    },
}

pub type Result<T, E = FusionError> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FusionError::DimensionMismatch { expected, found })
    }
}
