use thiserror::Error;

use crate::graph::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(Violation),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("random generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("automorphism search exceeds size guard: {vertices} vertices > {limit}")]
    SizeGuard { vertices: usize, limit: usize },

    #[error("eigensolver did not converge")]
    EigenSolver,

    #[error("degenerate eigenphase: {kernel_dim} phases collapse onto the reference phase")]
    DegeneratePhase { kernel_dim: usize },

    #[error("hermiticity residual {0:e} exceeds tolerance")]
    NotHermitian(f64),

    #[error("all {0} samples were discarded")]
    AllDiscarded(usize),

    #[error("distribution has zero variance")]
    ZeroVariance,

    #[error("betti number mismatch: {left} vs {right}")]
    BettiMismatch { left: usize, right: usize },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("numerical anomaly: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Domain errors are caused by the caller's input; everything else is a
    /// numerical or internal failure.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::InvalidGraph(_)
                | Error::InvalidParameters(_)
                | Error::GenerationFailed(_)
                | Error::SizeGuard { .. }
                | Error::BettiMismatch { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
