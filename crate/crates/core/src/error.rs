use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly error in cell {cell}: coefficient sampler returned a non-finite value")]
    Assembly { cell: usize },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("CG breakdown at iteration {iteration}: operator is not positive definite")]
    Breakdown { iteration: usize },

    #[error("operator is not coercive (lambda_eps_1 = {lambda_eps_1})")]
    Coercivity { lambda_eps_1: f64 },

    #[error("compatibility violated for {what}: mean {mean:.3e} exceeds tolerance {tol:.3e}")]
    Compatibility { what: String, mean: f64, tol: f64 },

    #[error("spectral solver failed: {0}")]
    Spectral(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
