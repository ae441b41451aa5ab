use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible space: {0}")]
    SpaceMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solver failed at time index {time_index}: {detail}")]
    SolverFailure { time_index: usize, detail: String },

    #[error("Newton iteration did not converge at time step {step}: residual {residual:.3e} after {iters} iterations")]
    NewtonDivergence { step: usize, residual: f64, iters: usize },

    #[error("eigenvalue solver failed: {0}")]
    EigenFailure(String),

    #[error("non-affine map requested: {0}")]
    NonAffine(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
