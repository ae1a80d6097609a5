use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected dim={expected}, got dim={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("gamma must exceed 1, got {0}")]
    InvalidGamma(f64),

    #[error("cluster {cluster} is empty (mass {mass:e})")]
    EmptyCluster { cluster: usize, mass: f64 },

    #[error("centroid system is ill-conditioned and could not be factorized")]
    IllConditioned,

    #[error("assignment QP did not converge in {iterations} iterations (kkt residual {residual:e})")]
    QpNotConverged { iterations: usize, residual: f64 },

    #[error("all residuals vanish: optimal gamma sits at the boundary gamma = 1")]
    GammaBoundary,

    #[error("risk sandwich violated on the {side} side: lower={lower}, wc={wc}, upper={upper}")]
    SandwichViolation { side: &'static str, lower: f64, wc: f64, upper: f64 },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}
