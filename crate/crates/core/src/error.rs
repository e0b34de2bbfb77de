use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Jacobi eigensolver did not converge for a {dim}x{dim} matrix after {sweeps} sweeps")]
    NonConvergence { dim: usize, sweeps: usize },

    #[error("Lambda_{k} is undefined for a {dim}x{dim} matrix")]
    UndefinedRank { k: usize, dim: usize },

    #[error("rank-deficient covariance: {0}")]
    RankDeficient(String),

    #[error("singular matrix: eigenvalue {eigenvalue:e} is not positive")]
    Singular { eigenvalue: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge within budget (achieved error estimate {achieved:e})")]
    Quadrature { achieved: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
