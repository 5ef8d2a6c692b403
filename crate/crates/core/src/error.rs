use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("problem too large: {0}")]
    SizeGuard(String),

    #[error("optimality certificate failed: {0}")]
    Certificate(String),

    #[error("trajectory blew up at t = {time}: |X| = {norm:e}")]
    BlowUp { time: f64, norm: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate pair: {0}")]
    DegeneratePair(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
