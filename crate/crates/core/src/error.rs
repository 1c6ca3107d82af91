use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("log hazard ratio {beta} outside grid range [{lo}, {hi}]")]
    OutOfRange { beta: f64, lo: f64, hi: f64 },

    #[error("fit did not converge after {restarts} restarts (SS = {ss:e})")]
    FitDidNotConverge {
        params: [f64; 3],
        ss: f64,
        restarts: usize,
    },

    #[error("not estimable: {0}")]
    NonEstimable(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("unsupported payload: {0}")]
    Payload(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
