use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("solve error: {0}")]
    Solve(String),

    #[error("no convergence after {iterations} iterations (last mismatch {last_mismatch:.3e} pu)")]
    Convergence { iterations: usize, last_mismatch: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerics error: {0}")]
    Numerics(String),

    #[error("data generation error: {0}")]
    DataGen(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
