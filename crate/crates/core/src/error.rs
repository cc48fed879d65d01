use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate shift: |m| = {m} must be smaller than the grid size {n}")]
    DegenerateShift { m: isize, n: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-causal operator: {0}")]
    Structural(String),

    #[error("degenerate time step at k = {k} (t = {t}): diagonal block is singular or numerically singular (condition estimate {condition:.3e})")]
    DegenerateStep { k: usize, t: f64, condition: f64 },

    #[error("weight nu = {nu} is below the admissible threshold {min_nu} of material law '{law}'")]
    NuBelowThreshold { nu: f64, min_nu: f64, law: String },

    #[error("problem size {size} exceeds the dense cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
