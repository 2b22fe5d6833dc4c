use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two sets that cannot be compared: different kinds, dimensions or grids.
    #[error("context mismatch: {0}")]
    Context(String),

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("hurst index {value} out of range: {reason}")]
    Hurst { value: f64, reason: &'static str },

    #[error("too many subtracted sets ({n}); limit is {limit}")]
    Complexity { n: usize, limit: usize },

    /// A measure came out negative beyond rounding tolerance.
    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("non-finite matrix entry at ({0}, {1})")]
    NonFinite(usize, usize),

    #[error("increment needs sets missing from the family: {0:?}")]
    MissingSets(Vec<String>),

    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    #[error("time change is flat on [{start}, {end}]")]
    FlatTimeChange { start: f64, end: f64 },

    #[error("estimate undefined: {0}")]
    Undefined(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
