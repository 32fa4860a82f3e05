use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("slab index {k} out of range [{min}, {max})")]
    SlabOutOfRange { k: i64, min: i64, max: i64 },

    #[error("expected {expected} nodal values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("invalid coefficient field: {0}")]
    InvalidCoefficient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field is not transition-like: {0}")]
    NoCrossing(String),

    #[error("non-finite energy at the seed")]
    NonFiniteSeed,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
