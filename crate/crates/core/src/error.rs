use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate frequency band [{low}, {high}]")]
    DegenerateBand { low: f64, high: f64 },

    #[error("offset {offset:?} out of range for dims {dims:?}")]
    OffsetOutOfRange { offset: Vec<isize>, dims: Vec<usize> },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("solver diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: &'static str },

    #[error("band polynomial has |r0| = {r0:e}, too close to zero for refinement")]
    SingularBandPolynomial { r0: f64 },

    #[error("rank-deficient design matrix (condition ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("frequency grid is empty")]
    EmptyGrid,

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("invalid model order {order} for matrix of size {size}")]
    InvalidModelOrder { order: usize, size: usize },
}
