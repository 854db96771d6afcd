use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point:?} lies outside the box [{lo:?}, {hi:?}]")]
    PointOutsideBox {
        point: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("meshes cover different boxes")]
    BoxMismatch,

    #[error("mesh is not nested: {0}")]
    NotNested(String),

    #[error("degenerate cell {cell} (volume {volume:e})")]
    DegenerateCell { cell: usize, volume: f64 },

    #[error("sobol dimension {requested} exceeds the maximum supported dimension {max}")]
    DimensionOverflow { requested: usize, max: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("cholesky factorization failed at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("sampler failed at randomization {m}, sample {n}: {source}")]
    Sampler {
        m: usize,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("coupled spaces disagree on the correction weight of Haar cell {cell}: {shared} vs {other}")]
    CouplingMismatch { cell: usize, shared: f64, other: f64 },

    #[error("no convergence within {} levels (bias estimate {:e})", .0.levels.len(), .0.bias_estimate)]
    ConvergenceFailure(Box<crate::mlqmc::MlqmcState>),

    #[error("failed to parse direction numbers, line {line}: {msg}")]
    DirectionNumbers { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
