use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is outside the supported range 3..=5")]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("axis {axis} out of range for dimension {dim}")]
    Axis { axis: usize, dim: usize },

    #[error("box extent {extent} along axis {axis} is too small for a stencil of order {order}")]
    StencilTooLarge { axis: usize, order: u32, extent: usize },

    #[error("fields live on different boxes")]
    BoxMismatch,

    #[error("angle {0} is outside [-pi, pi)")]
    Angle(f64),

    #[error("symbol is singular at theta = 0")]
    SingularAtOrigin,

    #[error("resolution {resolution} is insufficient (need {required})")]
    Resolution { resolution: usize, required: String },

    #[error("kernel violates K(-x) = K(x)^T (defect {0:e})")]
    AsymmetricKernel(f64),

    #[error("no grid nodes remain after excluding the ball of radius {0}")]
    EmptyGrid(f64),

    #[error("moment of order {requested} requested but only {available} are stored")]
    MomentOrder { requested: usize, available: usize },

    #[error("moment sequence is not admissible: {0}")]
    Moments(String),

    #[error("series order {order} exceeds the exact-evaluation limit {max}; use the Monte Carlo estimator instead")]
    SeriesOrder { order: usize, max: usize },

    #[error("contrast {0} is outside the admissible range")]
    Contrast(f64),

    #[error("homogenized matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("symbol m vanishes or turns negative away from the origin (value {value:e} at {theta:?})")]
    SymbolVanishes { theta: Vec<f64>, value: f64 },

    #[error("extrapolation spread {spread:e} exceeds tolerance {tolerance:e}")]
    Extrapolation { spread: f64, tolerance: f64 },

    #[error("residual changes sign along the probe: amplitude is below the noise floor")]
    NoiseFloor,

    #[error("invalid probe: {0}")]
    Probe(String),

    #[error("unknown law `{0}`")]
    UnknownLaw(String),

    #[error("conjugate gradient did not converge: {iterations} iterations, relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
