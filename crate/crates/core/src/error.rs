use thiserror::Error;

/// Errors raised by the library.
///
/// Floating values are carried as `f64` regardless of the scalar used for the
/// computation so the error type stays non-generic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("density base is non-positive ({base:e}) at x = {x}")]
    NonPositiveBase { x: f64, base: f64 },
    #[error("integral diverges: {0}")]
    DivergentIntegral(String),
    #[error("power integral for the alpha-norm diverges: {0}")]
    DivergentNorm(String),
    #[error("deformed normalizer diverges: {0}")]
    DivergentNormalizer(String),
    #[error("theta[{index}] = {value} is not inside the open interval ({lo}, {hi})")]
    ThetaOutOfBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("density vanishes at sample index {index}")]
    ZeroDensityAtSample { index: usize },
    #[error("sample value {value} at index {index} lies outside the support")]
    OutsideSupport { index: usize, value: f64 },
    #[error("need at least {needed} probe points, got {got}")]
    InsufficientProbes { needed: usize, got: usize },
    #[error("no pair with matching statistic found within a budget of {budget}")]
    PairGenerationFailed { budget: usize },
    #[error("factorization residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualExceedsTol { residual: f64, tol: f64 },
    #[error("bucket is empty")]
    EmptyBucket,
    #[error("conditional expectation varies with theta by {deviation:e}")]
    ThetaDependenceDetected { deviation: f64 },
    #[error("estimator is biased for the deformed target by {bias:e}")]
    PsiBiased { bias: f64 },
    #[error("estimator is not a function of the statistic (spread {spread:e} inside a class)")]
    NotMeasurable { spread: f64 },
    #[error("covariance between score terms vanishes")]
    ZeroCovariance,
    #[error("information is zero")]
    ZeroInformation,
    #[error("finite-difference stencil leaves the parameter box")]
    BoundaryTheta,
    #[error("validity condition violated: {0}")]
    ValidityViolated(String),
    #[error("no interior maximum found")]
    NoInteriorMax,
    #[error("optimizer diverged: {0}")]
    Divergence(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("quadrature hit {subdivisions} subdivisions with error estimate {error_estimate:e}")]
    MaxSubdivisions {
        subdivisions: usize,
        error_estimate: f64,
    },
    #[error("finite differences are inconsistent (Richardson ratio {ratio})")]
    NoisyFunction { ratio: f64 },
    #[error("sample space has {states} states, cap is {cap}")]
    SpaceTooLarge { states: u128, cap: usize },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
