use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bad initial-state spec {spec:?} for L={sites}")]
    BadSpec { spec: String, sites: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DilationError {
    #[error("bond {bond} has a nonzero anti-Hermitian part but gamma = {gamma}")]
    NonPositiveGamma { bond: usize, gamma: f64 },
    #[error("expected {expected} per-bond rates, got {got}")]
    GammaCount { expected: usize, got: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("unknown Trotter scheme {0:?}")]
    UnknownScheme(String),
    #[error("snapshot time {time} is not a multiple of dt within [0, T]")]
    SnapshotOffGrid { time: f64 },
    #[error("invalid noise configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QemError {
    #[error("basis-channel matrix is singular or ill-conditioned (cond = {cond:e})")]
    SingularBasis { cond: f64 },
    #[error("decomposition has non-negligible imaginary coefficient {0:e}")]
    ComplexCoefficient(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("signed denominator sum vanishes")]
    ZeroDenominator,
    #[error("no batches to accumulate")]
    Empty,
    #[error("batch shapes disagree")]
    ShapeMismatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("state norm vanished (⟨ψ|ψ⟩ = {0:e})")]
    VanishingNorm(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("reference trace is zero")]
    ZeroTrace,
    #[error("success probability {0} outside [0, 1]")]
    BadProbability(f64),
}

/// Errors surfaced by the experiment runner and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dilation(#[from] DilationError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Qem(#[from] QemError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
