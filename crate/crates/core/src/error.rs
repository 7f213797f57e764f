use thiserror::Error;

/// Errors raised by the laboratory's numerical and configuration layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },

    #[error("cutoff K = {cutoff} exceeds the frequency cutoff N = {max}")]
    CutoffOutOfRange { cutoff: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expected a {expected} symbol, found {found}")]
    WrongClass { expected: String, found: String },

    #[error("symbol is not constant along the fibers")]
    NotFiberConstant,

    #[error("radial profile must vanish at the origin, got f(0) = {0}")]
    NonzeroAtOrigin(f64),

    #[error("radial profile must vanish at infinity")]
    NotVanishingAtInfinity,

    #[error("trigonometric degree {degree} exceeds the frequency cutoff {cutoff}")]
    DegreeTooLarge { degree: usize, cutoff: usize },

    #[error("loop is not invertible near x = {x:.6}")]
    NonInvertible { x: f64 },

    #[error("loop is undersampled: phase step of {step:.4} rad near x = {x:.6}")]
    Undersampled { x: f64, step: f64 },

    #[error("no spectral gap: {0}")]
    NoSpectralGap(String),

    #[error("partition index {index} outside [-{levels}, {levels}]")]
    IndexOutOfRange { index: i64, levels: i64 },

    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
