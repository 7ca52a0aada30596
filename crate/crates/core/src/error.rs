use thiserror::Error;

/// Errors raised by the field, kernel and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must have an even number of points per axis, at least 4 (got {0})")]
    InvalidGrid(usize),

    #[error("field has {found} values, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("unsupported component count {0} (expected 1, 3 or 9)")]
    InvalidComponents(usize),

    #[error("operation requires a {expected}-component field, got {found}")]
    WrongComponents { expected: usize, found: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("Lebesgue exponent must satisfy q >= 1 (got {0})")]
    InvalidExponent(f64),

    #[error("mollification scale must lie in (0, 1] (got {0})")]
    InvalidEpsilon(f64),

    #[error("epsilon {eps} is under-resolved: below twice the grid spacing {spacing}")]
    UnderResolved { eps: f64, spacing: f64 },

    #[error("smoothness index must lie in (0, 1] (got {0})")]
    InvalidSmoothness(f64),

    #[error("field is not divergence-free: max |div u| = {divergence:e} (scale {scale:e})")]
    NotSolenoidal { divergence: f64, scale: f64 },

    #[error("field has non-zero mean velocity {0:?}")]
    NonZeroMean([f64; 3]),

    #[error("{0}")]
    InvalidInput(String),

    #[error("parameter constraint violated: {0}")]
    Constraint(String),

    #[error("CFL violation at step {step}: dt = {dt:e} exceeds {limit:e}")]
    Cfl { step: usize, dt: f64, limit: f64 },

    #[error("non-finite solver state at step {0}")]
    Blowup(usize),

    #[error("kinetic energy grew by {relative:e} (relative) at step {step}")]
    EnergyGrowth { step: usize, relative: f64 },

    #[error("bad snapshot: {0}")]
    Snapshot(String),

    #[error("bad config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
