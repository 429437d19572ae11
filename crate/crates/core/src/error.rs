use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not a correlation matrix: {0}")]
    NotCorrelation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("explosion: check competition inputs (patch {patch} at t={time})")]
    Explosion { patch: usize, time: f64 },

    #[error("deterministic reduction: use ystar")]
    DeterministicReduction,

    #[error("non-integrable stationary density: {0}")]
    NonIntegrable(String),

    #[error("patch hit numerical zero (patch {patch} at t={time})")]
    NumericalZero { patch: usize, time: f64 },

    #[error("operation requires n=2 patches, got n={0}")]
    RequiresTwoPatches(usize),

    #[error("no equilibrium root in [0,1]")]
    NoRoot,

    #[error("reducible dispersal matrix: {0}")]
    Reducible(String),

    #[error("empty path")]
    EmptyPath,

    #[error("precondition violated: {0}")]
    Precondition(String),
}
