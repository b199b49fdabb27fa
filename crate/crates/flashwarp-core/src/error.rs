use thiserror::Error;

/// Errors produced by the spectral deformation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("Hermitian symmetry violated (residual {residual:.3e}), spectral state is corrupt")]
    SymmetryViolation { residual: f64 },

    #[error("non-finite values encountered in {0}")]
    NonFinite(String),

    #[error("Wiener increments failed the variance sanity check: sample variance {sample:.3e} vs dt {expected:.3e}")]
    WienerVariance { sample: f64, expected: f64 },

    #[error("all {0} random-search trials diverged")]
    SearchFailed(usize),

    #[error("estimation stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
