use thiserror::Error;

/// Errors surfaced by the library. Variant names double as the machine-readable
/// `kind` field in CLI error output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:.3e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("covariance has non-positive variance at index {index}: {value}")]
    ZeroVariance { index: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("forward trace inconsistent with parameters: {0}")]
    StaleTrace(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    DivergenceDetected { epoch: usize, batch: usize, loss: f64 },

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: String, expected: u32, found: u32 },

    #[error("truncated file {path}: needed {needed} bytes, had {available}")]
    TruncatedFile { path: String, needed: usize, available: usize },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("too few posterior samples: {got} accepted, {min} required")]
    TooFewSamples { got: usize, min: usize },

    #[error("sharpness deviation {deviation} already exceeds epsilon {epsilon} at sigma {sigma}")]
    OutOfRange { sigma: f64, deviation: f64, epsilon: f64 },

    #[error("volume report is missing layer {layer} ({method})")]
    MissingVolume { layer: usize, method: String },

    #[error("volume reports cover different layers: {0}")]
    LayerMismatch(String),

    #[error("target column {0} is constant; mutual information undefined")]
    DegenerateTarget(String),

    #[error("no record pairs agree on any hyperparameter subset of size {subset_size}")]
    EmptySubspace { subset_size: usize },

    #[error("gradient probe needs at least {min} usable batches, got {got}")]
    TooFewBatches { got: usize, min: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Machine-readable kind tag, stable across error message wording.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite(_) => "NotPositiveDefinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::ZeroVariance { .. } => "ZeroVariance",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::StaleTrace(_) => "StaleTrace",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::MissingVolume { .. } => "MissingVolume",
            Error::LayerMismatch(_) => "LayerMismatch",
            Error::DegenerateTarget(_) => "DegenerateTarget",
            Error::EmptySubspace { .. } => "EmptySubspace",
            Error::TooFewBatches { .. } => "TooFewBatches",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Io { .. } => "Io",
            Error::Serde(_) => "Serde",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
