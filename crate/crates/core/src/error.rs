use std::path::PathBuf;

/// Errors produced by the calibration library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("zero norm")]
    ZeroNorm,
    #[error("atan2 undefined")]
    Atan2Undefined,
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("no invalid pixels")]
    NoInvalidPixels,
    #[error("not enough correspondences: need {needed}, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("degenerate")]
    Degenerate,
    #[error("ransac failed")]
    RansacFailed,
    #[error("refinement failed")]
    RefinementFailed,
    #[error("no matches")]
    NoMatches,
    #[error("insufficient instances: {0} matched pairs")]
    InsufficientInstances(usize),
    #[error("non-unit quaternion (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("corrupt record: {0}")]
    CorruptRecord(String),
    #[error("bad magic")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
