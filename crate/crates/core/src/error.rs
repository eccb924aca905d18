use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ingestion
    #[error("malformed frame-stream header: {0}")]
    MalformedHeader(String),
    #[error("truncated frame-stream payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("unsupported frame-stream version {0:?}")]
    UnsupportedVersion(String),
    #[error("ROI out of bounds at frame {0}")]
    RoiOutOfBounds(usize),
    #[error("ROI frame index {0} is not strictly increasing")]
    RoiOrder(usize),
    #[error("non-numeric value on line {0}")]
    NonNumericLine(usize),
    #[error("sampling rate {from} Hz is not an integer multiple of {to} Hz")]
    NonIntegerRatio { from: f64, to: f64 },
    #[error("too many gaps: {fraction:.3} of samples missing (limit 0.2)")]
    TooManyGaps { fraction: f64 },

    // signal processing
    #[error("window too short: {len} samples, need at least {min}")]
    WindowTooShort { len: usize, min: usize },
    #[error("bad moving-average size {size} for window of {len} samples")]
    BadSize { size: usize, len: usize },
    #[error("empty spectrum: no in-band power")]
    EmptySpectrum,
    #[error("invalid pipeline configuration: {0}")]
    BadPipelineConfig(String),

    // estimation
    #[error("trace too short: {duration:.3} s, window needs {window:.3} s")]
    TraceTooShort { duration: f64, window: f64 },
    #[error("unusable window starting at {start:.3} s")]
    UnusableWindow { start: f64 },
    #[error("invalid window specification: {0}")]
    BadWindowSpec(String),

    // simulation / calibration
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("artifact [{start}, {end}] s lies outside the trace")]
    ArtifactOutOfRange { start: f64, end: f64 },
    #[error("calibration reference set is empty")]
    EmptyReference,
    #[error("malformed calibration file: {0}")]
    BadCalibration(String),

    // evaluation
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no comparable window pairs")]
    NothingToCompare,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed estimates file: {0}")]
    BadEstimates(String),

    // plumbing
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI. Every variant maps to its own code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MalformedHeader(_) => 10,
            Error::TruncatedPayload { .. } => 11,
            Error::UnsupportedVersion(_) => 12,
            Error::RoiOutOfBounds(_) => 13,
            Error::RoiOrder(_) => 17,
            Error::NonNumericLine(_) => 14,
            Error::NonIntegerRatio { .. } => 15,
            Error::TooManyGaps { .. } => 16,
            Error::WindowTooShort { .. } => 20,
            Error::BadSize { .. } => 21,
            Error::EmptySpectrum => 22,
            Error::BadPipelineConfig(_) => 23,
            Error::TraceTooShort { .. } => 30,
            Error::UnusableWindow { .. } => 31,
            Error::BadWindowSpec(_) => 32,
            Error::BadConfig(_) => 40,
            Error::ArtifactOutOfRange { .. } => 41,
            Error::EmptyReference => 42,
            Error::BadCalibration(_) => 43,
            Error::LengthMismatch { .. } => 50,
            Error::NothingToCompare => 51,
            Error::EmptyCorpus => 52,
            Error::BadEstimates(_) => 53,
            Error::Io { .. } => 60,
            Error::Json(_) => 61,
            Error::Csv(_) => 62,
            Error::Usage(_) => 2,
        }
    }
}
