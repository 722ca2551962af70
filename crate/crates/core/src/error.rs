//! Shared error type for the library.
//!
//! Every fallible operation returns [`Error`]. Variants are grouped by the
//! contract they enforce: input-data contracts (labels, probabilities,
//! files), statistical preconditions (empty score lists, undefined kappa),
//! and structural mismatches (label spaces, noise series).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Miscoverage level outside the open interval (0, 1).
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),

    /// A quantile was requested over an empty score list.
    #[error("cannot take a conformal quantile of an empty score list")]
    EmptyScores,

    /// A record that must carry a true label does not.
    #[error("record `{sample_id}` has no true label")]
    MissingTrueLabel { sample_id: String },

    /// Calibration set too small for the requested method.
    #[error("calibration set has {got} records but the method needs at least {needed}")]
    CalibrationTooSmall { needed: usize, got: usize },

    /// A probability vector's length disagrees with the label space.
    #[error("expected {expected} class probabilities, got {got}")]
    LabelSpaceMismatch { expected: usize, got: usize },

    /// Label-space construction rejected the class list.
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    /// A label string is neither a class name nor a merge-table key.
    #[error("unknown label `{label}`")]
    UnknownLabel { label: String },

    /// A prediction set references a sample with no consensus label.
    #[error("no consensus label for sample `{sample_id}`")]
    MissingConsensus { sample_id: String },

    /// A prediction set references a sample with no annotations.
    #[error("no annotations for sample `{sample_id}`")]
    MissingAnnotation { sample_id: String },

    /// An annotation set violated a precondition (e.g. no labels).
    #[error("annotation set for sample `{sample_id}` is empty")]
    EmptyAnnotations { sample_id: String },

    /// An operation received an empty collection it cannot summarize.
    #[error("{what} is empty")]
    EmptyCollection { what: &'static str },

    /// Too few usable items to estimate inter-rater agreement.
    #[error("kappa needs at least 2 usable items, got {got}")]
    TooFewKappaItems { got: usize },

    /// All raters placed all items in one category; kappa is undefined.
    #[error("kappa undefined: all ratings fall in a single category (zero variance)")]
    KappaUndefined,

    /// A noise series violated its structural invariants.
    #[error("invalid noise series: {0}")]
    InvalidSeries(String),

    /// A generator spec violated its invariants.
    #[error("invalid generator spec: {0}")]
    InvalidGeneratorSpec(String),

    /// A file could not be parsed; carries location when known.
    #[error("{path}{}: {msg}", .line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        path: String,
        line: Option<u64>,
        msg: String,
    },

    /// Filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    FileIo {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Builds a parse error for `path` with an optional 1-indexed line.
    pub fn parse(path: impl Into<String>, line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Wraps an I/O error with the offending path.
    pub fn file_io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::FileIo {
            path: path.into(),
            source,
        }
    }
}
