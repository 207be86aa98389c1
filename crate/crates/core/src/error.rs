use std::path::PathBuf;

use crate::evalset::Domain;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("sample {id:?}: {field} has length {found}, expected {expected}")]
    LogitLength {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("sample {id:?}: label {label} out of range for {domain} domain with {classes} classes")]
    LabelOutOfRange {
        id: String,
        domain: Domain,
        label: usize,
        classes: usize,
    },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("sample {0:?}: logits must be finite")]
    NonFiniteLogit(String),

    #[error("sample {id:?}: detector_score {score} outside [0, 1]")]
    ScoreOutOfRange { id: String, score: f64 },

    #[error("sample {0:?}: detector_score required by the provided-score detector but absent")]
    MissingDetectorScore(String),

    #[error("detector_score required by the provided-score detector but absent from {} record(s):\n  {}", .0.len(), .0.join("\n  "))]
    MissingDetectorScores(Vec<String>),

    #[error("class counts missing: pass them explicitly or add a {{\"c_base\", \"c_new\"}} header line")]
    MissingClassCounts,

    #[error("class counts disagree: header says ({header_base}, {header_new}), caller says ({base}, {new})")]
    ClassCountMismatch {
        header_base: usize,
        header_new: usize,
        base: usize,
        new: usize,
    },

    #[error("class counts must be positive")]
    ZeroClasses,

    #[error("no {0} samples")]
    EmptyDomain(Domain),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective became non-finite at epoch {0}; lower the learning rate")]
    Diverged(usize),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_line(self, line: usize) -> Self {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }
}
