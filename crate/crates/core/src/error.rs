use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis pipeline.
///
/// Each variant maps onto a stable reason code (see [`Error::code`]) that the
/// CLI prints and that the JSON reports carry.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("input has no header row or the header does not match `{expected}`")]
    MissingHeader { expected: &'static str },

    #[error("event has no records")]
    EmptyEvent,

    #[error("event records carry mixed major-storm flags")]
    MixedStormFlags,

    #[error("record `{record_id}` has no category label")]
    MissingLabel { record_id: String },

    #[error("region cells do not form an axis-aligned rectangle")]
    NonRectangular,

    #[error("{n} samples is fewer than the {folds} cross-validation folds")]
    TooFewSamples { n: usize, folds: usize },

    #[error("grids do not share bin edges")]
    BinMismatch,

    #[error("total interruption duration is zero")]
    DegenerateDurations,

    #[error("event has no failure above the large-size threshold")]
    NoLargeFailures,

    #[error("synthetic configuration requests zero failures")]
    EmptyConfig,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("required artifact missing: {}", path.display())]
    MissingArtifact { path: PathBuf },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingHeader { .. } => "MISSING_HEADER",
            Error::EmptyEvent => "EMPTY_EVENT",
            Error::MixedStormFlags => "MIXED_STORM_FLAGS",
            Error::MissingLabel { .. } => "MISSING_LABEL",
            Error::NonRectangular => "NON_RECTANGULAR",
            Error::TooFewSamples { .. } => "TOO_FEW_SAMPLES",
            Error::BinMismatch => "BIN_MISMATCH",
            Error::DegenerateDurations => "DEGENERATE_DURATIONS",
            Error::NoLargeFailures => "NO_LARGE_FAILURES",
            Error::EmptyConfig => "EMPTY_CONFIG",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::MissingArtifact { .. } => "MISSING_ARTIFACT",
            Error::Io { .. } => "IO",
            Error::Csv(_) => "CSV",
            Error::Json(_) => "JSON",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
