use std::path::PathBuf;

/// Errors raised by the segmentation library.
///
/// Every variant has a stable machine-readable name (see [`TssError::name`])
/// which the command-line front end prints on failure.
#[derive(Debug, thiserror::Error)]
pub enum TssError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbability(String),
    #[error("sequence of length {len} is too short (need at least {min})")]
    SequenceTooShort { len: usize, min: usize },
    #[error("no anchor available{}", .activity.as_ref().map(|a| format!(" for activity '{a}'")).unwrap_or_default())]
    NoAnchorAvailable { activity: Option<String> },
    #[error("missing loss term '{0}'")]
    MissingLossTerm(&'static str),
    #[error("invalid stride {0}, must be at least 1")]
    InvalidStride(usize),
    #[error("cannot align {actions} actions to {frames} frames")]
    InfeasibleAlignment { actions: usize, frames: usize },
    #[error("vicinity parameter {0} outside [0, 0.5]")]
    InvalidVicinity(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("forward cache does not match the current parameters")]
    StaleCache,
    #[error("grammar error in field '{field}': {message}")]
    GrammarError { field: String, message: String },
    #[error("could not cover all {num_classes} classes with {labelled} labelled videos")]
    CoverageInfeasible { num_classes: usize, labelled: usize },
    #[error("unknown action '{name}' in {path}")]
    UnknownAction { name: String, path: PathBuf },
    #[error("corrupt feature file {path}: {reason}")]
    CorruptFeatureFile { path: PathBuf, reason: String },
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("divergence detected at {0}")]
    DivergenceDetected(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl TssError {
    /// Stable identifier for the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            TssError::EmptySequence => "EmptySequence",
            TssError::LabelOutOfRange { .. } => "LabelOutOfRange",
            TssError::DimensionMismatch(_) => "DimensionMismatch",
            TssError::InvalidProbability(_) => "InvalidProbability",
            TssError::SequenceTooShort { .. } => "SequenceTooShort",
            TssError::NoAnchorAvailable { .. } => "NoAnchorAvailable",
            TssError::MissingLossTerm(_) => "MissingLossTerm",
            TssError::InvalidStride(_) => "InvalidStride",
            TssError::InfeasibleAlignment { .. } => "InfeasibleAlignment",
            TssError::InvalidVicinity(_) => "InvalidVicinity",
            TssError::InvalidParameter(_) => "InvalidParameter",
            TssError::StaleCache => "StaleCache",
            TssError::GrammarError { .. } => "GrammarError",
            TssError::CoverageInfeasible { .. } => "CoverageInfeasible",
            TssError::UnknownAction { .. } => "UnknownAction",
            TssError::CorruptFeatureFile { .. } => "CorruptFeatureFile",
            TssError::CorruptCheckpoint { .. } => "CorruptCheckpoint",
            TssError::InsufficientData(_) => "InsufficientData",
            TssError::DivergenceDetected(_) => "DivergenceDetected",
            TssError::Io { .. } => "IoError",
            TssError::Parse { .. } => "ParseError",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TssError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn grammar(field: impl Into<String>, message: impl Into<String>) -> Self {
        TssError::GrammarError {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TssError>;
