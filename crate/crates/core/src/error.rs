use std::path::PathBuf;

use crate::table::PlotType;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can surface. Variants are grouped by the
/// stage that produces them; [`Error::stage`] exposes the grouping so
/// front ends can map it onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // tables
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("table has {found} numeric column(s), need at least 2")]
    TooFewColumns { found: usize },
    #[error("table has {found} row(s), need at least {min}")]
    TooFewRows { found: usize, min: usize },
    #[error("cannot split an empty id list")]
    EmptyInput,

    // statistics
    #[error("statistics of an empty sequence are undefined")]
    EmptySequence,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    // rendering
    #[error("column {column:?} holds value {value} outside [0, 1]; normalize the table first")]
    NotNormalized { column: String, value: f64 },
    #[error("expected exactly 2 columns, found {found}")]
    WrongArity { found: usize },
    #[error("invalid render config: {0}")]
    InvalidRenderConfig(String),

    // regressor
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("no training pairs for {0}")]
    EmptyTrainingSet(PlotType),
    #[error("ensemble needs at least one member")]
    EmptyEnsemble,
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("bundle version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),

    // selection
    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("no model for {0}")]
    MissingModel(PlotType),

    // evaluation
    #[error("judgment references unknown task {0:?}")]
    UnknownTask(String),
    #[error("prediction and gold key sets differ: {0}")]
    KeyMismatch(String),
    #[error("invalid judgment: {0}")]
    InvalidJudgment(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Pipeline stage an [`Error`] originates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Table,
    Stats,
    Render,
    Model,
    Select,
    Eval,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn stage(&self) -> Stage {
        use Error::*;
        match self {
            MalformedInput(_) | TooFewColumns { .. } | TooFewRows { .. } | EmptyInput => {
                Stage::Table
            }
            EmptySequence | LengthMismatch { .. } => Stage::Stats,
            NotNormalized { .. } | WrongArity { .. } | InvalidRenderConfig(_) => Stage::Render,
            ShapeMismatch { .. }
            | InvalidArchitecture(_)
            | EmptyTrainingSet(_)
            | EmptyEnsemble
            | InvalidTrainConfig(_)
            | VersionMismatch { .. }
            | CorruptBundle(_) => Stage::Model,
            KOutOfRange { .. } | MissingModel(_) => Stage::Select,
            UnknownTask(_) | KeyMismatch(_) | InvalidJudgment(_) => Stage::Eval,
            Io { .. } => Stage::Io,
        }
    }
}
