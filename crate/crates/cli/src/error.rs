//! Stage failures and their exit codes.

use std::fmt;

use fstack_core::Error;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    Config,
    Data,
    Divergence,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 2,
            ExitKind::Data => 3,
            ExitKind::Divergence => 4,
        }
    }
}

/// A failed stage, printed to stderr as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: String,
    pub item: String,
    pub error: String,
    pub kind: ExitKind,
    pub exit_code: i32,
}

impl Failure {
    pub fn new(kind: ExitKind, stage: &str, item: impl fmt::Display, error: impl fmt::Display) -> Self {
        Failure {
            stage: stage.to_string(),
            item: item.to_string(),
            error: error.to_string(),
            kind,
            exit_code: kind.code(),
        }
    }

    pub fn config(stage: &str, item: impl fmt::Display, error: impl fmt::Display) -> Self {
        Failure::new(ExitKind::Config, stage, item, error)
    }

    pub fn data(stage: &str, item: impl fmt::Display, error: impl fmt::Display) -> Self {
        Failure::new(ExitKind::Data, stage, item, error)
    }

    pub fn record(&self) -> String {
        serde_json::to_string(self).expect("failure records serialize")
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.stage, self.item, self.error)
    }
}

pub fn classify(e: &Error) -> ExitKind {
    match e {
        Error::Divergence(_) | Error::SingularWarp(_) => ExitKind::Divergence,
        Error::InvalidParameter(_) | Error::InsufficientBursts { .. } => ExitKind::Config,
        _ => ExitKind::Data,
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Attach a stage and item to a core error.
pub trait AtStage<T> {
    fn at(self, stage: &str, item: impl fmt::Display) -> CliResult<T>;
}

impl<T> AtStage<T> for fstack_core::Result<T> {
    fn at(self, stage: &str, item: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| Failure::new(classify(&e), stage, item, e))
    }
}

impl<T> AtStage<T> for std::io::Result<T> {
    fn at(self, stage: &str, item: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| Failure::data(stage, item, e))
    }
}
