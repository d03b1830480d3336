use std::path::PathBuf;

use stkit_core::atomic::FormatError;
use stkit_core::baselines::ModelError;
use stkit_core::evaluate::MetricError;
use stkit_core::mapmatch::MatchError;
use stkit_core::pipeline::PipelineError;
use stkit_core::tensorize::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown command-line key `--{0}`")]
    UnknownCliKey(String),
    #[error("flag `--{0}` needs a value")]
    MissingCliValue(String),
    #[error("bad config file {path}: {reason}")]
    BadConfigFile { path: PathBuf, reason: String },
    #[error("config key `{key}`: {reason}")]
    BadConfigValue { key: String, reason: String },
    #[error("missing required config key `{0}`")]
    MissingKey(String),
    #[error("dataset `{0}` not found (checked the path and $STKIT_DATA_DIR)")]
    DatasetNotFound(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("model `{model}` does not support task `{task}`")]
    IncompatibleModelTask { model: String, task: String },
    #[error("search space: {0}")]
    BadSearchSpace(String),
    #[error("grid search cannot enumerate the continuous domain of `{0}`")]
    ContinuousDomainInGrid(String),
    #[error("objective `{0}` missing from trial metrics")]
    MissingObjective(String),
    #[error("no run records found under {0}")]
    NoResults(PathBuf),
    #[error("dataset is unusable for this task: {0}")]
    Unusable(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

impl BenchError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
        let path = path.into();
        move |source| BenchError::Io { path, source }
    }

    /// 2 for invalid data, 3 for configuration mistakes, 4 for anything else.
    pub fn exit_code(&self) -> i32 {
        use BenchError::*;
        match self {
            Format(FormatError::Io(_)) => 4,
            Format(_) | Unusable(_) => 2,
            UnknownCliKey(_)
            | MissingCliValue(_)
            | BadConfigFile { .. }
            | BadConfigValue { .. }
            | MissingKey(_)
            | DatasetNotFound(_)
            | UnknownTask(_)
            | IncompatibleModelTask { .. }
            | BadSearchSpace(_)
            | ContinuousDomainInGrid(_)
            | MissingObjective(_) => 3,
            _ => 4,
        }
    }
}
