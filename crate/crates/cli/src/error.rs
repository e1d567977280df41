//! Error classification for exit codes: 1 for I/O, 2 for validation,
//! 3 for training divergence.

use hydrolstm::analysis::AnalysisError;
use hydrolstm::attribution::AttributionError;
use hydrolstm::checkpoint::CheckpointError;
use hydrolstm::data::DataError;
use hydrolstm::grad::GradError;
use hydrolstm::lstm::ModelError;
use hydrolstm::metrics::MetricError;
use hydrolstm::synthetic::SyntheticError;
use hydrolstm::train::TrainError;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Divergence(msg) => write!(f, "{msg}"),
        }
    }
}

pub fn io_error(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Io(format!("cannot access {}: {source}", path.display()))
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteState { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GradError> for CliError {
    fn from(e: GradError) -> Self {
        match e {
            GradError::NonFiniteGradient => CliError::Divergence(e.to_string()),
            GradError::Model(m) => m.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Divergence(e.to_string()),
            TrainError::Grad(g) => g.into(),
            TrainError::Model(m) => m.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AttributionError> for CliError {
    fn from(e: AttributionError) -> Self {
        match e {
            AttributionError::Grad(g) => g.into(),
            AttributionError::Model(m) => m.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Attribution(a) => a.into(),
            AnalysisError::Model(m) => m.into(),
            AnalysisError::Data(d) => d.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SyntheticError> for CliError {
    fn from(e: SyntheticError) -> Self {
        match e {
            SyntheticError::Data(d) => d.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
