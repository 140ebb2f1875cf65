use std::path::PathBuf;

use mocap_core::calibration::{CalibError, ProfileError};
use mocap_core::kinematics::KinematicsError;
use mocap_core::neural::{CheckpointError, NeuralError};
use mocap_core::pipeline::{PipelineError, RecordError};
use mocap_core::synth::{ClipFormatError, DatasetError, SynthError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config file not found: {}", .0.display())]
    MissingConfig(PathBuf),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Calibration(#[from] CalibError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Training(#[from] NeuralError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Clip(#[from] ClipFormatError),
    #[error(transparent)]
    Skeleton(#[from] KinematicsError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    /// Stable code printed before the message.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "USAGE",
            CliError::MissingConfig(_) => "CONFIG_MISSING",
            CliError::Pipeline(e) => e.code(),
            CliError::Record(_) => "RECORD",
            CliError::Calibration(_) => "CALIBRATION",
            CliError::Profile(_) => "PROFILE",
            CliError::Checkpoint(_) => "CHECKPOINT",
            CliError::Training(_) => "TRAINING",
            CliError::Dataset(_) => "DATASET",
            CliError::Synth(_) | CliError::Clip(_) => "SYNTH",
            CliError::Skeleton(_) => "SKELETON",
            CliError::Io { .. } => "IO",
            CliError::Invalid(_) => "INVALID",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::MissingConfig(_) => 2,
            _ => 1,
        }
    }
}
