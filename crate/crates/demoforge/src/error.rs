use std::path::{Path, PathBuf};

use demoforge_core::cloud::CloudError;
use demoforge_core::correspondence::CorrespondenceError;
use demoforge_core::demo::DemoError;
use demoforge_core::kinematics::KinematicsError;
use demoforge_core::mesh::MeshError;
use demoforge_core::synth::SynthError;
use demoforge_core::transfer::TransferError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("index {index} out of range ({len} available)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("all {0} tasks failed")]
    AllFailed(usize),
    #[error("descriptor service: {0}")]
    Service(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Correspondence(#[from] CorrespondenceError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl Error {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
        move |source| Error::Json { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: path.to_path_buf(), line, message: message.into() }
    }

    /// Process exit code for the command line.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::AllFailed(_) => 3,
            _ => 1,
        }
    }
}
