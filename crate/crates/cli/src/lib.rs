//! Library side of the `trackfuse` tool: argument definitions, the commands,
//! and the per-frame report CSV.

pub mod args;
pub mod commands;
pub mod report_csv;

use std::path::{Path, PathBuf};

use thiserror::Error;
use trackfuse_core::fusion::FusionError;
use trackfuse_core::hmm::HmmError;
use trackfuse_core::simulator::SimError;
use trackfuse_core::trace::TraceError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Trace { path: PathBuf, source: TraceError },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    /// 2 for numerical breakdowns, 1 for everything the user can fix in the input.
    pub fn exit_code(&self) -> i32 {
        let numeric = match self {
            CliError::Hmm(e) => e.is_numeric(),
            CliError::Fusion(e) => e.is_numeric(),
            CliError::Sim(SimError::Hmm(e)) => e.is_numeric(),
            CliError::Sim(SimError::Fusion(e)) => e.is_numeric(),
            CliError::Sim(SimError::ZeroLikelihood) => true,
            _ => false,
        };
        if numeric {
            2
        } else {
            1
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> Self + '_ {
        move |source| CliError::Json {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path) -> impl FnOnce(csv::Error) -> Self + '_ {
        move |source| CliError::Csv {
            path: path.to_owned(),
            source,
        }
    }
}
