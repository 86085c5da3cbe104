//! Front end for the `hslra` binary: reads data files, runs the solver or
//! the seeded sweeps, and writes JSON results plus TSV series.

use std::path::{Path, PathBuf};

pub mod config;
pub mod input;
mod run;

pub use config::{Args, Mode, RunConfig};
pub use run::{run, Manifest, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: input::ParseError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] hankel_slra::Error),
    #[error("{0}")]
    Config(String),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
