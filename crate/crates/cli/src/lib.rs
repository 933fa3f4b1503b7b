//! Experiment runner for the repeat-authenticate multicast scheme: grid
//! sweeps over the analytical model and the simulator, CSV output, the
//! analysis-versus-simulation comparison and the two figure presets.

use std::path::{Path, PathBuf};

use thiserror::Error;

mod app;
pub mod output;
pub mod plot;
pub mod run;
pub mod spec;

pub use app::{execute, run_cli, Cli, Command, Outcome};
pub use spec::ExperimentSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
