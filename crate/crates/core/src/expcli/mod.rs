//! Experiment shell: TOML configs, run artifacts, checkpoints, the
//! terminal-loss sweep and SVG plots.
//!
//! A run directory holds
//! - `config.toml`: the effective configuration,
//! - `episodes.csv`: `episode,running_cost_sum,critic_loss,terminal_loss,total_cost`,
//! - `final_states.csv`: `episode,x_1..x_d`, the last realised state of each episode,
//! - `terminal_losses.csv`: `episode,n_0..n_{N-1}`, minibatch ℒ_pred per timestep,
//! - `path.csv`: `t,x_1..x_d`, the window-averaged path,
//! - `checkpoint.txt` and `summary.json`.
//!
//! Every number is written in shortest round-trip form, so reloading gives
//! back the exact in-memory values and reruns are byte-identical.

mod checkpoint;
mod config;
mod plot;
mod run;
mod stats;
mod sweep;
mod verify;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dynsys::DynError;
use crate::nn::NnError;
use crate::tpddpg::TpError;

pub use checkpoint::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, Checkpoint};
pub use config::{load_config, parse_config, ExperimentConfig, NetworkConfig, OutputConfig, SweepConfig, SystemConfig, SystemKind, TrainingConfig};
pub use plot::{emit_plots, Chart, Panel, Series};
pub use run::{load_artifacts, run_experiment, EpisodeRow, RunArtifacts, Summary};
pub use stats::{moving_average_change, Stats};
pub use sweep::{sweep_row, terminal_loss_sweep, SweepRow};
pub use verify::{sample_state, verify, Check};

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("training failed: {0}")]
    Train(#[from] TpError),
    #[error("training diverged in {diverged} of {episodes} episodes")]
    Diverged { diverged: usize, episodes: usize },
    #[error("{failed} of {total} verification checks failed")]
    Verification { failed: usize, total: usize },
}

impl From<DynError> for ExpError {
    fn from(e: DynError) -> Self {
        ExpError::Train(e.into())
    }
}

impl From<NnError> for ExpError {
    fn from(e: NnError) -> Self {
        ExpError::Train(e.into())
    }
}

impl ExpError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExpError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ExpError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 1 config, 2 training divergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Parse { .. } | ExpError::Config { .. } => 1,
            ExpError::Diverged { .. } | ExpError::Verification { .. } => 2,
            ExpError::Train(e) if e.is_divergence() => 2,
            ExpError::Train(TpError::InvalidHyper { .. }) => 1,
            ExpError::Train(_) => 2,
            ExpError::Io { .. } | ExpError::Artifact { .. } | ExpError::Checkpoint { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| ExpError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))
}
