use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::{parse_checkpoint, render_checkpoint, Checkpoint};
use super::config::{parse_config, ExperimentConfig, SystemKind};
use super::stats::Stats;
use super::{read_file, write_file, ExpError, Result};
use crate::dynsys::SystemSpec;
use crate::oracle;
use crate::tpddpg::{self, EpisodeLog, TrainOutcome};

pub const EPISODES_CSV: &str = "episodes.csv";
pub const FINAL_STATES_CSV: &str = "final_states.csv";
pub const TERMINAL_LOSSES_CSV: &str = "terminal_losses.csv";
pub const PATH_CSV: &str = "path.csv";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const SUMMARY: &str = "summary.json";
pub const CONFIG: &str = "config.toml";

const EPISODE_HEADER: [&str; 5] = ["episode", "running_cost_sum", "critic_loss", "terminal_loss", "total_cost"];

/// One line of `episodes.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub running_cost_sum: f64,
    pub critic_loss: f64,
    pub terminal_loss: f64,
    pub total_cost: f64,
}

impl From<&EpisodeLog> for EpisodeRow {
    fn from(l: &EpisodeLog) -> Self {
        Self {
            episode: l.episode,
            running_cost_sum: l.running_cost_sum,
            critic_loss: l.critic_loss,
            terminal_loss: l.terminal_loss,
            total_cost: l.total_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub system: String,
    pub dim: usize,
    pub seed: u64,
    pub episodes: usize,
    pub diverged_episodes: usize,
    pub failed: bool,
    pub window: [usize; 2],
    /// Mean accumulated running cost over the window.
    pub window_running_cost: Option<f64>,
    /// Noise-free terminal state of the final actor.
    pub predicted_final_state: Vec<f64>,
    pub predicted_terminal_cost: f64,
    /// `‖path_N − X_T‖` of the averaged path.
    pub averaged_endpoint_error: Option<f64>,
    /// Linear system only: closed-form action and path deviation.
    pub analytic_action: Option<f64>,
    pub max_path_error: Option<f64>,
}

/// Everything a run writes, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub episodes: Vec<EpisodeRow>,
    /// Last realised state of each episode.
    pub final_states: Vec<Vec<f64>>,
    /// Minibatch ℒ_pred at each timestep, per episode (empty if diverged).
    pub terminal_losses: Vec<Vec<f64>>,
    /// Window-averaged states `x_0..x_N`; empty if the whole window diverged.
    pub path: Vec<Vec<f64>>,
    pub checkpoint: Checkpoint,
    pub summary: Summary,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn indexed_header(first: &str, prefix: &str, n: usize, from: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((from..from + n).map(|i| format!("{prefix}{i}")))
        .collect()
}

fn max_path_error(spec: &SystemSpec, path: &[Vec<f64>]) -> f64 {
    let exact = oracle::analytic_linear_path(spec.x_start[0], spec.x_target[0], spec.horizon);
    path.iter()
        .enumerate()
        .map(|(k, s)| (s[0] - exact.eval(k as f64 * spec.dt())).abs())
        .fold(0.0, f64::max)
}

impl RunArtifacts {
    fn from_outcome(config: &ExperimentConfig, spec: &SystemSpec, outcome: &TrainOutcome) -> Result<Self> {
        let [lo, hi] = config.training.window;
        let path = outcome.averaged_path.clone().unwrap_or_default();
        let (predicted_final_state, predicted_terminal_cost) = outcome.final_prediction(spec)?;
        let linear = config.system.kind == SystemKind::Linear;
        let summary = Summary {
            system: spec.dynamics.name().to_string(),
            dim: spec.dim(),
            seed: config.training.seed,
            episodes: outcome.logs.len(),
            diverged_episodes: outcome.diverged_episodes,
            failed: outcome.failed,
            window: [lo, hi],
            window_running_cost: Stats::of(outcome.logs[lo..hi].iter().map(|l| l.running_cost_sum)).map(|s| s.mean),
            predicted_final_state,
            predicted_terminal_cost,
            averaged_endpoint_error: path.last().map(|end| {
                end.iter()
                    .zip(&spec.x_target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }),
            analytic_action: linear
                .then(|| oracle::action_closed_form_from_origin(spec.x_target[0], spec.horizon))
                .filter(|_| spec.x_start[0] == 0.0 && spec.noise == 1.0),
            max_path_error: (linear && !path.is_empty()).then(|| max_path_error(spec, &path)),
        };
        Ok(Self {
            dir: config.output.dir.clone(),
            config: config.clone(),
            episodes: outcome.logs.iter().map(EpisodeRow::from).collect(),
            final_states: outcome.logs.iter().map(|l| l.path.final_state().to_vec()).collect(),
            terminal_losses: outcome.logs.iter().map(|l| l.terminal_losses.clone()).collect(),
            path,
            checkpoint: Checkpoint {
                actor: outcome.agent.actor.clone(),
                critic: outcome.agent.critic.clone(),
            },
            summary,
        })
    }

    fn files(&self) -> Vec<(&'static str, String)> {
        let spec = self.config.spec().expect("validated config");
        let d = spec.dim();
        let episodes = csv_text(
            &EPISODE_HEADER.map(String::from),
            self.episodes.iter().map(|r| {
                vec![
                    r.episode.to_string(),
                    num(r.running_cost_sum),
                    num(r.critic_loss),
                    num(r.terminal_loss),
                    num(r.total_cost),
                ]
            }),
        );
        let finals = csv_text(
            &indexed_header("episode", "x_", d, 1),
            self.final_states
                .iter()
                .enumerate()
                .map(|(i, s)| std::iter::once(i.to_string()).chain(s.iter().map(|v| num(*v))).collect()),
        );
        let terminal = csv_text(
            &indexed_header("episode", "n_", spec.steps, 0),
            self.terminal_losses.iter().enumerate().map(|(i, l)| {
                let mut row = vec![i.to_string()];
                row.extend((0..spec.steps).map(|k| l.get(k).map_or_else(|| num(f64::NAN), |v| num(*v))));
                row
            }),
        );
        let path = csv_text(
            &indexed_header("t", "x_", d, 1),
            self.path.iter().enumerate().map(|(k, s)| {
                std::iter::once(num(k as f64 * spec.dt()))
                    .chain(s.iter().map(|v| num(*v)))
                    .collect()
            }),
        );
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serialises") + "\n";
        vec![
            (CONFIG, self.config.to_toml()),
            (EPISODES_CSV, episodes),
            (FINAL_STATES_CSV, finals),
            (TERMINAL_LOSSES_CSV, terminal),
            (PATH_CSV, path),
            (CHECKPOINT, render_checkpoint(&self.checkpoint.actor, &self.checkpoint.critic)),
            (SUMMARY, summary),
        ]
    }

    /// Writes all artifacts into `self.dir`.
    pub fn write(&self) -> Result<()> {
        for (name, text) in self.files() {
            write_file(&self.dir.join(name), &text)?;
        }
        Ok(())
    }

    /// Window of `episodes` as plain vectors, for plotting and statistics.
    pub fn column(&self, f: impl Fn(&EpisodeRow) -> f64) -> Vec<f64> {
        self.episodes.iter().map(f).collect()
    }
}

/// Trains with `config` and writes the artifacts to `config.output.dir`.
/// A run in which most episodes diverged is still written; its summary has
/// `failed = true`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let spec = config.spec()?;
    let hyper = config.hyper();
    let every = (hyper.episodes / 10).max(1);
    let outcome = tpddpg::train_with(&spec, &hyper, |l| {
        if l.episode % every == 0 || l.episode + 1 == hyper.episodes {
            log::info!(
                "episode {:>5}  running {:>10.4}  critic {:>10.3e}  terminal {:>10.3e}",
                l.episode,
                l.running_cost_sum,
                l.critic_loss,
                l.terminal_loss
            );
        }
    })?;
    let artifacts = RunArtifacts::from_outcome(config, &spec, &outcome)?;
    artifacts.write()?;
    Ok(artifacts)
}

fn artifact_err(path: &Path, reason: impl Into<String>) -> ExpError {
    ExpError::Artifact {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a CSV with a fixed header. Cells parse as f64 except the first
/// column, which is kept as f64 too (episode indices are exact).
fn read_table(path: &Path, header: &[String]) -> Result<Vec<Vec<f64>>> {
    let text = read_file(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| artifact_err(path, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if found != header {
        return Err(artifact_err(path, format!("header {found:?}, expected {header:?}")));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| artifact_err(path, e.to_string()))?;
            rec.iter()
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|_| artifact_err(path, format!("row {}: bad number `{cell}`", i + 1)))
                })
                .collect()
        })
        .collect()
}

/// Reloads a run directory and re-checks the total-cost identity
/// `total = running + g(final state)` on every finished episode.
pub fn load_artifacts(dir: &Path) -> Result<RunArtifacts> {
    let cfg_path = dir.join(CONFIG);
    let mut config = parse_config(&read_file(&cfg_path)?, &cfg_path)?;
    config.output.dir = dir.to_path_buf();
    let spec = config.spec()?;
    let d = spec.dim();

    let ep_path = dir.join(EPISODES_CSV);
    let episodes: Vec<EpisodeRow> = read_table(&ep_path, &EPISODE_HEADER.map(String::from))?
        .into_iter()
        .map(|r| EpisodeRow {
            episode: r[0] as usize,
            running_cost_sum: r[1],
            critic_loss: r[2],
            terminal_loss: r[3],
            total_cost: r[4],
        })
        .collect();
    let fs_path = dir.join(FINAL_STATES_CSV);
    let final_states: Vec<Vec<f64>> = read_table(&fs_path, &indexed_header("episode", "x_", d, 1))?
        .into_iter()
        .map(|r| r[1..].to_vec())
        .collect();
    if final_states.len() != episodes.len() {
        return Err(artifact_err(&fs_path, "row count differs from episodes.csv"));
    }
    for (row, state) in episodes.iter().zip(&final_states) {
        if row.total_cost.is_nan() {
            continue;
        }
        let expected = row.running_cost_sum + spec.terminal_cost(state)?;
        if expected != row.total_cost {
            return Err(artifact_err(
                &ep_path,
                format!("episode {}: total_cost {} != {}", row.episode, row.total_cost, expected),
            ));
        }
    }
    let tl_path = dir.join(TERMINAL_LOSSES_CSV);
    let terminal_losses = read_table(&tl_path, &indexed_header("episode", "n_", spec.steps, 0))?
        .into_iter()
        .map(|r| {
            let v = r[1..].to_vec();
            if v.iter().all(|x| x.is_nan()) {
                Vec::new()
            } else {
                v
            }
        })
        .collect();
    let path = read_table(&dir.join(PATH_CSV), &indexed_header("t", "x_", d, 1))?
        .into_iter()
        .map(|r| r[1..].to_vec())
        .collect();
    let ck_path = dir.join(CHECKPOINT);
    let checkpoint = parse_checkpoint(&read_file(&ck_path)?, &ck_path)?;
    let state_in = d + usize::from(config.network.time_input);
    checkpoint
        .expect_dims(state_in, spec.control_dim(), config.network.hidden)
        .map_err(|reason| ExpError::Checkpoint { path: ck_path, reason })?;
    let sm_path = dir.join(SUMMARY);
    let summary = serde_json::from_str(&read_file(&sm_path)?).map_err(|e| artifact_err(&sm_path, e.to_string()))?;
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        config,
        episodes,
        final_states,
        terminal_losses,
        path,
        checkpoint,
        summary,
    })
}
