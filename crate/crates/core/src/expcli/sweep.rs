use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunArtifacts};
use super::stats::Stats;
use super::{write_file, ExpError, Result};
use crate::par;

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Episodes that contributed.
    pub count: usize,
}

/// Converged terminal loss of one episode: mean ℒ_pred over the first
/// `timesteps` timesteps. `NaN` for a diverged episode.
fn converged_loss(losses: &[f64], timesteps: usize) -> f64 {
    let k = timesteps.min(losses.len());
    if k == 0 {
        return f64::NAN;
    }
    losses[..k].iter().sum::<f64>() / k as f64
}

/// Statistics of the converged terminal loss over the sweep window.
pub fn sweep_row(run: &RunArtifacts) -> Option<SweepRow> {
    let cfg = &run.config.sweep;
    let [lo, hi] = cfg.window;
    let values = run.terminal_losses[lo..hi].iter().map(|l| converged_loss(l, cfg.timesteps));
    Stats::of(values).map(|s| SweepRow {
        steps: run.config.system.steps,
        mean: s.mean,
        std: s.std,
        max: s.max,
        count: s.count,
    })
}

/// Trains `base` once per entry of `steps`, horizon fixed, each run in its
/// own `n_<N>` subdirectory, and writes `sweep.csv` to the base directory.
/// Runs are independent and execute in parallel.
pub fn terminal_loss_sweep(base: &ExperimentConfig, steps: &[usize]) -> Result<Vec<SweepRow>> {
    let [_, hi] = base.sweep.window;
    if hi > base.training.episodes {
        return Err(ExpError::config(
            "sweep.window",
            format!("ends at {hi} but only {} episodes are trained", base.training.episodes),
        ));
    }
    if steps.is_empty() {
        return Err(ExpError::config("n", "no step counts given"));
    }
    let configs: Vec<ExperimentConfig> = steps
        .iter()
        .map(|&n| {
            let mut cfg = base.clone();
            cfg.system.steps = n;
            cfg.output.dir = base.output.dir.join(format!("n_{n}"));
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;
    let runs = par::map(&configs, run_experiment);
    let mut rows = Vec::with_capacity(runs.len());
    for (run, n) in runs.into_iter().zip(steps) {
        let run = run?;
        let row = sweep_row(&run).unwrap_or(SweepRow {
            steps: *n,
            mean: f64::NAN,
            std: f64::NAN,
            max: f64::NAN,
            count: 0,
        });
        rows.push(row);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "mean", "std", "max", "count"]).expect("in-memory write");
    for r in &rows {
        w.write_record([
            r.steps.to_string(),
            format!("{:?}", r.mean),
            format!("{:?}", r.std),
            format!("{:?}", r.max),
            r.count.to_string(),
        ])
        .expect("in-memory write");
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output");
    write_file(&base.output.dir.join(SWEEP_CSV), &text)?;
    Ok(rows)
}
