use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ompath::expcli::{self, ExpError, ExperimentConfig, RunArtifacts};
use ompath::par;

#[derive(Parser)]
#[command(name = "ompath", version, about = "Most probable transition paths with terminal-prediction DDPG")]
struct Cli {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a config (file path or preset name) and write artifacts and plots.
    Run {
        config: PathBuf,
        /// Independent runs, one per seed, written to `<out>/seed_<s>`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Terminal-loss statistics as a function of the number of steps N.
    SweepN {
        config: PathBuf,
        #[arg(long = "n", value_delimiter = ',', required = true)]
        steps: Vec<usize>,
    },
    /// Re-render the SVG plots of a run directory.
    Plot {
        dir: PathBuf,
        /// Overlay the closed-form path (linear system).
        #[arg(long)]
        compare_analytic: bool,
    },
    /// Oracle-backed consistency checks for a config.
    Verify { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, ExpError> {
    let mut cfg = expcli::load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.training.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn report(run: &RunArtifacts) {
    let s = &run.summary;
    println!("{}", run.dir.display());
    println!("  system            {} (d = {}), seed {}", s.system, s.dim, s.seed);
    println!("  diverged episodes {} of {}", s.diverged_episodes, s.episodes);
    if let Some(c) = s.window_running_cost {
        println!("  window {:?} running cost {c:.6}", s.window);
    }
    if let Some(a) = s.analytic_action {
        println!("  analytic action   {a:.6}");
    }
    if let Some(e) = s.max_path_error {
        println!("  max path error    {e:.6}");
    }
    if let Some(e) = s.averaged_endpoint_error {
        println!("  endpoint error    {e:.3e}");
    }
    println!("  predicted g(s_N)  {:.6e}", s.predicted_terminal_cost);
}

fn run_one(cfg: &ExperimentConfig) -> Result<RunArtifacts, ExpError> {
    let run = expcli::run_experiment(cfg)?;
    expcli::emit_plots(&run, &run.dir, cfg.output.compare_analytic)?;
    Ok(run)
}

fn execute(cli: &Cli) -> Result<(), ExpError> {
    match &cli.command {
        Command::Run { config, seeds } => {
            let cfg = load(cli, config)?;
            let configs: Vec<ExperimentConfig> = if seeds.is_empty() {
                vec![cfg]
            } else {
                seeds
                    .iter()
                    .map(|&s| {
                        let mut c = cfg.clone();
                        c.training.seed = s;
                        c.output.dir = cfg.output.dir.join(format!("seed_{s}"));
                        c
                    })
                    .collect()
            };
            let runs = par::map(&configs, run_one);
            let mut failed = None;
            for run in runs {
                let run = run?;
                report(&run);
                if run.summary.failed {
                    failed = Some(ExpError::Diverged {
                        diverged: run.summary.diverged_episodes,
                        episodes: run.summary.episodes,
                    });
                }
            }
            failed.map_or(Ok(()), Err)
        }
        Command::SweepN { config, steps } => {
            let cfg = load(cli, config)?;
            let rows = expcli::terminal_loss_sweep(&cfg, steps)?;
            println!("{:>6} {:>12} {:>12} {:>12} {:>6}", "N", "mean", "std", "max", "count");
            for r in &rows {
                println!("{:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>6}", r.steps, r.mean, r.std, r.max, r.count);
            }
            println!("written to {}", cfg.output.dir.join("sweep.csv").display());
            Ok(())
        }
        Command::Plot { dir, compare_analytic } => {
            let run = expcli::load_artifacts(dir)?;
            let compare = *compare_analytic || run.config.output.compare_analytic;
            for p in expcli::emit_plots(&run, dir, compare)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Verify { config } => {
            let cfg = load(cli, config)?;
            let checks = expcli::verify(&cfg)?;
            for c in &checks {
                println!("{} {:<44} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(ExpError::Verification {
                    failed,
                    total: checks.len(),
                });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
