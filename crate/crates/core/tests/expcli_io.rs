use std::path::Path;
use std::process::Command;

use ompath::expcli::{
    self, load_artifacts, load_checkpoint, parse_checkpoint, render_checkpoint, run_experiment, save_checkpoint,
    terminal_loss_sweep, ExpError, ExperimentConfig,
};
use ompath::nn::{ActorNet, CriticNet};
use ompath::{tpddpg, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick_linear(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("linear_0to2").unwrap();
    cfg.training.episodes = 40;
    cfg.training.window = [10, 40];
    cfg.output.dir = dir.to_path_buf();
    cfg
}

#[test]
fn checkpoint_roundtrip_on_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..100 {
        let (d, u, k) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..40));
        let actor = ActorNet::init(d, k, u, rng.random_range(0.5..20.0), &mut rng);
        let critic = CriticNet::init(d, u, k, &mut rng);
        let path = dir.path().join(format!("net_{i}.txt"));
        save_checkpoint(&actor, &critic, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.actor, actor);
        assert_eq!(back.critic, critic);
        let s = Tensor::from_vec(3, d, (0..3 * d).map(|_| rng.random_range(-2.0..2.0)).collect());
        let a = Tensor::from_vec(3, u, (0..3 * u).map(|_| rng.random_range(-2.0..2.0)).collect());
        assert_eq!(back.actor.forward_batch(&s).unwrap(), actor.forward_batch(&s).unwrap());
        assert_eq!(back.critic.forward_batch(&s, &a).unwrap(), critic.forward_batch(&s, &a).unwrap());
    }
}

#[test]
fn damaged_checkpoints_give_structured_errors() {
    let actor = ActorNet::from_seed(2, 5, 2, 3.0, 1);
    let critic = CriticNet::from_seed(2, 2, 5, 2);
    let text = render_checkpoint(&actor, &critic);
    let origin = Path::new("ck.txt");
    let cut = &text[..text.len() / 2];
    assert!(matches!(parse_checkpoint(cut, origin), Err(ExpError::Checkpoint { .. })));
    assert!(matches!(parse_checkpoint("", origin), Err(ExpError::Checkpoint { .. })));
    let garbled = text.replacen("ompath-checkpoint 1", "something else", 1);
    assert!(parse_checkpoint(&garbled, origin).is_err());

    let ck = parse_checkpoint(&text, origin).unwrap();
    let msg = ck.expect_dims(3, 3, 7).unwrap_err();
    assert!(msg.contains("expected (3, 3, 7)") && msg.contains("found (2, 2, 5)"), "{msg}");
}

#[test]
fn runs_are_reloadable_and_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = run_experiment(&quick_linear(a.path())).unwrap();
    run_experiment(&quick_linear(b.path())).unwrap();
    for file in ["episodes.csv", "final_states.csv", "terminal_losses.csv", "path.csv", "checkpoint.txt", "summary.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between reruns");
    }
    assert_eq!(run.episodes.len(), 40);
    let text = std::fs::read_to_string(a.path().join("episodes.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "episode,running_cost_sum,critic_loss,terminal_loss,total_cost");
    assert_eq!(text.lines().count(), 41);
    assert!(std::fs::read_to_string(a.path().join("path.csv")).unwrap().starts_with("t,x_1\n"));

    let mut loaded = load_artifacts(a.path()).unwrap();
    loaded.dir = run.dir.clone();
    assert_eq!(loaded.config, run.config);
    assert_eq!(loaded.episodes, run.episodes);
    assert_eq!(loaded.final_states, run.final_states);
    assert_eq!(loaded.terminal_losses, run.terminal_losses);
    assert_eq!(loaded.path, run.path);
    assert_eq!(loaded.checkpoint, run.checkpoint);
    assert_eq!(loaded.summary, run.summary);
    assert_eq!(loaded, run);
}

#[test]
fn tampered_total_cost_is_rejected_on_load() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&quick_linear(dir.path())).unwrap();
    let csv_path = dir.path().join("episodes.csv");
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[5].split(',').map(String::from).collect();
    let total: f64 = fields[4].parse().unwrap();
    fields[4] = format!("{:?}", total + 1e-9);
    lines[5] = fields.join(",");
    std::fs::write(&csv_path, lines.join("\n") + "\n").unwrap();
    let err = load_artifacts(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn checkpointed_actor_reproduces_the_learned_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset("linear_0to2")
        .map(|mut c| {
            c.output.dir = dir.path().to_path_buf();
            c
        })
        .unwrap();
    let run = run_experiment(&cfg).unwrap();
    let spec = cfg.spec().unwrap();
    let ck = load_checkpoint(&dir.path().join("checkpoint.txt")).unwrap();
    let (end, _) = tpddpg::terminal_predict(&spec, &ck.actor, &spec.x_start, 0).unwrap();
    assert_eq!(end, run.summary.predicted_final_state);

    // Noise-free rollout of the final policy against the exploratory window mean.
    let mut s = spec.x_start.clone();
    let mut worst: f64 = 0.0;
    for (t, avg) in run.path.iter().enumerate().take(spec.steps) {
        worst = worst.max((s[0] - avg[0]).abs());
        let obs = tpddpg::observe(&spec, true, &Tensor::row(&s), t);
        s = spec.step(&s, &ck.actor.forward_batch(&obs).unwrap().into_vec()).unwrap();
    }
    assert!(worst < 0.25, "rollout deviates from averaged path by {worst}");
}

#[test]
fn plots_are_structured_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&quick_linear(dir.path())).unwrap();
    let files = expcli::emit_plots(&run, dir.path(), true).unwrap();
    assert_eq!(files.len(), 4);
    let svg = std::fs::read_to_string(dir.path().join("path.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("stroke-dasharray"));
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    let files = expcli::emit_plots(&run, dir.path(), true).unwrap();
    let second: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(first, second);

    expcli::emit_plots(&run, dir.path(), false).unwrap();
    let plain = std::fs::read_to_string(dir.path().join("path.svg")).unwrap();
    assert_eq!(plain.matches("<polyline").count(), 1);
}

#[test]
fn lactose_path_has_three_panels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("lactose").unwrap();
    cfg.training.episodes = 4;
    cfg.training.warmup_trajectories = 4;
    cfg.training.window = [0, 4];
    cfg.output.dir = dir.path().to_path_buf();
    let run = run_experiment(&cfg).unwrap();
    expcli::emit_plots(&run, dir.path(), true).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("path.svg")).unwrap();
    for i in 1..=3 {
        assert!(svg.contains(&format!("Transition path, component {i}")));
    }
    assert!(!svg.contains("analytic"));
}

#[test]
fn single_n_sweep_is_one_runs_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("maier_stein_b1").unwrap();
    cfg.training.episodes = 30;
    cfg.training.warmup_trajectories = 8;
    cfg.training.window = [10, 30];
    cfg.sweep.window = [10, 30];
    cfg.output.dir = dir.path().to_path_buf();
    let rows = terminal_loss_sweep(&cfg, &[20]).unwrap();
    assert_eq!(rows.len(), 1);
    let run = load_artifacts(&dir.path().join("n_20")).unwrap();
    assert_eq!(Some(rows[0].clone()), expcli::sweep_row(&run));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(table.starts_with("n,mean,std,max,count\n20,"));

    cfg.sweep.window = [10, 31];
    assert_eq!(terminal_loss_sweep(&cfg, &[20]).unwrap_err().exit_code(), 1);
}

fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ompath"));
    c.env("RUST_LOG", "error");
    c
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nkind = \"linear\"\nx0 = 0.0\nx1 = 2.0\nhorizon = -1.0\nsteps = 20\n").unwrap();
    let out = cli().args(["run"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));

    let out = cli().arg("plot").arg(dir.path().join("missing")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = cli().args(["verify", "linear_0to2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");

    let cfg_path = dir.path().join("quick.toml");
    std::fs::write(&cfg_path, quick_linear(&dir.path().join("ignored")).to_toml()).unwrap();
    let out_dir = dir.path().join("seeds");
    let out = cli()
        .args(["--out"])
        .arg(&out_dir)
        .arg("run")
        .arg(&cfg_path)
        .args(["--seeds", "3,4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for s in [3, 4] {
        let run = load_artifacts(&out_dir.join(format!("seed_{s}"))).unwrap();
        assert_eq!(run.summary.seed, s);
        assert!(out_dir.join(format!("seed_{s}/path.svg")).exists());
    }
    let out = cli().arg("plot").arg(out_dir.join("seed_3")).arg("--compare-analytic").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
