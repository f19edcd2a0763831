//! Oracle-backed self-checks behind the `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, SystemKind};
use super::Result;
use crate::dynsys::{DynError, Dynamics, SystemSpec};
use crate::nn::{ActorNet, CriticNet};
use crate::oracle;
use crate::tensor::Tensor;
use crate::tpddpg::{self, ActorTerms};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// A random state in the region the system's transitions live in.
pub fn sample_state<R: Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> Vec<f64> {
    match &spec.dynamics {
        Dynamics::Linear => vec![rng.random_range(-3.0..3.0)],
        Dynamics::MaierStein { .. } => (0..2).map(|_| rng.random_range(-1.5..1.5)).collect(),
        Dynamics::Lactose(_) => spec
            .x_start
            .iter()
            .zip(&spec.x_target)
            .map(|(a, b)| rng.random_range(0.5 * a.min(*b)..1.5 * a.max(*b)))
            .collect(),
    }
}

fn divergence_check(spec: &SystemSpec, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = sample_state(spec, rng);
        worst = worst.max(oracle::divergence_mismatch(spec, &x)?);
    }
    Ok(Check::new(
        "divergence matches Jacobian trace",
        worst <= 1e-4,
        format!("max rel err {worst:.3e} over 100 states (tol 1e-4)"),
    ))
}

fn fixed_point_check(spec: &SystemSpec) -> Result<Option<Check>> {
    let norm = |x: &[f64]| oracle::fixed_point_residual(spec, x);
    Ok(match spec.dynamics {
        Dynamics::Linear => None,
        Dynamics::MaierStein { .. } => {
            let r = norm(&spec.x_start)?.max(norm(&spec.x_target)?);
            Some(Check::new("endpoints are fixed points", r == 0.0, format!("max ‖b‖ = {r:e}")))
        }
        Dynamics::Lactose(_) => {
            let mid: Vec<f64> = spec.x_start.iter().zip(&spec.x_target).map(|(a, b)| 0.5 * (a + b)).collect();
            let generic = norm(&mid)?;
            let ratio = norm(&spec.x_start)?.max(norm(&spec.x_target)?) / generic;
            Some(Check::new(
                "stable states balance the drift",
                ratio <= 1e-2,
                format!("residual ratio {ratio:.3e} (tol 1e-2)"),
            ))
        }
    })
}

fn prediction_check(spec: &SystemSpec, actor: &ActorNet) -> Result<Check> {
    let with_time = tpddpg::time_conditioned(spec, actor)?;
    let mut exact = true;
    for k in [0, spec.steps / 2, spec.steps - 1, spec.steps] {
        let (predicted, _) = tpddpg::terminal_predict(spec, actor, &spec.x_start, k)?;
        let mut s = spec.x_start.clone();
        for j in k..spec.steps {
            let input = tpddpg::observe(spec, with_time, &Tensor::row(&s), j);
            let a = actor.forward_batch(&input)?.into_vec();
            match spec.step(&s, &a) {
                Ok(next) => s = next,
                // a blown-up prediction stops at the last finite state
                Err(DynError::BlowUp { .. } | DynError::OutsideDomain(_)) => break,
                Err(e) => return Err(e.into()),
            }
        }
        exact &= predicted == s;
    }
    Ok(Check::new(
        "terminal prediction equals simulation",
        exact,
        "bit-exact at k = 0, N/2, N-1, N".into(),
    ))
}

fn gradient_check(spec: &SystemSpec, actor: &ActorNet, critic: &CriticNet, rng: &mut ChaCha8Rng) -> Result<Check> {
    let k = spec.steps / 2;
    let states = Tensor::from_rows(&(0..4).map(|_| sample_state(spec, rng)).collect::<Vec<_>>());
    let loss = |a: &ActorNet| -> Result<f64> {
        Ok(tpddpg::actor_loss_and_grad(spec, a, critic, &states, k, ActorTerms::BOTH)?.loss)
    };
    let grads = tpddpg::actor_loss_and_grad(spec, actor, critic, &states, k, ActorTerms::BOTH)?.grads;
    let dir: Vec<Tensor> = actor
        .params()
        .iter()
        .map(|p| Tensor::from_vec(p.rows(), p.cols(), (0..p.len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let analytic: f64 = grads.iter().zip(&dir).map(|(g, d)| g.zip_map(d, |a, b| a * b).sum()).sum();
    let h = 1e-6;
    let shifted = |sign: f64| {
        let mut a = actor.clone();
        for (p, d) in a.params_mut().into_iter().zip(&dir) {
            *p = p.zip_map(d, |x, y| x + sign * h * y);
        }
        a
    };
    let fd = (loss(&shifted(1.0))? - loss(&shifted(-1.0))?) / (2.0 * h);
    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12);
    Ok(Check::new(
        "actor gradient matches finite differences",
        rel <= 1e-4,
        format!("directional derivative rel err {rel:.3e} (tol 1e-4)"),
    ))
}

fn identity_check(config: &ExperimentConfig, spec: &SystemSpec) -> Result<Check> {
    let mut hyper = config.hyper();
    hyper.episodes = 3;
    hyper.warmup_trajectories = hyper.warmup_trajectories.min(8);
    hyper.average_window = (0, 3);
    let out = tpddpg::train(spec, &hyper)?;
    let mut worst = 0.0f64;
    for l in out.logs.iter().filter(|l| !l.diverged) {
        let g = spec.terminal_cost(l.path.final_state())?;
        worst = worst.max((l.total_cost - (l.running_cost_sum + g)).abs());
    }
    Ok(Check::new(
        "total cost = running + terminal",
        worst == 0.0,
        format!("max deviation {worst:e} over 3 episodes"),
    ))
}

fn linear_checks(spec: &SystemSpec) -> Result<Vec<Check>> {
    let (x0, x1, t) = (spec.x_start[0], spec.x_target[0], spec.horizon);
    let path = oracle::analytic_linear_path(x0, x1, t);
    let res = oracle::el_residual(|s| path.eval(s), t, 1000, 1e-4);
    let mut checks = vec![Check::new(
        "analytic path solves x'' = x",
        res <= 1e-6,
        format!("residual {res:.3e} (tol 1e-6)"),
    )];
    let fine = SystemSpec::new(spec.dynamics.clone(), 1.0, spec.x_start.clone(), spec.x_target.clone(), t, 1000, spec.lambda)?;
    let quad = oracle::action_of_analytic(x0, x1, t, 1000);
    let discrete = oracle::discrete_analytic_action(&fine)?;
    let rel = ((discrete - quad) / quad).abs();
    checks.push(Check::new(
        "discrete action of analytic path",
        rel <= 1e-3,
        format!("{discrete:.6} vs quadrature {quad:.6}, rel err {rel:.3e} at N = 1000"),
    ));
    let report = oracle::minimality_check(spec, 1000, 7)?;
    checks.push(Check::new(
        "analytic path is minimal",
        report.violations == 0,
        format!(
            "{} of {} perturbations lower the action (baseline {:.6}, best perturbed {:.6})",
            report.violations, report.trials, report.baseline, report.min_perturbed
        ),
    ));
    Ok(checks)
}

/// Runs every check that applies to the configured system.
pub fn verify(config: &ExperimentConfig) -> Result<Vec<Check>> {
    config.validate()?;
    let spec = config.spec()?;
    let hyper = config.hyper();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let agent = tpddpg::Agent::init(&spec, &hyper, &mut rng);
    let mut checks = vec![divergence_check(&spec, &mut rng)?];
    checks.extend(fixed_point_check(&spec)?);
    checks.push(prediction_check(&spec, &agent.actor)?);
    checks.push(gradient_check(&spec, &agent.actor, &agent.critic, &mut rng)?);
    checks.push(identity_check(config, &spec)?);
    if config.system.kind == SystemKind::Linear {
        checks.extend(linear_checks(&spec)?);
    }
    Ok(checks)
}
