//! Per-step pieces of the agent: exploration, terminal prediction and the
//! critic/actor updates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Result, TpError};
use crate::autodiff::{Tape, Var};
use crate::dynsys::{DynError, SystemSpec, Transition};
use crate::nn::{ActorNet, ActorVars, AdamState, CriticNet, NnError};
use crate::tensor::Tensor;

/// Added to the predicted terminal cost when a rollout leaves the finite or
/// physical domain before reaching the horizon.
pub const DIVERGENCE_PENALTY: f64 = 1e6;

/// Whether the networks take the normalised time `t/N` as an extra input,
/// judged from the actor's input width.
pub fn time_conditioned(spec: &SystemSpec, actor: &ActorNet) -> Result<bool> {
    match actor.state_dim() {
        d if d == spec.dim() => Ok(false),
        d if d == spec.dim() + 1 => Ok(true),
        d => Err(NnError::Dimension {
            what: "actor input",
            expected: spec.dim(),
            found: d,
        }
        .into()),
    }
}

fn clock(spec: &SystemSpec, t: usize) -> f64 {
    t as f64 / spec.steps as f64
}

/// Network input for a batch of states at timestep `t`.
pub fn observe(spec: &SystemSpec, with_time: bool, states: &Tensor, t: usize) -> Tensor {
    if with_time {
        states.concat_cols(&Tensor::filled(states.rows(), 1, clock(spec, t)))
    } else {
        states.clone()
    }
}

fn observe_tape<'t>(spec: &SystemSpec, with_time: bool, tape: &'t Tape, states: Var<'t>, t: usize) -> Result<Var<'t>> {
    if with_time {
        let rows = states.shape().0;
        let clock = tape.leaf(Tensor::filled(rows, 1, clock(spec, t)));
        Ok(states.concat(clock)?)
    } else {
        Ok(states)
    }
}

/// `A(s) + ε`, `ε ~ 𝒩(0, σ²I)`. The noisy action is not clipped.
pub fn select_action<R: Rng + ?Sized>(
    spec: &SystemSpec,
    actor: &ActorNet,
    s: &[f64],
    t: usize,
    std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let with_time = time_conditioned(spec, actor)?;
    let mut a = actor.forward_batch(&observe(spec, with_time, &Tensor::row(s), t))?.into_vec();
    for ai in &mut a {
        let z: f64 = StandardNormal.sample(rng);
        *ai += std * z;
    }
    Ok(a)
}

fn is_divergence(e: &DynError) -> bool {
    matches!(e, DynError::BlowUp { .. } | DynError::OutsideDomain(_))
}

/// Noise-free rollout of the current policy from timestep `k` to the horizon.
///
/// Returns the predicted terminal state and its terminal cost. A rollout that
/// blows up stops at the last finite state and adds [`DIVERGENCE_PENALTY`].
pub fn terminal_predict(spec: &SystemSpec, actor: &ActorNet, s_k: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    if k > spec.steps {
        return Err(TpError::TimestepOutOfRange { t: k, steps: spec.steps });
    }
    let with_time = time_conditioned(spec, actor)?;
    let mut s = Tensor::row(s_k);
    let mut diverged = false;
    for j in k..spec.steps {
        let a = actor.forward_batch(&observe(spec, with_time, &s, j))?;
        match spec.step_batch(&s, &a) {
            Ok(next) => s = next,
            Err(e) if is_divergence(&e) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let state = s.into_vec();
    let mut loss = spec.terminal_cost(&state)?;
    if diverged {
        loss += DIVERGENCE_PENALTY;
    }
    Ok((state, loss))
}

/// Taped terminal prediction for a batch of states sharing timestep `k`.
pub struct Prediction<'t> {
    pub final_states: Var<'t>,
    /// `B × 1` predicted terminal costs.
    pub losses: Var<'t>,
    pub diverged: bool,
}

/// Records the `N − k` compositions of `s ↦ step(s, A(s))` on `tape`.
/// `first_actions`, when given, must equal `A(states)` and is reused for the
/// first step so the actor evaluation is shared with the critic term.
pub fn terminal_predict_tape<'t>(
    spec: &SystemSpec,
    tape: &'t Tape,
    actor: &ActorVars<'t>,
    states: Var<'t>,
    first_actions: Option<Var<'t>>,
    k: usize,
) -> Result<Prediction<'t>> {
    if k > spec.steps {
        return Err(TpError::TimestepOutOfRange { t: k, steps: spec.steps });
    }
    let with_time = actor.hidden.weights.shape().1 == spec.dim() + 1;
    let mut s = states;
    let mut diverged = false;
    for j in k..spec.steps {
        let a = match first_actions {
            Some(a) if j == k => a,
            _ => actor.forward(observe_tape(spec, with_time, tape, s, j)?)?,
        };
        match spec.step_tape(tape, s, a) {
            Ok(next) => s = next,
            Err(e) if is_divergence(&e) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut losses = spec.terminal_cost_tape(tape, s)?;
    if diverged {
        log::debug!("terminal prediction from timestep {k} diverged");
        let (rows, _) = losses.shape();
        losses = losses.add(tape.leaf(Tensor::filled(rows, 1, DIVERGENCE_PENALTY)))?;
    }
    Ok(Prediction {
        final_states: s,
        losses,
        diverged,
    })
}

fn batch_tensors(batch: &[&Transition]) -> (Tensor, Tensor) {
    let s: Vec<&[f64]> = batch.iter().map(|t| t.s.as_slice()).collect();
    let a: Vec<&[f64]> = batch.iter().map(|t| t.a.as_slice()).collect();
    (Tensor::from_rows(&s), Tensor::from_rows(&a))
}

fn common_timestep(batch: &[&Transition]) -> Result<usize> {
    let t = batch.first().ok_or(TpError::EmptyBatch)?.t_index;
    if batch.iter().any(|tr| tr.t_index != t) {
        return Err(TpError::MixedBatch);
    }
    Ok(t)
}

/// Bootstrapped targets `y = r + Q(s', A(s'))`, with the bootstrap dropped on
/// the last timestep (`Q(s_N) = 0`). Treated as constants by the update.
pub fn td_targets(spec: &SystemSpec, critic: &CriticNet, actor: &ActorNet, batch: &[&Transition]) -> Result<Tensor> {
    let t = common_timestep(batch)?;
    let r = Tensor::from_vec(batch.len(), 1, batch.iter().map(|tr| tr.r).collect());
    if t + 1 >= spec.steps {
        return Ok(r);
    }
    let next: Vec<&[f64]> = batch.iter().map(|tr| tr.s_next.as_slice()).collect();
    let next = observe(spec, time_conditioned(spec, actor)?, &Tensor::from_rows(&next), t + 1);
    let q_next = critic.forward_batch(&next, &actor.forward_batch(&next)?)?;
    Ok(r.zip_map(&q_next, |a, b| a + b))
}

/// TD loss `(1/M)Σ(yᵢ − Q(sᵢ, aᵢ))²` and its gradient in checkpoint order.
pub fn critic_loss_and_grad(
    spec: &SystemSpec,
    critic: &CriticNet,
    batch: &[&Transition],
    targets: &Tensor,
) -> Result<(f64, Vec<Tensor>)> {
    let t = common_timestep(batch)?;
    let (s, a) = batch_tensors(batch);
    let with_time = critic.input_dim() == spec.dim() + 1 + spec.control_dim();
    let s = observe(spec, with_time, &s, t);
    let tape = Tape::new();
    let cv = critic.bind(&tape);
    let q = cv.forward(tape.leaf(s), tape.leaf(a))?;
    let y = tape.leaf(targets.clone());
    let loss = q.sub(y)?.square().mean();
    let grads = tape.backward(loss)?;
    Ok((loss.item(), cv.vars().iter().map(|v| grads.wrt(*v)).collect()))
}

/// One critic step. Returns the TD loss before the step.
pub fn critic_update(
    spec: &SystemSpec,
    critic: &mut CriticNet,
    actor: &ActorNet,
    batch: &[&Transition],
    opt: &mut AdamState,
) -> Result<f64> {
    let targets = td_targets(spec, critic, actor, batch)?;
    let (loss, grads) = critic_loss_and_grad(spec, critic, batch, &targets)?;
    if !loss.is_finite() {
        return Err(TpError::NonFiniteLoss { which: "critic" });
    }
    opt.step(&mut critic.params_mut(), &grads)?;
    Ok(loss)
}

/// Which terms of the actor objective to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorTerms {
    pub critic: bool,
    pub prediction: bool,
}

impl ActorTerms {
    pub const BOTH: Self = Self {
        critic: true,
        prediction: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    /// `mean Q(s, A(s)) + mean ℒ_pred` over the included terms.
    pub loss: f64,
    pub q_mean: f64,
    pub pred_mean: f64,
    pub diverged: bool,
    /// Gradient with respect to the actor parameters, checkpoint order.
    pub grads: Vec<Tensor>,
}

/// Actor objective `(1/M)Σ[Q(sᵢ, A(sᵢ)) + ℒ_pred(sᵢ)]` at timestep `k` with
/// the critic frozen.
pub fn actor_loss_and_grad(
    spec: &SystemSpec,
    actor: &ActorNet,
    critic: &CriticNet,
    states: &Tensor,
    k: usize,
    terms: ActorTerms,
) -> Result<ActorLoss> {
    let with_time = time_conditioned(spec, actor)?;
    let tape = Tape::new();
    let av = actor.bind(&tape);
    let cv = critic.bind(&tape);
    let s = tape.leaf(states.clone());
    let obs = observe_tape(spec, with_time, &tape, s, k)?;
    let a = av.forward(obs)?;
    let q = cv.forward(obs, a)?.mean();
    let pred = terminal_predict_tape(spec, &tape, &av, s, Some(a), k)?;
    let p = pred.losses.mean();
    let loss = match (terms.critic, terms.prediction) {
        (true, true) => q.add(p)?,
        (true, false) => q,
        (false, true) => p,
        (false, false) => q.scale(0.0),
    };
    let grads = tape.backward(loss)?;
    Ok(ActorLoss {
        loss: loss.item(),
        q_mean: q.item(),
        pred_mean: p.item(),
        diverged: pred.diverged,
        grads: av.vars().iter().map(|v| grads.wrt(*v)).collect(),
    })
}

/// One actor step descending the objective. Returns the pre-step loss terms.
pub fn actor_update(
    spec: &SystemSpec,
    actor: &mut ActorNet,
    critic: &CriticNet,
    batch: &[&Transition],
    opt: &mut AdamState,
) -> Result<ActorLoss> {
    let k = common_timestep(batch)?;
    let (s, _) = batch_tensors(batch);
    let out = actor_loss_and_grad(spec, actor, critic, &s, k, ActorTerms::BOTH)?;
    if !out.loss.is_finite() {
        return Err(TpError::NonFiniteLoss { which: "actor" });
    }
    opt.step(&mut actor.params_mut(), &out.grads)?;
    Ok(out)
}
