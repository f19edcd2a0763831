use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{actor_update, critic_update, select_action, terminal_predict};
use super::{ReplayBuffer, Result, TpError};
use crate::dynsys::{PathRecord, SystemSpec, Transition};
use crate::nn::{ActorNet, AdamState, CriticNet};

/// Training settings. The terminal-cost weight lives on [`SystemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Hidden width K of both networks.
    pub hidden: usize,
    /// Actor output bound `a_max`.
    pub action_scale: f64,
    /// Minibatch size M.
    pub batch_size: usize,
    /// Exploration standard deviation σ_act.
    pub exploration_std: f64,
    pub episodes: usize,
    /// Random trajectories collected before training.
    pub warmup_trajectories: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Per-timestep replay capacity C.
    pub buffer_capacity: usize,
    /// Feed the normalised time `t/N` to both networks alongside the state.
    pub time_input: bool,
    /// Episodes `lo..hi` whose realised paths are averaged.
    pub average_window: (usize, usize),
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            hidden: 15,
            action_scale: 5.0,
            batch_size: 64,
            exploration_std: 0.5,
            episodes: 300,
            warmup_trajectories: 64,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            buffer_capacity: 10_000,
            time_input: false,
            average_window: (100, 300),
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(TpError::InvalidHyper {
                name,
                reason: reason.to_string(),
            })
        };
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1");
        }
        if !(self.action_scale > 0.0) {
            return bad("action_scale", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.exploration_std >= 0.0) {
            return bad("exploration_std", "must be non-negative");
        }
        if !(self.actor_lr > 0.0) {
            return bad("actor_lr", "must be positive");
        }
        if !(self.critic_lr > 0.0) {
            return bad("critic_lr", "must be positive");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be at least 1");
        }
        let (lo, hi) = self.average_window;
        if lo >= hi || hi > self.episodes {
            return bad(
                "window",
                &format!("[{lo}, {hi}) must be non-empty and within 0..={}", self.episodes),
            );
        }
        Ok(())
    }
}

/// Networks and their optimizer states.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl Agent {
    pub fn new(actor: ActorNet, critic: CriticNet, actor_lr: f64, critic_lr: f64) -> Self {
        let actor_opt = AdamState::new(&actor.params(), actor_lr);
        let critic_opt = AdamState::new(&critic.params(), critic_lr);
        Self {
            actor,
            critic,
            actor_opt,
            critic_opt,
        }
    }

    /// Randomly initialised networks for `spec`.
    pub fn init<R: Rng + ?Sized>(spec: &SystemSpec, hyper: &Hyperparams, rng: &mut R) -> Self {
        let (d, u) = (spec.dim() + usize::from(hyper.time_input), spec.control_dim());
        let actor = ActorNet::init(d, hyper.hidden, u, hyper.action_scale, rng);
        let critic = CriticNet::init(d, u, hyper.hidden, rng);
        Self::new(actor, critic, hyper.actor_lr, hyper.critic_lr)
    }
}

/// Quantities logged for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Σ r_t along the realised path.
    pub running_cost_sum: f64,
    /// Mean TD loss over the episode's critic updates.
    pub critic_loss: f64,
    /// Predicted terminal cost at timestep 0.
    pub terminal_loss: f64,
    /// Mean predicted terminal cost of each timestep's minibatch.
    pub terminal_losses: Vec<f64>,
    /// Actor objective at timestep 0.
    pub actor_loss: f64,
    /// Σ r_t + g(s_N).
    pub total_cost: f64,
    pub path: PathRecord,
    pub diverged: bool,
}

impl EpisodeLog {
    fn diverged(episode: usize, path: PathRecord) -> Self {
        Self {
            episode,
            running_cost_sum: f64::NAN,
            critic_loss: f64::NAN,
            terminal_loss: f64::NAN,
            terminal_losses: Vec::new(),
            actor_loss: f64::NAN,
            total_cost: f64::NAN,
            path,
            diverged: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarmupReport {
    pub kept: usize,
    pub discarded: usize,
}

/// Rolls out `trajectories` exploratory episodes and stores every transition.
/// A trajectory that blows up is dropped whole.
pub fn warmup_collect<R: Rng + ?Sized>(
    spec: &SystemSpec,
    actor: &ActorNet,
    trajectories: usize,
    exploration_std: f64,
    buffer: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<WarmupReport> {
    let mut report = WarmupReport { kept: 0, discarded: 0 };
    'traj: for n in 0..trajectories {
        let mut s = spec.x_start.clone();
        let mut pending = Vec::with_capacity(spec.steps);
        for t in 0..spec.steps {
            let a = select_action(spec, actor, &s, t, exploration_std, rng)?;
            match Transition::observe(spec, &s, &a, t) {
                Ok(tr) => {
                    s = tr.s_next.clone();
                    pending.push(tr);
                }
                Err(e) => {
                    let e = TpError::from(e);
                    if !e.is_divergence() {
                        return Err(e);
                    }
                    log::warn!("warmup trajectory {n} discarded at step {t}: {e}");
                    report.discarded += 1;
                    continue 'traj;
                }
            }
        }
        for tr in pending {
            buffer.push(tr)?;
        }
        report.kept += 1;
    }
    Ok(report)
}

/// One pass over timesteps `0..N`: act, store, then update critic and actor
/// on a minibatch from the current timestep's store.
pub fn train_episode<R: Rng + ?Sized>(
    spec: &SystemSpec,
    agent: &mut Agent,
    buffer: &mut ReplayBuffer,
    hyper: &Hyperparams,
    rng: &mut R,
    episode: usize,
) -> Result<EpisodeLog> {
    let mut s = spec.x_start.clone();
    let mut path = PathRecord::starting_at(&s);
    let mut running = 0.0;
    let mut critic_sum = 0.0;
    let mut terminal_losses = Vec::with_capacity(spec.steps);
    let mut actor_loss = f64::NAN;
    let mut terminal_loss = f64::NAN;

    for t in 0..spec.steps {
        let a = select_action(spec, &agent.actor, &s, t, hyper.exploration_std, rng)?;
        let tr = Transition::observe(spec, &s, &a, t)?;
        running += tr.r;
        path.push(tr.a.clone(), tr.s_next.clone());
        s = tr.s_next.clone();
        buffer.push(tr)?;

        let batch = buffer.sample(t, hyper.batch_size, rng)?;
        critic_sum += critic_update(spec, &mut agent.critic, &agent.actor, &batch, &mut agent.critic_opt)?;
        let step = actor_update(spec, &mut agent.actor, &agent.critic, &batch, &mut agent.actor_opt)?;
        terminal_losses.push(step.pred_mean);
        if t == 0 {
            actor_loss = step.loss;
            terminal_loss = step.pred_mean;
        }
    }
    let total_cost = running + spec.terminal_cost(path.final_state())?;
    Ok(EpisodeLog {
        episode,
        running_cost_sum: running,
        critic_loss: critic_sum / spec.steps as f64,
        terminal_loss,
        terminal_losses,
        actor_loss,
        total_cost,
        path,
        diverged: false,
    })
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub logs: Vec<EpisodeLog>,
    /// Pointwise mean of the realised paths in the averaging window; `None`
    /// if every episode in the window diverged.
    pub averaged_path: Option<Vec<Vec<f64>>>,
    pub warmup: WarmupReport,
    pub diverged_episodes: usize,
    /// More than half of the episodes diverged.
    pub failed: bool,
}

impl TrainOutcome {
    /// Noise-free terminal prediction from `x_start` with the final actor.
    pub fn final_prediction(&self, spec: &SystemSpec) -> Result<(Vec<f64>, f64)> {
        terminal_predict(spec, &self.agent.actor, &spec.x_start, 0)
    }
}

/// Runs warmup followed by `hyper.episodes` training episodes.
pub fn train(spec: &SystemSpec, hyper: &Hyperparams) -> Result<TrainOutcome> {
    train_with(spec, hyper, |_| {})
}

/// [`train`] with a per-episode callback, e.g. for progress reporting.
pub fn train_with(spec: &SystemSpec, hyper: &Hyperparams, mut on_episode: impl FnMut(&EpisodeLog)) -> Result<TrainOutcome> {
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut agent = Agent::init(spec, hyper, &mut rng);
    let mut buffer = ReplayBuffer::new(spec.steps, hyper.buffer_capacity);
    let warmup = warmup_collect(
        spec,
        &agent.actor,
        hyper.warmup_trajectories,
        hyper.exploration_std,
        &mut buffer,
        &mut rng,
    )?;

    let mut logs = Vec::with_capacity(hyper.episodes);
    let mut diverged_episodes = 0;
    for episode in 0..hyper.episodes {
        let log = match train_episode(spec, &mut agent, &mut buffer, hyper, &mut rng, episode) {
            Ok(log) => log,
            Err(e) if e.is_divergence() => {
                log::warn!("episode {episode} diverged: {e}");
                diverged_episodes += 1;
                EpisodeLog::diverged(episode, PathRecord::starting_at(&spec.x_start))
            }
            Err(e) => return Err(e),
        };
        on_episode(&log);
        logs.push(log);
    }

    let (lo, hi) = hyper.average_window;
    let averaged_path = PathRecord::average(logs[lo..hi].iter().filter(|l| !l.diverged).map(|l| &l.path));
    Ok(TrainOutcome {
        agent,
        logs,
        averaged_path,
        warmup,
        diverged_episodes,
        failed: 2 * diverged_episodes > hyper.episodes,
    })
}
