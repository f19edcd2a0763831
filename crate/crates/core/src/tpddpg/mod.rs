//! Terminal-prediction DDPG.
//!
//! Off-policy actor–critic without target networks. Transitions are kept in
//! one store per timestep. At every timestep of an episode the agent acts
//! with Gaussian exploration, stores the transition, then updates the critic
//! on a TD loss (with `Q(s_N) = 0`) and the actor on `Q(s, A(s))` plus the
//! terminal cost of a differentiable rollout of the current policy.

mod agent;
mod buffer;
mod train;

use thiserror::Error;

use crate::autodiff::AdError;
use crate::dynsys::DynError;
use crate::nn::NnError;

pub use agent::{
    actor_loss_and_grad, actor_update, critic_loss_and_grad, critic_update, select_action, td_targets,
    terminal_predict, terminal_predict_tape, time_conditioned, observe, ActorLoss, ActorTerms, Prediction, DIVERGENCE_PENALTY,
};
pub use buffer::ReplayBuffer;
pub use train::{train, train_episode, train_with, warmup_collect, Agent, EpisodeLog, Hyperparams, TrainOutcome, WarmupReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TpError {
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Tape(#[from] AdError),
    #[error("{which} loss is not finite; update aborted")]
    NonFiniteLoss { which: &'static str },
    #[error("timestep {t} outside 0..{steps}")]
    TimestepOutOfRange { t: usize, steps: usize },
    #[error("no stored transitions for timestep {t}")]
    EmptyStore { t: usize },
    #[error("empty minibatch")]
    EmptyBatch,
    #[error("minibatch mixes timesteps")]
    MixedBatch,
    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyper { name: &'static str, reason: String },
}

impl TpError {
    /// Whether the error signals numerical divergence of the run rather than
    /// a programming or configuration mistake.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TpError::Dynamics(DynError::BlowUp { .. } | DynError::OutsideDomain(_))
                | TpError::Network(NnError::NonFiniteGradient { .. })
                | TpError::NonFiniteLoss { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, TpError>;
