//! Most probable transition paths of stochastic dynamical systems.
//!
//! The Onsager–Machlup action of a path is recast as a finite-horizon optimal
//! control problem over the controlled ODE `Ẋ = b(X) + σu`, with running cost
//! `½(|u|² + ∇·b)` and terminal cost `λ‖X_T̂ − X_T‖`. The control is learned by
//! an actor–critic agent whose actor objective adds a differentiable
//! prediction of the terminal cost, obtained by rolling the current policy
//! forward to the horizon.
//!
//! Modules, bottom-up:
//! - [`tensor`] / [`autodiff`]: dense matrices and a reverse-mode tape.
//! - [`nn`]: the actor and critic networks and Adam.
//! - [`dynsys`]: the three benchmark systems, Euler stepping, costs.
//! - [`tpddpg`]: replay buffer, updates, episode loop.
//! - [`oracle`]: closed-form and quadrature references.
//! - [`expcli`]: configuration, artifacts, sweeps and SVG plots.

pub mod autodiff;
pub mod dynsys;
pub mod expcli;
pub mod nn;
pub mod oracle;
pub mod par;
pub mod tensor;
pub mod tpddpg;

pub use autodiff::{Gradients, Tape, Var};
pub use dynsys::{Dynamics, PathRecord, SystemSpec, Transition};
pub use nn::{ActorNet, AdamState, CriticNet, DenseLayer};
pub use tensor::Tensor;
pub use tpddpg::{EpisodeLog, Hyperparams, ReplayBuffer, TrainOutcome};
