//! Controlled dynamics, Euler stepping and the Onsager–Machlup cost terms.
//!
//! The controlled ODE `Ẋ = b(X) + σu` is advanced with explicit Euler,
//! `s' = s + b(s)Δt + σ a Δt`, `Δt = T/N`. Each step pays the running cost
//! `½(|a|² + ∇·b(s))Δt`, and the final state pays `λ‖s_N − X_T‖₂`.

mod systems;

use thiserror::Error;

use crate::autodiff::{AdError, Tape, Var};
use crate::tensor::Tensor;

pub use systems::{
    Dynamics, LactoseParams, LACTOSE_DEFAULT_L, LACTOSE_STABLE_HIGH, LACTOSE_STABLE_LOW,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("state left the finite range: {state:?}")]
    BlowUp { state: Vec<f64> },
    #[error("state outside the physical domain: {0}")]
    OutsideDomain(String),
    #[error("invalid system parameter `{name}` = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error(transparent)]
    Tape(#[from] AdError),
}

pub type Result<T> = std::result::Result<T, DynError>;

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DynError::Dimension {
            what,
            expected,
            found,
        })
    }
}

/// A transition problem: dynamics, constant noise intensity, endpoints and
/// discretisation. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub dynamics: Dynamics,
    /// σ; diffusion is `σ·I`.
    pub noise: f64,
    pub x_start: Vec<f64>,
    pub x_target: Vec<f64>,
    /// T.
    pub horizon: f64,
    /// N.
    pub steps: usize,
    /// λ, the terminal-cost weight.
    pub lambda: f64,
}

impl SystemSpec {
    pub fn new(
        dynamics: Dynamics,
        noise: f64,
        x_start: Vec<f64>,
        x_target: Vec<f64>,
        horizon: f64,
        steps: usize,
        lambda: f64,
    ) -> Result<Self> {
        let d = dynamics.dim();
        check_dim("x_start", d, x_start.len())?;
        check_dim("x_target", d, x_target.len())?;
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(DynError::InvalidParam { name, value: v })
            }
        };
        positive("noise", noise)?;
        positive("horizon", horizon)?;
        positive("lambda", lambda)?;
        if steps == 0 {
            return Err(DynError::InvalidParam {
                name: "steps",
                value: 0.0,
            });
        }
        if let Dynamics::MaierStein { beta } = dynamics {
            if !(beta >= 0.0) {
                return Err(DynError::InvalidParam {
                    name: "beta",
                    value: beta,
                });
            }
        }
        Ok(Self {
            dynamics,
            noise,
            x_start,
            x_target,
            horizon,
            steps,
            lambda,
        })
    }

    /// `dX = −X dt + dB`, from `x0` to `x1`.
    pub fn linear_potential(x0: f64, x1: f64, horizon: f64, steps: usize, lambda: f64) -> Result<Self> {
        Self::new(Dynamics::Linear, 1.0, vec![x0], vec![x1], horizon, steps, lambda)
    }

    /// Maier–Stein system from `(−1, 0)` to `(1, 0)`.
    pub fn maier_stein(beta: f64, noise: f64, horizon: f64, steps: usize, lambda: f64) -> Result<Self> {
        Self::new(
            Dynamics::MaierStein { beta },
            noise,
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            horizon,
            steps,
            lambda,
        )
    }

    /// Lactose operon from the low- to the high-induction stable state.
    pub fn lactose_operon(
        params: LactoseParams,
        noise: f64,
        horizon: f64,
        steps: usize,
        lambda: f64,
    ) -> Result<Self> {
        Self::new(
            Dynamics::Lactose(params),
            noise,
            LACTOSE_STABLE_LOW.to_vec(),
            LACTOSE_STABLE_HIGH.to_vec(),
            horizon,
            steps,
            lambda,
        )
    }

    pub fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    /// Control dimension; always equal to the state dimension here.
    pub fn control_dim(&self) -> usize {
        self.dynamics.dim()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.dynamics.drift_into(x, &mut out)?;
        Ok(out)
    }

    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        check_dim("state", self.dim(), x.len())?;
        self.dynamics.divergence(x)
    }

    /// One Euler step of the controlled dynamics.
    pub fn step(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_dim("action", self.control_dim(), a.len())?;
        let b = self.drift(s)?;
        if !b.iter().all(|v| v.is_finite()) {
            return Err(DynError::BlowUp { state: s.to_vec() });
        }
        let (dt, c) = (self.dt(), self.noise * self.dt());
        let next: Vec<f64> = s
            .iter()
            .zip(&b)
            .zip(a)
            .map(|((&si, &bi), &ai)| (si + dt * bi) + c * ai)
            .collect();
        if !next.iter().all(|v| v.is_finite()) {
            return Err(DynError::BlowUp { state: next });
        }
        Ok(next)
    }

    /// [`Self::step`] on each row of a batch.
    pub fn step_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        check_dim("batch", states.rows(), actions.rows())?;
        let mut out = Tensor::zeros(states.rows(), self.dim());
        for r in 0..states.rows() {
            let next = self.step(states.row_slice(r), actions.row_slice(r))?;
            out.row_slice_mut(r).copy_from_slice(&next);
        }
        Ok(out)
    }

    /// Records one Euler step for a `B × d` batch on `tape`; differentiable
    /// with respect to both states and actions.
    pub fn step_tape<'t>(&self, tape: &'t Tape, states: Var<'t>, actions: Var<'t>) -> Result<Var<'t>> {
        let s = states.value();
        check_dim("state", self.dim(), s.cols())?;
        check_dim("action", self.control_dim(), actions.shape().1)?;
        let d = self.dim();
        let mut b = Tensor::zeros(s.rows(), d);
        let mut jac = vec![0.0; s.rows() * d * d];
        for r in 0..s.rows() {
            let x = s.row_slice(r);
            self.dynamics.drift_into(x, b.row_slice_mut(r))?;
            self.dynamics.jacobian_into(x, &mut jac[r * d * d..(r + 1) * d * d])?;
        }
        if !b.is_finite() {
            return Err(DynError::BlowUp {
                state: s.into_vec(),
            });
        }
        let drift = tape.record_rowwise(states, b, jac)?;
        let next = states
            .add(drift.scale(self.dt()))?
            .add(actions.scale(self.noise * self.dt()))?;
        let value = next.value();
        if !value.is_finite() {
            return Err(DynError::BlowUp {
                state: value.into_vec(),
            });
        }
        Ok(next)
    }

    /// `r = ½(|a|² + ∇·b(s))Δt`; negative when the divergence dominates.
    pub fn running_cost(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        check_dim("action", self.control_dim(), a.len())?;
        let div = self.divergence(s)?;
        let a2: f64 = a.iter().map(|v| v * v).sum();
        Ok(0.5 * (a2 + div) * self.dt())
    }

    /// `g(x) = λ‖x − X_T‖₂`.
    pub fn terminal_cost(&self, x: &[f64]) -> Result<f64> {
        check_dim("state", self.dim(), x.len())?;
        let sq: f64 = x
            .iter()
            .zip(&self.x_target)
            .map(|(a, b)| {
                let d = a + -b;
                d * d
            })
            .sum();
        Ok(self.lambda * sq.sqrt())
    }

    /// Terminal cost of each row, recorded on `tape` (`B × d → B × 1`).
    pub fn terminal_cost_tape<'t>(&self, tape: &'t Tape, states: Var<'t>) -> Result<Var<'t>> {
        check_dim("state", self.dim(), states.shape().1)?;
        let neg_target: Vec<f64> = self.x_target.iter().map(|v| -v).collect();
        let target = tape.leaf(Tensor::row(&neg_target));
        Ok(states.add_row(target)?.row_norms().scale(self.lambda))
    }

    /// Discrete action `Σ_k r(s_k, a_k)` of a path.
    pub fn om_action(&self, path: &PathRecord) -> Result<f64> {
        path.states
            .iter()
            .zip(&path.actions)
            .map(|(s, a)| self.running_cost(s, a))
            .sum()
    }
}

/// One stored interaction `(s_t, a_t, r_t, s_{t+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub t_index: usize,
}

impl Transition {
    /// Steps the environment and records the outcome.
    pub fn observe(spec: &SystemSpec, s: &[f64], a: &[f64], t_index: usize) -> Result<Self> {
        let s_next = spec.step(s, a)?;
        let r = spec.running_cost(s, a)?;
        Ok(Self {
            s: s.to_vec(),
            a: a.to_vec(),
            r,
            s_next,
            t_index,
        })
    }
}

/// A realised trajectory: `N + 1` states and the `N` actions between them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathRecord {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl PathRecord {
    pub fn starting_at(x: &[f64]) -> Self {
        Self {
            states: vec![x.to_vec()],
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Vec<f64>, next: Vec<f64>) {
        self.actions.push(action);
        self.states.push(next);
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("path has at least one state")
    }

    /// Re-steps the stored actions from `x_start`.
    pub fn replay(&self, spec: &SystemSpec) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![spec.x_start.clone()];
        for a in &self.actions {
            let next = spec.step(out.last().unwrap(), a)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Pointwise mean over paths of equal length.
    pub fn average<'a, I: IntoIterator<Item = &'a PathRecord>>(paths: I) -> Option<Vec<Vec<f64>>> {
        let mut iter = paths.into_iter();
        let first = iter.next()?;
        let mut acc = first.states.clone();
        let mut count = 1usize;
        for p in iter {
            for (a, s) in acc.iter_mut().zip(&p.states) {
                for (x, y) in a.iter_mut().zip(s) {
                    *x += y;
                }
            }
            count += 1;
        }
        for a in &mut acc {
            for x in a.iter_mut() {
                *x /= count as f64;
            }
        }
        Some(acc)
    }
}
