//! Actor and critic networks, one hidden layer each, and the Adam optimizer.
//!
//! - Actor: `a_max · tanh(W₂ · relu(W₁ s + b₁) + b₂)`.
//! - Critic: `c · arctan(W₁ [s; a] + b₁) + c₀`, linear output.
//!
//! Every network has a plain `f64` forward pass and a taped one. Both use the
//! same tensor kernels in the same order, so their values agree bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AdError, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite gradient in parameter {param}; training step aborted")]
    NonFiniteGradient { param: usize },
    #[error("optimizer given {found} tensors for {expected} parameters")]
    ParamCount { expected: usize, found: usize },
    #[error("parameter {param} has shape {param_shape:?} but its gradient is {grad_shape:?}")]
    GradShape {
        param: usize,
        param_shape: (usize, usize),
        grad_shape: (usize, usize),
    },
    #[error(transparent)]
    Tape(#[from] AdError),
}

pub type Result<T> = std::result::Result<T, NnError>;

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(NnError::Dimension {
            what,
            expected,
            found,
        })
    }
}

/// Fully connected layer; `weights` is `out × in`, `biases` is `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub biases: Tensor,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Tensor::zeros(outputs, inputs),
            biases: Tensor::zeros(1, outputs),
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weights: Tensor::from_vec(outputs, inputs, data),
            biases: Tensor::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.matmul_nt(&self.weights).add_row_broadcast(&self.biases)
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> LayerVars<'t> {
        LayerVars {
            weights: tape.leaf(self.weights.clone()),
            biases: tape.leaf(self.biases.clone()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.biases.is_finite()
    }
}

/// A layer's parameters recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars<'t> {
    pub weights: Var<'t>,
    pub biases: Var<'t>,
}

impl<'t> LayerVars<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        Ok(x.matmul_nt(self.weights)?.add_row(self.biases)?)
    }
}

/// Deterministic feedback policy `s ↦ a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
    pub action_scale: f64,
}

impl ActorNet {
    pub fn zeros(state_dim: usize, hidden: usize, action_dim: usize, action_scale: f64) -> Self {
        Self {
            hidden: DenseLayer::zeros(state_dim, hidden),
            output: DenseLayer::zeros(hidden, action_dim),
            action_scale,
        }
    }

    pub fn init<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: usize,
        action_dim: usize,
        action_scale: f64,
        rng: &mut R,
    ) -> Self {
        let hidden_layer = DenseLayer::init(state_dim, hidden, rng);
        let output = DenseLayer::init(hidden, action_dim, rng);
        Self {
            hidden: hidden_layer,
            output,
            action_scale,
        }
    }

    pub fn from_seed(
        state_dim: usize,
        hidden: usize,
        action_dim: usize,
        action_scale: f64,
        seed: u64,
    ) -> Self {
        Self::init(
            state_dim,
            hidden,
            action_dim,
            action_scale,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.outputs()
    }

    pub fn action_dim(&self) -> usize {
        self.output.outputs()
    }

    /// Policy on a `B × d` batch of states.
    pub fn forward_batch(&self, states: &Tensor) -> Result<Tensor> {
        check_dim("actor input", self.state_dim(), states.cols())?;
        let h = self.hidden.forward(states).map(relu);
        let scale = self.action_scale;
        Ok(self.output.forward(&h).map(f64::tanh).map(|t| scale * t))
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&Tensor::row(state))?.into_vec())
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> ActorVars<'t> {
        ActorVars {
            hidden: self.hidden.bind(tape),
            output: self.output.bind(tape),
            action_scale: self.action_scale,
            state_dim: self.state_dim(),
        }
    }

    /// Parameters in checkpoint order: hidden W, b; output W, b.
    pub fn params(&self) -> [&Tensor; 4] {
        [
            &self.hidden.weights,
            &self.hidden.biases,
            &self.output.weights,
            &self.output.biases,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.hidden.weights,
            &mut self.hidden.biases,
            &mut self.output.weights,
            &mut self.output.biases,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.is_finite() && self.output.is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ActorVars<'t> {
    pub hidden: LayerVars<'t>,
    pub output: LayerVars<'t>,
    pub action_scale: f64,
    state_dim: usize,
}

impl<'t> ActorVars<'t> {
    pub fn forward(&self, states: Var<'t>) -> Result<Var<'t>> {
        check_dim("actor input", self.state_dim, states.shape().1)?;
        let h = self.hidden.forward(states)?.relu();
        Ok(self.output.forward(h)?.tanh().scale(self.action_scale))
    }

    pub fn vars(&self) -> [Var<'t>; 4] {
        [
            self.hidden.weights,
            self.hidden.biases,
            self.output.weights,
            self.output.biases,
        ]
    }
}

/// State–action cost estimate `Q(s, a)` over the concatenated input.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl CriticNet {
    pub fn zeros(state_dim: usize, action_dim: usize, hidden: usize) -> Self {
        Self {
            hidden: DenseLayer::zeros(state_dim + action_dim, hidden),
            output: DenseLayer::zeros(hidden, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let hidden_layer = DenseLayer::init(state_dim + action_dim, hidden, rng);
        let output = DenseLayer::init(hidden, 1, rng);
        Self {
            hidden: hidden_layer,
            output,
        }
    }

    pub fn from_seed(state_dim: usize, action_dim: usize, hidden: usize, seed: u64) -> Self {
        Self::init(
            state_dim,
            action_dim,
            hidden,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.outputs()
    }

    /// `B × 1` Q-values for paired rows of states and actions.
    pub fn forward_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        check_dim("critic input", self.input_dim(), states.cols() + actions.cols())?;
        check_dim("critic batch", states.rows(), actions.rows())?;
        let x = states.concat_cols(actions);
        let h = self.hidden.forward(&x).map(f64::atan);
        Ok(self.output.forward(&h))
    }

    pub fn q(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self
            .forward_batch(&Tensor::row(state), &Tensor::row(action))?
            .item())
    }

    /// `|c₀| + (π/2)·Σ|cᵢ|`, an upper bound on `|Q|`.
    pub fn output_bound(&self) -> f64 {
        self.output.biases.item().abs()
            + std::f64::consts::FRAC_PI_2 * self.output.weights.data().iter().map(|c| c.abs()).sum::<f64>()
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> CriticVars<'t> {
        CriticVars {
            hidden: self.hidden.bind(tape),
            output: self.output.bind(tape),
            input_dim: self.input_dim(),
        }
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [
            &self.hidden.weights,
            &self.hidden.biases,
            &self.output.weights,
            &self.output.biases,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.hidden.weights,
            &mut self.hidden.biases,
            &mut self.output.weights,
            &mut self.output.biases,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.is_finite() && self.output.is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CriticVars<'t> {
    pub hidden: LayerVars<'t>,
    pub output: LayerVars<'t>,
    input_dim: usize,
}

impl<'t> CriticVars<'t> {
    pub fn forward(&self, states: Var<'t>, actions: Var<'t>) -> Result<Var<'t>> {
        check_dim("critic input", self.input_dim, states.shape().1 + actions.shape().1)?;
        let x = states.concat(actions)?;
        let h = self.hidden.forward(x)?.arctan();
        self.output.forward(h)
    }

    pub fn vars(&self) -> [Var<'t>; 4] {
        [
            self.hidden.weights,
            self.hidden.biases,
            self.output.weights,
            self.output.biases,
        ]
    }
}

fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

/// Adam with bias correction. Moments mirror the parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[&Tensor], lr: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self {
            first: zeros(),
            second: zeros(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one update in place. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(NnError::ParamCount {
                expected: self.first.len(),
                found: params.len().min(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || self.first[i].shape() != g.shape() {
                return Err(NnError::GradShape {
                    param: i,
                    param_shape: p.shape(),
                    grad_shape: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient { param: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for k in 0..gd.len() {
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * gd[k];
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * gd[k] * gd[k];
                let m_hat = md[k] / bc1;
                let v_hat = vd[k] / bc2;
                pd[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_actor_gives_zero_action() {
        let net = ActorNet::zeros(2, 30, 2, 5.0);
        assert_eq!(net.act(&[3.0, -7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_output_critic_is_constant() {
        let mut net = CriticNet::from_seed(2, 2, 30, 1);
        net.output.weights = Tensor::zeros(1, 30);
        net.output.biases = Tensor::scalar(-1.25);
        for s in [[0.0, 0.0], [4.0, -9.0]] {
            assert_eq!(net.q(&s, &[1.0, 2.0]).unwrap(), -1.25);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ActorNet::from_seed(3, 30, 3, 5.0, 9);
        let b = ActorNet::from_seed(3, 30, 3, 5.0, 9);
        assert_eq!(a, b);
        let bound = 1.0 / 3f64.sqrt();
        assert!(a.hidden.weights.data().iter().all(|w| w.abs() <= bound));
        assert!(a.hidden.biases.data().iter().all(|&b| b == 0.0));
        let bound = 1.0 / 30f64.sqrt();
        assert!(a.output.weights.data().iter().all(|w| w.abs() <= bound));
        assert_ne!(a, ActorNet::from_seed(3, 30, 3, 5.0, 10));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let actor = ActorNet::from_seed(1, 15, 1, 5.0, 0);
        assert!(matches!(
            actor.act(&[1.0, 2.0]),
            Err(NnError::Dimension { expected: 1, found: 2, .. })
        ));
        let critic = CriticNet::from_seed(1, 1, 15, 0);
        assert!(critic.q(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn adam_first_step() {
        let mut p = Tensor::scalar(1.0);
        let mut adam = AdamState::new(&[&p], 1e-3);
        adam.step(&mut [&mut p], &[Tensor::scalar(0.5)]).unwrap();
        // m̂ = 0.5, v̂ = 0.25 after bias correction.
        let expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((p.item() - 0.999).abs() < 1e-10);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = Tensor::row(&[0.3, -0.2]);
        let before = p.clone();
        let mut adam = AdamState::new(&[&p], 1e-3);
        adam.step(&mut [&mut p], &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.first_moments()[0], Tensor::zeros(1, 2));
        assert_eq!(adam.second_moments()[0], Tensor::zeros(1, 2));
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = Tensor::scalar(0.0);
        let mut adam = AdamState::new(&[&p], 1e-2);
        let mut last = p.item();
        for _ in 0..2 {
            adam.step(&mut [&mut p], &[Tensor::scalar(-3.0)]).unwrap();
            assert!(p.item() > last);
            last = p.item();
        }
    }

    #[test]
    fn adam_rejects_nan() {
        let mut p = Tensor::scalar(1.0);
        let mut adam = AdamState::new(&[&p], 1e-3);
        let err = adam.step(&mut [&mut p], &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient { param: 0 });
        assert_eq!(p.item(), 1.0);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn taped_forward_matches_plain() {
        let actor = ActorNet::from_seed(2, 30, 2, 5.0, 3);
        let critic = CriticNet::from_seed(2, 2, 30, 4);
        let states = Tensor::from_rows(&[[0.1, -0.4], [1.3, 0.7], [-2.0, 0.0]]);
        let tape = Tape::new();
        let av = actor.bind(&tape);
        let cv = critic.bind(&tape);
        let s = tape.leaf(states.clone());
        let a = av.forward(s).unwrap();
        let q = cv.forward(s, a).unwrap();
        let a_plain = actor.forward_batch(&states).unwrap();
        assert_eq!(a.value(), a_plain);
        assert_eq!(q.value(), critic.forward_batch(&states, &a_plain).unwrap());
    }
}
