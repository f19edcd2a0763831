#![allow(dead_code)]

use ompath::nn::{ActorNet, CriticNet};
use ompath::tpddpg::{self, ActorTerms};
use ompath::{SystemSpec, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub trait Params: Clone {
    fn params_mut(&mut self) -> [&mut Tensor; 4];
}

impl Params for ActorNet {
    fn params_mut(&mut self) -> [&mut Tensor; 4] {
        ActorNet::params_mut(self)
    }
}

impl Params for CriticNet {
    fn params_mut(&mut self) -> [&mut Tensor; 4] {
        CriticNet::params_mut(self)
    }
}

/// Central differences of `loss` with respect to every parameter entry.
pub fn fd_params<N: Params>(net: &N, h: f64, loss: impl Fn(&N) -> f64) -> Vec<Tensor> {
    let mut probe = net.clone();
    let shapes: Vec<(usize, usize)> = probe.params_mut().iter().map(|p| p.shape()).collect();
    let mut out = Vec::with_capacity(4);
    for (i, &(r, c)) in shapes.iter().enumerate() {
        let mut g = Tensor::zeros(r, c);
        for j in 0..r * c {
            let x = probe.params_mut()[i].data()[j];
            probe.params_mut()[i].data_mut()[j] = x + h;
            let up = loss(&probe);
            probe.params_mut()[i].data_mut()[j] = x - h;
            let down = loss(&probe);
            probe.params_mut()[i].data_mut()[j] = x;
            g.data_mut()[j] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Central differences of a scalar function of a flat vector.
pub fn fd_vec(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over all entries.
pub fn rel_err<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.into_iter().zip(b) {
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let scale = na.max(nb).sqrt();
    if scale == 0.0 {
        diff.sqrt()
    } else {
        diff.sqrt() / scale
    }
}

pub fn rel_err_tensors(a: &[Tensor], b: &[Tensor]) -> f64 {
    rel_err(a.iter().flat_map(|t| t.data()), b.iter().flat_map(|t| t.data()))
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Relative errors of the critic gradient with respect to its parameters and
/// to the action input, for a random critic drawn from `seed`.
pub fn critic_check(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, u) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let critic = CriticNet::init(d, u, 30, &mut rng);
    let s = random_tensor(&mut rng, 4, d).map(|v| 2.0 * v);
    let a = random_tensor(&mut rng, 4, u).map(|v| 3.0 * v);

    let tape = Tape::new();
    let cv = critic.bind(&tape);
    let av = tape.leaf(a.clone());
    let q = cv.forward(tape.leaf(s.clone()), av).unwrap().sum();
    let g = tape.backward(q).unwrap();
    let grads: Vec<Tensor> = cv.vars().iter().map(|v| g.wrt(*v)).collect();

    let fd = fd_params(&critic, 1e-6, |c| c.forward_batch(&s, &a).unwrap().sum());
    let fd_a = fd_vec(a.data(), 1e-6, |ad| {
        critic.forward_batch(&s, &Tensor::from_vec(4, u, ad.to_vec())).unwrap().sum()
    });
    (rel_err_tensors(&grads, &fd), rel_err(g.wrt(av).data(), &fd_a))
}

/// Actor gradient through the critic term only.
pub fn actor_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SystemSpec::maier_stein(1.0, 0.15, 5.0, 50, 10.0).unwrap();
    let actor = ActorNet::init(2, 30, 2, 5.0, &mut rng);
    let critic = CriticNet::init(2, 2, 30, &mut rng);
    let states = random_tensor(&mut rng, 4, 2);
    let k = rng.random_range(0..spec.steps);
    let terms = ActorTerms {
        critic: true,
        prediction: false,
    };
    let out = tpddpg::actor_loss_and_grad(&spec, &actor, &critic, &states, k, terms).unwrap();
    let fd = fd_params(&actor, 1e-6, |a| {
        tpddpg::actor_loss_and_grad(&spec, a, &critic, &states, k, terms).unwrap().loss
    });
    rel_err_tensors(&out.grads, &fd)
}

/// Gradient of the predicted terminal cost through a 50-step rollout.
pub fn rollout_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SystemSpec::maier_stein(1.0, 0.15, 5.0, 50, 10.0).unwrap();
    let actor = ActorNet::init(2, 30, 2, 5.0, &mut rng);
    let critic = CriticNet::zeros(2, 2, 30);
    let states = random_tensor(&mut rng, 3, 2);
    let terms = ActorTerms {
        critic: false,
        prediction: true,
    };
    let out = tpddpg::actor_loss_and_grad(&spec, &actor, &critic, &states, 0, terms).unwrap();
    let fd = fd_params(&actor, 1e-6, |a| {
        tpddpg::actor_loss_and_grad(&spec, a, &critic, &states, 0, terms).unwrap().loss
    });
    rel_err_tensors(&out.grads, &fd)
}
