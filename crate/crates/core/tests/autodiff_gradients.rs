mod common;

use common::{actor_check, critic_check, fd_params, fd_vec, random_tensor, rel_err, rel_err_tensors, rollout_check};
use ompath::nn::{ActorNet, CriticNet};
use ompath::tpddpg::{self, ActorTerms};
use ompath::{SystemSpec, Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn matvec_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = random_tensor(&mut rng, 5, 5);
    let x = random_tensor(&mut rng, 5, 1);
    let tape = Tape::new();
    let (wv, xv) = (tape.leaf(w.clone()), tape.leaf(x.clone()));
    let loss = wv.matmul(xv).unwrap().tanh().sum();
    let g = tape.backward(loss).unwrap();

    let f = |wd: &[f64], xd: &[f64]| {
        Tensor::from_vec(5, 5, wd.to_vec()).matmul(&Tensor::from_vec(5, 1, xd.to_vec())).map(f64::tanh).sum()
    };
    let fd_w = fd_vec(w.data(), 1e-6, |wd| f(wd, x.data()));
    let fd_x = fd_vec(x.data(), 1e-6, |xd| f(w.data(), xd));
    assert!(rel_err(g.wrt(wv).data(), &fd_w) <= 1e-6);
    assert!(rel_err(g.wrt(xv).data(), &fd_x) <= 1e-6);
}

#[test]
fn tanh_of_dot_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = random_tensor(&mut rng, 1, 10);
    let x = random_tensor(&mut rng, 1, 10);
    let tape = Tape::new();
    let wv = tape.leaf(w.clone());
    let loss = wv.dot(tape.leaf(x.clone())).unwrap().tanh();
    let g = tape.backward(loss).unwrap().wrt(wv);
    let fd = fd_vec(w.data(), 1e-6, |wd| wd.iter().zip(x.data()).map(|(a, b)| a * b).sum::<f64>().tanh());
    assert!(rel_err(g.data(), &fd) <= 1e-6);
}

#[test]
fn hundred_step_rollout_gradient() {
    let spec = SystemSpec::maier_stein(1.0, 0.15, 10.0, 100, 10.0).unwrap();
    let actor = ActorNet::from_seed(2, 30, 2, 5.0, 3);
    let critic = CriticNet::from_seed(2, 2, 30, 4);
    let states = Tensor::from_rows(&[[-1.0, 0.0], [-0.8, 0.2]]);
    let terms = ActorTerms {
        critic: false,
        prediction: true,
    };
    let out = tpddpg::actor_loss_and_grad(&spec, &actor, &critic, &states, 0, terms).unwrap();
    assert!(!out.diverged);
    let fd = fd_params(&actor, 1e-6, |a| {
        tpddpg::actor_loss_and_grad(&spec, a, &critic, &states, 0, terms).unwrap().loss
    });
    let err = rel_err_tensors(&out.grads, &fd);
    assert!(err <= 1e-4, "rel err {err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn critic_gradients_match_fd(seed in any::<u64>()) {
        let (theta, action) = critic_check(seed);
        prop_assert!(theta <= 1e-5, "θ rel err {theta:e}");
        prop_assert!(action <= 1e-5, "a rel err {action:e}");
    }

    #[test]
    fn actor_gradient_matches_fd(seed in any::<u64>()) {
        let err = actor_check(seed);
        prop_assert!(err <= 1e-5, "rel err {err:e}");
    }

    #[test]
    fn fifty_step_prediction_gradient_matches_fd(seed in any::<u64>()) {
        let err = rollout_check(seed);
        prop_assert!(err <= 1e-4, "rel err {err:e}");
    }
}
