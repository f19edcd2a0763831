//! Reference computations that do not touch the tape or the networks.
//!
//! For the linear potential the minimiser of the action solves `ẍ = x` with
//! two-point boundary data, which has the closed form
//! `x(t) = A·eᵗ + B·e⁻ᵗ`. Everything here is straight-line arithmetic so it can
//! serve as ground truth for the learned solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynsys::{self, PathRecord, SystemSpec};
use crate::par;

/// Solution of `ẍ = x`, `x(0) = x₀`, `x(T) = x₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPath {
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
}

impl AnalyticPath {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * t.exp() + self.b * (-t).exp()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.a * t.exp() - self.b * (-t).exp()
    }

    /// Optimal control `u = ẋ + x` for the linear potential (σ = 1).
    pub fn control(&self, t: f64) -> f64 {
        self.velocity(t) + self.eval(t)
    }
}

pub fn analytic_linear_path(x0: f64, x1: f64, horizon: f64) -> AnalyticPath {
    let (ep, em) = (horizon.exp(), (-horizon).exp());
    let denom = ep - em;
    AnalyticPath {
        a: (x1 - x0 * em) / denom,
        b: (x0 * ep - x1) / denom,
        horizon,
    }
}

/// `max |x''(t) − x(t)|` over `samples` evenly spaced points of `[0, T]`, with
/// `x''` from a central second difference of step `h`.
pub fn el_residual(path: impl Fn(f64) -> f64, horizon: f64, samples: usize, h: f64) -> f64 {
    let n = samples.max(2);
    (0..n)
        .map(|i| {
            let t = horizon * i as f64 / (n - 1) as f64;
            let xpp = (path(t + h) - 2.0 * path(t) + path(t - h)) / (h * h);
            (xpp - path(t)).abs()
        })
        .fold(0.0, f64::max)
}

/// `½∫₀ᵀ(u² − 1)dt` along the analytic path, trapezoid rule on `n` panels.
pub fn action_of_analytic(x0: f64, x1: f64, horizon: f64, n: usize) -> f64 {
    let path = analytic_linear_path(x0, x1, horizon);
    let h = horizon / n as f64;
    let f = |t: f64| {
        let u = path.control(t);
        0.5 * (u * u - 1.0)
    };
    let interior: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    h * (0.5 * f(0.0) + interior + 0.5 * f(horizon))
}

/// Closed form of [`action_of_analytic`] for `x₀ = 0`: `x₁²(e^{2T} − 1)/(4 sinh²T) − T/2`.
pub fn action_closed_form_from_origin(x1: f64, horizon: f64) -> f64 {
    let s = horizon.sinh();
    x1 * x1 * ((2.0 * horizon).exp() - 1.0) / (4.0 * s * s) - 0.5 * horizon
}

/// `‖b(x)‖₂`.
pub fn fixed_point_residual(spec: &SystemSpec, x: &[f64]) -> dynsys::Result<f64> {
    Ok(spec.drift(x)?.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Trace of the central finite-difference Jacobian of the drift. Each
/// coordinate uses a step relative to its own magnitude, with `floor` as the
/// smallest allowed step.
pub fn fd_jacobian_trace(spec: &SystemSpec, x: &[f64], rel_step: f64, floor: f64) -> dynsys::Result<f64> {
    let mut trace = 0.0;
    for i in 0..x.len() {
        let h = (x[i].abs() * rel_step).max(floor);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (bp, bm) = (spec.drift(&xp)?, spec.drift(&xm)?);
        trace += (bp[i] - bm[i]) / (xp[i] - xm[i]);
    }
    Ok(trace)
}

/// Relative mismatch between the closed-form divergence and the
/// finite-difference Jacobian trace at `x`. Differences are measured against
/// the largest diagonal magnitude so that near-cancelling traces do not blow
/// up the ratio.
pub fn divergence_mismatch(spec: &SystemSpec, x: &[f64]) -> dynsys::Result<f64> {
    let analytic = spec.divergence(x)?;
    let fd = fd_jacobian_trace(spec, x, 1e-5, 1e-9)?;
    let mut jac = vec![0.0; x.len() * x.len()];
    spec.dynamics.jacobian_into(x, &mut jac)?;
    let scale = (0..x.len())
        .map(|i| jac[i * x.len() + i].abs())
        .fold(analytic.abs(), f64::max)
        .max(1e-300);
    Ok((analytic - fd).abs() / scale)
}

/// Samples `x(t)` at `N + 1` grid points and builds the path with the controls
/// that reproduce it under Euler stepping. States are regenerated by stepping
/// the recovered controls, so the record replays exactly.
pub fn discretize(spec: &SystemSpec, x: impl Fn(f64) -> Vec<f64>) -> dynsys::Result<PathRecord> {
    let dt = spec.dt();
    let mut path = PathRecord::starting_at(&spec.x_start);
    for k in 0..spec.steps {
        let s = path.final_state().to_vec();
        let b = spec.drift(&s)?;
        let target = x((k + 1) as f64 * dt);
        let a: Vec<f64> = (0..s.len())
            .map(|i| ((target[i] - s[i]) / dt - b[i]) / spec.noise)
            .collect();
        let next = spec.step(&s, &a)?;
        path.push(a, next);
    }
    Ok(path)
}

/// Discrete action of the analytic linear path with its implied controls.
pub fn discrete_analytic_action(spec: &SystemSpec) -> dynsys::Result<f64> {
    let path = analytic_linear_path(spec.x_start[0], spec.x_target[0], spec.horizon);
    spec.om_action(&discretize(spec, |t| vec![path.eval(t)])?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub baseline: f64,
    pub min_perturbed: f64,
    pub violations: usize,
    pub trials: usize,
}

/// Compares the discrete action of the analytic linear path against
/// `trials` random endpoint-preserving perturbations
/// `δ(t) = Σ_j c_j sin(jπt/T)`, `j = 1..=4`, `|c_j| ≤ 0.5`.
pub fn minimality_check(spec: &SystemSpec, trials: usize, seed: u64) -> dynsys::Result<MinimalityReport> {
    let path = analytic_linear_path(spec.x_start[0], spec.x_target[0], spec.horizon);
    let baseline = spec.om_action(&discretize(spec, |t| vec![path.eval(t)])?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<[f64; 4]> = (0..trials)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.5..=0.5)))
        .collect();
    let horizon = spec.horizon;
    let actions = par::map(&coeffs, |c| {
        let perturbed = |t: f64| {
            let delta: f64 = c
                .iter()
                .enumerate()
                .map(|(j, cj)| cj * ((j + 1) as f64 * std::f64::consts::PI * t / horizon).sin())
                .sum();
            vec![path.eval(t) + delta]
        };
        discretize(spec, perturbed).and_then(|p| spec.om_action(&p))
    });
    let actions = actions.into_iter().collect::<dynsys::Result<Vec<_>>>()?;
    let violations = actions.iter().filter(|&&s| s < baseline).count();
    let min_perturbed = actions.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MinimalityReport {
        baseline,
        min_perturbed,
        violations,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_path_midpoint() {
        let p = analytic_linear_path(0.0, 2.0, 1.0);
        let expected = 2.0 * 0.5f64.sinh() / 1.0f64.sinh();
        assert!((p.eval(0.5) - expected).abs() < 1e-14);
        assert!((p.eval(0.5) - 0.886819).abs() < 1e-6);
        assert!(p.eval(0.0).abs() < 1e-15);
        assert!((p.eval(1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_endpoints_give_zero_path() {
        let p = analytic_linear_path(0.0, 0.0, 3.0);
        assert_eq!(p.eval(1.3), 0.0);
        assert_eq!(el_residual(|_| 0.0, 3.0, 100, 1e-4), 0.0);
        assert!((action_of_analytic(0.0, 0.0, 3.0, 200) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn residual_distinguishes_straight_line() {
        let line = |t: f64| 2.0 * t;
        let r = el_residual(line, 1.0, 1000, 1e-4);
        assert!((r - 2.0).abs() < 1e-6, "{r}");
        let p = analytic_linear_path(0.0, 2.0, 1.0);
        assert!(el_residual(|t| p.eval(t), 1.0, 1000, 1e-4) <= 1e-6);
    }

    #[test]
    fn closed_form_action() {
        let exact = ((1f64).exp().powi(2) - 1.0) / 1f64.sinh().powi(2) - 0.5;
        assert!((action_closed_form_from_origin(2.0, 1.0) - exact).abs() < 1e-14);
        assert!((exact - 4.126).abs() < 1e-3);
        let quad = action_of_analytic(0.0, 2.0, 1.0, 1000);
        assert!((quad - exact).abs() < 1e-5, "{quad} vs {exact}");
    }

    #[test]
    fn maier_stein_residuals() {
        let ms = SystemSpec::maier_stein(1.0, 0.15, 5.0, 100, 10.0).unwrap();
        assert_eq!(fixed_point_residual(&ms, &[1.0, 0.0]).unwrap(), 0.0);
        assert!((fixed_point_residual(&ms, &[0.5, 0.0]).unwrap() - 0.375).abs() < 1e-15);
    }
}
