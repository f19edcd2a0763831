//! Drift fields of the three benchmark systems with analytic Jacobians.

use serde::{Deserialize, Serialize};

use super::DynError;

/// Kinetic constants of the reduced lactose operon model, in the units they
/// are usually tabulated in. State components `(M, B, A)` are in mM; the
/// drift converts `alpha_m` (nM/min) and `k1` (µM⁻ⁿ) on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LactoseParams {
    /// Maximal growth rate, min⁻¹. Tabulated with the model; not used by the
    /// reduced drift.
    pub mu_max: f64,
    /// Dilution rate, min⁻¹.
    pub mu: f64,
    /// nM·min⁻¹.
    pub alpha_m: f64,
    pub alpha_b: f64,
    pub alpha_a: f64,
    pub gamma_m: f64,
    pub gamma_b: f64,
    pub gamma_a: f64,
    /// Hill exponent.
    pub n: f64,
    pub k: f64,
    /// µM⁻ⁿ.
    pub k1: f64,
    /// mM.
    pub k_l: f64,
    /// mM.
    pub k_a: f64,
    pub beta_a: f64,
    pub tau_m: f64,
    pub tau_b: f64,
    /// Extracellular lactose, mM.
    pub lactose: f64,
}

/// Extracellular lactose level that best balances the allolactose equation
/// at both stable states; reproduced by [`LactoseParams::calibrate_lactose`].
pub const LACTOSE_DEFAULT_L: f64 = 0.049_966_755_446_875_18;

/// Low-induction stable state `(M, B, A)` in mM.
pub const LACTOSE_STABLE_LOW: [f64; 3] = [4.57e-7, 2.29e-7, 4.27e-3];
/// High-induction stable state `(M, B, A)` in mM.
pub const LACTOSE_STABLE_HIGH: [f64; 3] = [3.28e-5, 1.65e-5, 6.47e-2];

const NANO_TO_MILLI: f64 = 1e-6;
const MILLI_TO_MICRO: f64 = 1e3;

impl Default for LactoseParams {
    fn default() -> Self {
        Self {
            mu_max: 3.47e-2,
            mu: 3.03e-2,
            alpha_m: 997.0,
            alpha_b: 1.66e-2,
            alpha_a: 1.76e4,
            gamma_m: 0.411,
            gamma_b: 8.33e-4,
            gamma_a: 1.35e-2,
            n: 2.0,
            k: 7200.0,
            k1: 2.52e-2,
            k_l: 0.97,
            k_a: 1.95,
            beta_a: 2.15e4,
            tau_m: 0.10,
            tau_b: 2.00,
            lactose: LACTOSE_DEFAULT_L,
        }
    }
}

impl LactoseParams {
    fn decay(&self) -> [f64; 3] {
        [
            self.gamma_m + self.mu,
            self.gamma_b + self.mu,
            self.gamma_a + self.mu,
        ]
    }

    /// Fraction `L / (K_L + L)` of permease-bound lactose.
    fn uptake(&self) -> Result<f64, DynError> {
        if self.k_l + self.lactose <= 0.0 {
            return Err(DynError::OutsideDomain(format!(
                "K_L + L = {} must be positive",
                self.k_l + self.lactose
            )));
        }
        Ok(self.lactose / (self.k_l + self.lactose))
    }

    fn check_state(&self, x: &[f64]) -> Result<(), DynError> {
        if self.k_a + x[2] <= 0.0 {
            return Err(DynError::OutsideDomain(format!(
                "K_A + A = {} must be positive",
                self.k_a + x[2]
            )));
        }
        Ok(())
    }

    /// Repression term `p = K₁·(e^{−μτ_M} A)ⁿ` with `A` converted to µM, and
    /// `dp/dA`.
    fn repression(&self, a: f64) -> (f64, f64) {
        let c = MILLI_TO_MICRO * (-self.mu * self.tau_m).exp();
        let p = self.k1 * (c * a).powf(self.n);
        let dp = self.k1 * self.n * c * (c * a).powf(self.n - 1.0);
        (p, dp)
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<(), DynError> {
        self.check_state(x)?;
        let [m, b, a] = [x[0], x[1], x[2]];
        let [gm, gb, ga] = self.decay();
        let (p, _) = self.repression(a);
        let alpha_m = self.alpha_m * NANO_TO_MILLI;
        out[0] = alpha_m * (1.0 + p) / (self.k + p) - gm * m;
        out[1] = self.alpha_b * (-self.mu * self.tau_b).exp() * m - gb * b;
        out[2] = self.alpha_a * b * self.uptake()? - self.beta_a * b * a / (self.k_a + a) - ga * a;
        Ok(())
    }

    fn jacobian(&self, x: &[f64], jac: &mut [f64]) -> Result<(), DynError> {
        self.check_state(x)?;
        let [_, b, a] = [x[0], x[1], x[2]];
        let [gm, gb, ga] = self.decay();
        let (p, dp) = self.repression(a);
        let alpha_m = self.alpha_m * NANO_TO_MILLI;
        let ka = self.k_a + a;
        jac.copy_from_slice(&[
            -gm,
            0.0,
            alpha_m * (self.k - 1.0) / ((self.k + p) * (self.k + p)) * dp,
            self.alpha_b * (-self.mu * self.tau_b).exp(),
            -gb,
            0.0,
            0.0,
            self.alpha_a * self.uptake()? - self.beta_a * a / ka,
            -self.beta_a * b * self.k_a / (ka * ka) - ga,
        ]);
        Ok(())
    }

    fn divergence(&self, x: &[f64]) -> Result<f64, DynError> {
        self.check_state(x)?;
        let [gm, gb, ga] = self.decay();
        let ka = self.k_a + x[2];
        Ok(-gm - gb - self.beta_a * x[1] * self.k_a / (ka * ka) - ga)
    }

    /// Finds the lactose level `L` minimising the summed squared drift at the
    /// given states, by bisection on the sign of the derivative. Only the
    /// allolactose component depends on `L`, and it does so through the
    /// increasing map `L ↦ L/(K_L+L)`, so the derivative changes sign once.
    pub fn calibrate_lactose(&self, states: &[[f64; 3]]) -> Result<f64, DynError> {
        let slope = |l: f64| -> Result<f64, DynError> {
            let params = Self {
                lactose: l,
                ..self.clone()
            };
            let mut acc = 0.0;
            let mut out = [0.0; 3];
            for s in states {
                params.drift(s, &mut out)?;
                acc += out[2] * self.alpha_a * s[1];
            }
            Ok(acc)
        };
        let (mut lo, mut hi) = (1e-9, 1e3);
        if slope(lo)? > 0.0 || slope(hi)? < 0.0 {
            return Err(DynError::OutsideDomain(
                "lactose calibration bracket does not contain a minimiser".into(),
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Drift `b` of `Ẋ = b(X) + σu`.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// `b(x) = −x` in one dimension.
    Linear,
    /// `b(x, y) = (x − x³ − βxy², −(1 + x²)y)`.
    MaierStein { beta: f64 },
    /// Reduced lactose operon with delays evaluated at the current time.
    Lactose(LactoseParams),
}

impl Dynamics {
    pub fn dim(&self) -> usize {
        match self {
            Dynamics::Linear => 1,
            Dynamics::MaierStein { .. } => 2,
            Dynamics::Lactose(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dynamics::Linear => "linear",
            Dynamics::MaierStein { .. } => "maier-stein",
            Dynamics::Lactose(_) => "lactose",
        }
    }

    /// Writes `b(x)` into `out`. Both slices must have length [`Self::dim`].
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), DynError> {
        match self {
            Dynamics::Linear => {
                out[0] = -x[0];
                Ok(())
            }
            Dynamics::MaierStein { beta } => {
                let (px, py) = (x[0], x[1]);
                out[0] = px - px * px * px - beta * px * py * py;
                out[1] = -(1.0 + px * px) * py;
                Ok(())
            }
            Dynamics::Lactose(p) => p.drift(x, out),
        }
    }

    /// Writes `∂b/∂x` (row-major, `d × d`) into `jac`.
    pub fn jacobian_into(&self, x: &[f64], jac: &mut [f64]) -> Result<(), DynError> {
        match self {
            Dynamics::Linear => {
                jac[0] = -1.0;
                Ok(())
            }
            Dynamics::MaierStein { beta } => {
                let (px, py) = (x[0], x[1]);
                jac.copy_from_slice(&[
                    1.0 - 3.0 * px * px - beta * py * py,
                    -2.0 * beta * px * py,
                    -2.0 * px * py,
                    -(1.0 + px * px),
                ]);
                Ok(())
            }
            Dynamics::Lactose(p) => p.jacobian(x, jac),
        }
    }

    /// `∇·b(x)`, evaluated in closed form.
    pub fn divergence(&self, x: &[f64]) -> Result<f64, DynError> {
        match self {
            Dynamics::Linear => Ok(-1.0),
            Dynamics::MaierStein { beta } => Ok(-4.0 * x[0] * x[0] - beta * x[1] * x[1]),
            Dynamics::Lactose(p) => p.divergence(x),
        }
    }
}
