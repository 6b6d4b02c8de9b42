//! Scalar model constants shared by every layer of the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All scalar constants of the PU/SU model.
///
/// Probabilities live in `[0, 1]`, `zeta` and `xi` in the open interval,
/// variances are strictly positive and counts are at least one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Probability that a PU with a delivered packet has a new one.
    pub theta: f64,
    /// Probability that a new PU occupies an idle band.
    pub zeta: f64,
    /// PU link failure probability in the absence of collisions.
    pub rho_p: f64,
    /// SU link failure probability in the absence of collisions.
    pub rho_s: f64,
    /// Probability that the controller misses an ACK/NACK.
    pub epsilon: f64,
    /// Variance of the measurement-vector entries.
    pub sigma_a2: f64,
    /// Variance of the measurement noise.
    pub sigma_z2: f64,
    /// Cost of one reported measurement.
    pub c_s: f64,
    /// Cost per unit of scheduled data traffic.
    pub c_tx: f64,
    /// Number of frequency bands `F`.
    pub f_bands: usize,
    /// Number of control channels `B` used to report measurements.
    pub b_channels: usize,
    /// Number of secondary users `N_S`. Only the `N_S → ∞` collision laws are used.
    pub n_su: usize,
    /// Weight of the SU throughput in the Lagrangian objective.
    pub xi: f64,
    /// Cost multiplier of the Lagrangian objective.
    pub lambda: f64,
}

impl ModelParams {
    /// Parameter set of the reference numerical study (F = 20, B = 5, σ_Z² = 1/20, ε = 0.9),
    /// with the operating point ξ = 0.7, λ = 0.025.
    pub fn reference() -> Self {
        Self {
            theta: 0.95,
            zeta: 0.095,
            rho_p: 0.1,
            rho_s: 0.1,
            epsilon: 0.9,
            sigma_a2: 1.0,
            sigma_z2: 1.0 / 20.0,
            c_s: 1.0,
            c_tx: 1.0,
            f_bands: 20,
            b_channels: 5,
            n_su: 100,
            xi: 0.7,
            lambda: 0.025,
        }
    }

    pub fn with_bands(mut self, f_bands: usize) -> Self {
        self.f_bands = f_bands;
        self
    }

    pub fn with_tradeoff(mut self, xi: f64, lambda: f64) -> Self {
        self.xi = xi;
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("theta", self.theta),
            ("rho_p", self.rho_p),
            ("rho_s", self.rho_s),
            ("epsilon", self.epsilon),
        ];
        for (name, value) in unit {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "probability outside [0, 1]",
                });
            }
        }
        for (name, value) in [("zeta", self.zeta), ("xi", self.xi)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must lie in (0, 1)",
                });
            }
        }
        for (name, value) in [("sigma_a2", self.sigma_a2), ("sigma_z2", self.sigma_z2)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "variance must be positive",
                });
            }
        }
        for (name, value) in [("c_s", self.c_s), ("c_tx", self.c_tx), ("lambda", self.lambda)] {
            if !(value >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be nonnegative",
                });
            }
        }
        for (name, value) in [
            ("f_bands", self.f_bands),
            ("b_channels", self.b_channels),
            ("n_su", self.n_su),
        ] {
            if value == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    value: 0.0,
                    reason: "count must be at least 1",
                });
            }
        }
        Ok(())
    }

    /// Ratio `((1−ξ)/ξ)·((1−ρ_P)/(1−ρ_S))` weighting PU throughput against SU throughput.
    pub fn pu_weight(&self) -> f64 {
        (1.0 - self.xi) / self.xi * (1.0 - self.rho_p) / (1.0 - self.rho_s)
    }

    /// Canonical text form used for digests. λ is excluded: it never enters the kernels.
    pub(crate) fn kernel_key(&self) -> String {
        format!(
            "theta={:e};zeta={:e};rho_p={:e};rho_s={:e};epsilon={:e};sigma_a2={:e};sigma_z2={:e};\
             c_s={:e};c_tx={:e};F={};B={};N_S={};xi={:e}",
            self.theta,
            self.zeta,
            self.rho_p,
            self.rho_s,
            self.epsilon,
            self.sigma_a2,
            self.sigma_z2,
            self.c_s,
            self.c_tx,
            self.f_bands,
            self.b_channels,
            self.n_su,
            self.xi
        )
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_params_validate() {
        ModelParams::reference().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let mut p = ModelParams::reference();
        p.zeta = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::reference();
        p.sigma_z2 = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::reference();
        p.f_bands = 0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::reference();
        p.epsilon = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn kernel_key_ignores_lambda() {
        let a = ModelParams::reference();
        let b = a.with_tradeoff(a.xi, 3.0);
        assert_eq!(a.kernel_key(), b.kernel_key());
        let c = a.with_tradeoff(0.5, a.lambda);
        assert_ne!(a.kernel_key(), c.kernel_key());
    }
}
