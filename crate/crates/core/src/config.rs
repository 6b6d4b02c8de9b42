//! Flat `key = value` experiment configuration (TOML subset: scalars, arrays, `#` comments).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::params::ModelParams;
use crate::planner::{DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta: f64,
    pub zeta: f64,
    pub rho_p: f64,
    pub rho_s: f64,
    pub epsilon: f64,
    pub sigma_a2: f64,
    pub sigma_z2: f64,
    pub c_s: f64,
    pub c_tx: f64,
    pub f_bands: usize,
    pub b_channels: usize,
    pub n_su: usize,
    pub xi: f64,
    pub lambda: f64,

    pub level_step: f64,
    pub psi_points: usize,
    pub lambda_points: usize,
    pub n_mc: usize,

    pub tol: f64,
    pub max_sweeps: usize,

    pub slots: usize,
    pub burn_in: f64,
    pub seed: u64,

    /// λ values of `sweep`; empty means `[lambda]`.
    pub sweep_lambda: Vec<f64>,
    /// ξ values of `sweep`; empty means `[xi]`.
    pub sweep_xi: Vec<f64>,
    /// Budgets of `single-band`.
    pub c_max: Vec<f64>,

    pub kernels: PathBuf,
    pub policy: PathBuf,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = ModelParams::reference();
        let k = KernelSpec::default();
        let s = SimConfig::default();
        Self {
            theta: p.theta,
            zeta: p.zeta,
            rho_p: p.rho_p,
            rho_s: p.rho_s,
            epsilon: p.epsilon,
            sigma_a2: p.sigma_a2,
            sigma_z2: p.sigma_z2,
            c_s: p.c_s,
            c_tx: p.c_tx,
            f_bands: p.f_bands,
            b_channels: p.b_channels,
            n_su: p.n_su,
            xi: p.xi,
            lambda: p.lambda,
            level_step: k.level_step,
            psi_points: k.psi_grid.len(),
            lambda_points: k.n_lambda,
            n_mc: k.n_mc,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            slots: s.slots,
            burn_in: s.burn_in,
            seed: s.seed,
            sweep_lambda: Vec::new(),
            sweep_xi: Vec::new(),
            c_max: vec![0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0],
            kernels: PathBuf::from("kernels"),
            policy: PathBuf::from("policy.json"),
            out: PathBuf::from("results.csv"),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.psi_points < 2 || self.lambda_points < 2 {
            return Err(Error::Config("psi_points and lambda_points must be at least 2".into()));
        }
        if self.slots == 0 {
            return Err(Error::Config("slots must be positive".into()));
        }
        if self.c_max.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("c_max values must be positive".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            theta: self.theta,
            zeta: self.zeta,
            rho_p: self.rho_p,
            rho_s: self.rho_s,
            epsilon: self.epsilon,
            sigma_a2: self.sigma_a2,
            sigma_z2: self.sigma_z2,
            c_s: self.c_s,
            c_tx: self.c_tx,
            f_bands: self.f_bands,
            b_channels: self.b_channels,
            n_su: self.n_su,
            xi: self.xi,
            lambda: self.lambda,
        }
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        let n = self.psi_points - 1;
        KernelSpec {
            level_step: self.level_step,
            n_mc: self.n_mc,
            seed: self.seed,
            psi_grid: (0..=n).map(|k| k as f64 / n as f64).collect(),
            n_lambda: self.lambda_points,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            slots: self.slots,
            burn_in: self.burn_in,
            seed: self.seed,
        }
    }

    /// `(λ, ξ)` pairs of a sweep, λ-major.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        let lambdas = if self.sweep_lambda.is_empty() { vec![self.lambda] } else { self.sweep_lambda.clone() };
        let xis = if self.sweep_xi.is_empty() { vec![self.xi] } else { self.sweep_xi.clone() };
        lambdas
            .iter()
            .flat_map(|&l| xis.iter().map(move |&x| (l, x)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_model() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.params(), ModelParams::reference());
        assert_eq!(cfg.kernel_spec(), KernelSpec::default());
    }

    #[test]
    fn round_trip_and_partial_files() {
        let cfg = ExperimentConfig::parse("# tiny\nf_bands = 6\nsweep_lambda = [0.01, 0.1]\nout = \"x.csv\"\n").unwrap();
        assert_eq!(cfg.f_bands, 6);
        assert_eq!(cfg.sweep_points().len(), 2);
        let text = cfg.to_text().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        assert!(ExperimentConfig::parse("no_such_key = 1\n").is_err());
        assert!(ExperimentConfig::parse("xi = 1.5\n").is_err());
    }
}
