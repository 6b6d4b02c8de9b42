//! Two-stage average-reward dynamic program on the compressed-belief grid.
//!
//! Prior cells choose the sensing traffic ψ, posterior cells choose the scheduling budget Λ,
//! and the two value tables are linked by the sensing tables and the scheduling kernel.
//! Solved by relative value iteration.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::{project_cbs, CompressedBeliefState};
use crate::dynamics::steady_state_idle_prob;
use crate::error::{Error, Result};
use crate::kernels::{CbsGrid, KernelCache};
use crate::params::ModelParams;
use crate::stats::binomial_pmf;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 2000;
pub const POLICY_FORMAT_VERSION: u32 = 1;

/// Sensing and scheduling decisions for the belief seen at each stage of a slot.
pub trait Policy {
    /// Sensing traffic for a prior belief.
    fn psi(&self, prior: &CompressedBeliefState) -> f64;
    /// Total traffic for a posterior belief whose largest useful budget is `lambda_max`.
    fn budget(&self, posterior: &CompressedBeliefState, lambda_max: f64) -> f64;
}

/// Same ψ and the same fraction of `Λ_max` in every belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPolicy {
    pub psi: f64,
    pub budget_fraction: f64,
}

impl FixedPolicy {
    pub fn zero() -> Self {
        Self {
            psi: 0.0,
            budget_fraction: 0.0,
        }
    }
}

impl Policy for FixedPolicy {
    fn psi(&self, _: &CompressedBeliefState) -> f64 {
        self.psi
    }

    fn budget(&self, _: &CompressedBeliefState, lambda_max: f64) -> f64 {
        self.budget_fraction * lambda_max
    }
}

/// Solved policies and value tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTables {
    pub format_version: u32,
    pub grid: CbsGrid,
    pub psi_grid: Vec<f64>,
    pub n_lambda: usize,
    /// ψ per prior cell.
    pub sensing: Vec<f64>,
    pub sensing_index: Vec<usize>,
    /// Λ per posterior cell, evaluated at the cell centre.
    pub budget: Vec<f64>,
    /// Grid point `k` of the chosen budget, `Λ = k/(n_lambda − 1) · Λ_max`.
    pub budget_index: Vec<usize>,
    pub values: Vec<f64>,
    pub posterior_values: Vec<f64>,
    pub gain: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Span of successive value differences, one per sweep.
    pub spans: Vec<f64>,
    pub reference_cell: usize,
    pub kernel_digest: String,
    pub params: ModelParams,
}

impl PolicyTables {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let tables: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if tables.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "policy format version {} (expected {POLICY_FORMAT_VERSION})",
                tables.format_version
            )));
        }
        let n = tables.grid.n_cells();
        if [tables.sensing.len(), tables.budget_index.len(), tables.values.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Format("policy tables do not cover the grid".into()));
        }
        Ok(tables)
    }

    fn budget_fraction(&self, cell: usize) -> f64 {
        if self.n_lambda <= 1 {
            0.0
        } else {
            self.budget_index[cell] as f64 / (self.n_lambda - 1) as f64
        }
    }
}

impl Policy for PolicyTables {
    fn psi(&self, prior: &CompressedBeliefState) -> f64 {
        self.sensing[self.grid.cell_of(prior)]
    }

    /// The chosen grid fraction applied to the actual `Λ_max`, so the budget stays feasible
    /// for beliefs off the cell centre.
    fn budget(&self, posterior: &CompressedBeliefState, lambda_max: f64) -> f64 {
        self.budget_fraction(self.grid.cell_of(posterior)) * lambda_max
    }
}

/// Cell of the projected steady-state belief; the value reference point.
pub fn reference_cell(grid: &CbsGrid, p: &ModelParams) -> usize {
    let busy = 1.0 - steady_state_idle_prob(p);
    grid.cell_of(&project_cbs(&vec![busy; grid.f_bands]))
}

/// Stage reward `ξT_S + (1−ξ)T_P − λc_TXΛ` of scheduling-kernel row `row`.
fn schedule_reward(kernels: &KernelCache, row: usize, p: &ModelParams) -> f64 {
    let s = &kernels.scheduling;
    p.xi * s.su[row] + (1.0 - p.xi) * s.pu[row] - p.lambda * p.c_tx * s.budgets[row]
}

/// `V̂(ŝ) = max_k {reward + Σ K·V}` per posterior cell; returns values and argmax indices.
pub fn scheduling_stage(kernels: &KernelCache, v_prior: &[f64], p: &ModelParams) -> (Vec<f64>, Vec<usize>) {
    let s = &kernels.scheduling;
    (0..kernels.grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let mut best = (f64::NEG_INFINITY, 0);
            for k in 0..s.n_lambda {
                let row = s.row(cell, k);
                let q = schedule_reward(kernels, row, p) + s.kernel.expect(row, v_prior);
                if q > best.0 {
                    best = (q, k);
                }
            }
            best
        })
        .unzip()
}

/// `V_m(s) = Σ_ν̂ P(ν̂ | s, m) V̂(post(s, m, ν̂))`, laid out `s · (B+1) + m`; posteriors
/// between grid points take the interpolated value.
pub fn sensing_evaluation_stage(kernels: &KernelCache, v_posterior: &[f64]) -> Vec<f64> {
    let k = &kernels.posterior;
    (0..k.n_rows()).into_par_iter().map(|row| k.expect(row, v_posterior)).collect()
}

/// `w_m(ψ) = Binomial(m; B, ψe^{−ψ})` for each ψ on the grid.
pub fn measurement_weights(psi_grid: &[f64], b_channels: usize) -> Vec<Vec<f64>> {
    psi_grid
        .iter()
        .map(|&psi| binomial_pmf(b_channels, psi * (-psi).exp()))
        .collect()
}

/// `V(s) = max_ψ {−λψBc_S + Σ_m w_m(ψ) V_m(s)}`; returns values and ψ-grid indices.
pub fn sensing_stage(kernels: &KernelCache, v_m: &[f64], p: &ModelParams) -> (Vec<f64>, Vec<usize>) {
    let b = kernels.tables.b_channels();
    let grid = &kernels.spec.psi_grid;
    let weights = measurement_weights(grid, b);
    (0..kernels.grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let vm = &v_m[cell * (b + 1)..(cell + 1) * (b + 1)];
            let mut best = (f64::NEG_INFINITY, 0);
            for (j, w) in weights.iter().enumerate() {
                let q = -p.lambda * grid[j] * b as f64 * p.c_s + w.iter().zip(vm).map(|(a, v)| a * v).sum::<f64>();
                if q > best.0 {
                    best = (q, j);
                }
            }
            best
        })
        .unzip()
}

fn span(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    hi - lo
}

/// Relative value iteration. `p` must share the kernels' model and may differ in `ξ, λ`.
pub fn solve(kernels: &KernelCache, p: &ModelParams, tol: f64, max_sweeps: usize) -> Result<PolicyTables> {
    p.validate()?;
    if p.kernel_key() != kernels.params.kernel_key() {
        return Err(Error::Config("kernels were built for different model parameters".into()));
    }
    let n = kernels.grid.n_cells();
    let reference = reference_cell(&kernels.grid, p);
    let mut v = vec![0.0; n];
    let mut spans = Vec::new();
    let mut converged = false;
    let mut gain = 0.0;
    let (mut v_hat, mut lam_idx, mut psi_idx) = (vec![0.0; n], vec![0; n], vec![0; n]);
    for _ in 0..max_sweeps {
        let (vh, li) = scheduling_stage(kernels, &v, p);
        let vm = sensing_evaluation_stage(kernels, &vh);
        let (tv, pi) = sensing_stage(kernels, &vm, p);
        let s = span(&tv, &v);
        spans.push(s);
        gain = tv[reference];
        v_hat = vh.iter().map(|x| x - gain).collect();
        v = tv.iter().map(|x| x - gain).collect();
        lam_idx = li;
        psi_idx = pi;
        if s < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("value iteration stopped after {max_sweeps} sweeps with span {:e}", spans.last().unwrap_or(&f64::NAN));
    }
    let sched = &kernels.scheduling;
    Ok(PolicyTables {
        format_version: POLICY_FORMAT_VERSION,
        grid: kernels.grid,
        psi_grid: kernels.spec.psi_grid.clone(),
        n_lambda: sched.n_lambda,
        sensing: psi_idx.iter().map(|&j| kernels.spec.psi_grid[j]).collect(),
        sensing_index: psi_idx,
        budget: lam_idx.iter().enumerate().map(|(c, &k)| sched.budgets[sched.row(c, k)]).collect(),
        budget_index: lam_idx,
        values: v,
        posterior_values: v_hat,
        gain,
        converged,
        sweeps: spans.len(),
        spans,
        reference_cell: reference,
        kernel_digest: kernels.digest.clone(),
        params: *p,
    })
}
