//! Discretised compressed-belief space and the Monte-Carlo statistics the planner runs on:
//! detection-quality tables, the prior→posterior sensing kernel and the
//! posterior→prior scheduling kernel, with a versioned on-disk cache.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compression::{project_cbs, CompressedBeliefState, ExpectedOccupancy};
use crate::dynamics::{busy_next_given_feedback, feedback_prob, FeedbackSymbol, OccupancyVector, TrafficVector};
use crate::error::{Error, Result};
use crate::measurement::generate_batch;
use crate::params::ModelParams;
use crate::recovery::map_estimate;
use crate::scheduler::{allocate, lambda_max};
use crate::stats::binomial_pmf;
use crate::streams::{stream, Domain};

/// Regular grid of compressed beliefs: levels `iδ_g`, cells `(i_L ≤ i_H, ν ∈ 1..F−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbsGrid {
    pub level_step: f64,
    pub f_bands: usize,
}

impl CbsGrid {
    pub fn new(level_step: f64, f_bands: usize) -> Result<Self> {
        if !(level_step > 0.0 && level_step <= 0.1) {
            return Err(Error::InvalidParameter {
                name: "level_step",
                value: level_step,
                reason: "grid step must lie in (0, 0.1]",
            });
        }
        let inv = 1.0 / level_step;
        if (inv - inv.round()).abs() > 1e-6 {
            return Err(Error::InvalidParameter {
                name: "level_step",
                value: level_step,
                reason: "grid step must divide 1",
            });
        }
        if f_bands < 2 {
            return Err(Error::TooFewBands { bands: f_bands, min: 2 });
        }
        Ok(Self { level_step, f_bands })
    }

    pub fn n_levels(&self) -> usize {
        (1.0 / self.level_step).round() as usize + 1
    }

    /// Half-width `δ` of the neighbourhood each cell stands for.
    pub fn cell_halfwidth(&self) -> f64 {
        self.level_step / 2.0
    }

    fn n_pairs(&self) -> usize {
        let n = self.n_levels();
        n * (n + 1) / 2
    }

    pub fn n_cells(&self) -> usize {
        (self.f_bands - 1) * self.n_pairs()
    }

    pub fn level(&self, i: usize) -> f64 {
        (i as f64 * self.level_step).min(1.0)
    }

    fn level_index(&self, value: f64) -> usize {
        let i = (value / self.level_step + 0.5).floor();
        (i.max(0.0) as usize).min(self.n_levels() - 1)
    }

    /// Cell index of `(i_L, i_H, ν)`; `ν`-major, then `i_L`, then `i_H`.
    pub fn cell_index(&self, i_low: usize, i_high: usize, nu: usize) -> usize {
        let n = self.n_levels();
        debug_assert!(i_low <= i_high && i_high < n && (1..self.f_bands).contains(&nu));
        // Rows i < i_low hold n − i pairs each.
        let before = i_low * n - i_low * i_low.saturating_sub(1) / 2;
        (nu - 1) * self.n_pairs() + before + (i_high - i_low)
    }

    /// `(i_L, i_H, ν)` of a cell.
    pub fn cell_coords(&self, cell: usize) -> (usize, usize, usize) {
        let n = self.n_levels();
        let nu = cell / self.n_pairs() + 1;
        let mut rest = cell % self.n_pairs();
        let mut i_low = 0;
        while rest >= n - i_low {
            rest -= n - i_low;
            i_low += 1;
        }
        (i_low, i_low + rest, nu)
    }

    /// Centre of a cell.
    pub fn cell_cbs(&self, cell: usize) -> CompressedBeliefState {
        let (l, h, nu) = self.cell_coords(cell);
        CompressedBeliefState {
            beta_low: self.level(l),
            beta_high: self.level(h),
            nu,
        }
    }

    /// Expanded centre with the first `ν` bands at the low level.
    pub fn cell_beta(&self, cell: usize) -> ExpectedOccupancy {
        let cbs = self.cell_cbs(cell);
        ExpectedOccupancy(
            (0..self.f_bands)
                .map(|i| if i < cbs.nu { cbs.beta_low } else { cbs.beta_high })
                .collect(),
        )
    }

    /// Nearest cell; the flag reports whether `ν` had to be clamped into `1..F−1`.
    pub fn locate(&self, cbs: &CompressedBeliefState) -> (usize, bool) {
        let l = self.level_index(cbs.beta_low);
        let h = self.level_index(cbs.beta_high).max(l);
        let nu = cbs.nu.clamp(1, self.f_bands - 1);
        (self.cell_index(l, h, nu), nu != cbs.nu)
    }

    pub fn cell_of(&self, cbs: &CompressedBeliefState) -> usize {
        self.locate(cbs).0
    }

    /// Neighbouring levels of `value` and the weight of the upper one, chosen so the
    /// weighted mean is `value`. Values within 1e-9 steps of a level snap to it.
    fn level_weights(&self, value: f64) -> (usize, usize, f64) {
        let top = self.n_levels() - 1;
        let x = (value / self.level_step).clamp(0.0, top as f64);
        let near = x.round();
        if (x - near).abs() < 1e-9 {
            let i = near as usize;
            return (i, i, 0.0);
        }
        let lo = x.floor() as usize;
        (lo, (lo + 1).min(top), x - lo as f64)
    }

    /// Split of a belief over the surrounding cells that keeps the mean of both levels:
    /// bilinear in general, over the three ordered corners when both levels share a step.
    pub fn interpolate(&self, cbs: &CompressedBeliefState) -> Vec<(usize, f64)> {
        let nu = cbs.nu.clamp(1, self.f_bands - 1);
        let (l0, l1, wl) = self.level_weights(cbs.beta_low);
        let (h0, h1, wh) = self.level_weights(cbs.beta_high);
        let corners: Vec<(usize, usize, f64)> = if l0 == h0 && l1 == h1 && l0 != l1 {
            let wl = wl.min(wh);
            vec![(l0, l0, 1.0 - wh), (l0, l1, wh - wl), (l1, l1, wl)]
        } else {
            vec![
                (l0, h0, (1.0 - wl) * (1.0 - wh)),
                (l0, h1, (1.0 - wl) * wh),
                (l1, h0, wl * (1.0 - wh)),
                (l1, h1, wl * wh),
            ]
        };
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(4);
        for (l, h, w) in corners.into_iter().filter(|c| c.2 > 0.0) {
            let c = self.cell_index(l, h.max(l), nu);
            match out.iter_mut().find(|(k, _)| *k == c) {
                Some(e) => e.1 += w,
                None => out.push((c, w)),
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }

    /// Cell drawn from the [`interpolate`](Self::interpolate) weights, so `E[level] = β̄`
    /// for both levels. Nearest-level rounding would freeze beliefs whose per-slot drift is
    /// under half a step.
    pub fn dithered_cell<R: Rng + ?Sized>(&self, cbs: &CompressedBeliefState, rng: &mut R) -> usize {
        let w = self.interpolate(cbs);
        let mut u: f64 = rng.random::<f64>() * w.iter().map(|e| e.1).sum::<f64>();
        for &(c, x) in &w {
            if u < x {
                return c;
            }
            u -= x;
        }
        w[w.len() - 1].0
    }
}

/// Compressed belief for `ν̂` bands at `low` and the rest at `high`, re-projected when
/// `ν̂ ∈ {0, F}` or the levels are out of order.
pub fn posterior_cbs(low: f64, high: f64, nu_hat: usize, f_bands: usize) -> CompressedBeliefState {
    // 1 − (1 − x) is not always x; ulp-level inversions keep ν̂.
    if (1..f_bands).contains(&nu_hat) && low <= high + 1e-12 {
        return CompressedBeliefState {
            beta_low: low,
            beta_high: high.max(low),
            nu: nu_hat,
        };
    }
    let beta: Vec<f64> = (0..f_bands).map(|i| if i < nu_hat { low } else { high }).collect();
    project_cbs(&beta)
}

/// Detection statistics per `(cell, m, ν̂)`: conditional false-alarm and missed-detection
/// rates and the pmf of the number `ν̂` of bands declared idle.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTables {
    f_bands: usize,
    b_channels: usize,
    n_cells: usize,
    fa: Vec<f64>,
    md: Vec<f64>,
    nu_pmf: Vec<f64>,
    post_cell: Vec<u32>,
    /// `(cell, m, ν̂)` entries that were never observed and use the prior rates.
    pub fallbacks: usize,
}

impl DetectionTables {
    fn index(&self, cell: usize, m: usize, nu_hat: usize) -> usize {
        (cell * (self.b_channels + 1) + m) * (self.f_bands + 1) + nu_hat
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn b_channels(&self) -> usize {
        self.b_channels
    }

    pub fn f_bands(&self) -> usize {
        self.f_bands
    }

    /// Fraction of declared-busy bands that are idle.
    pub fn fa(&self, cell: usize, m: usize, nu_hat: usize) -> f64 {
        self.fa[self.index(cell, m, nu_hat)]
    }

    /// Fraction of declared-idle bands that are busy.
    pub fn md(&self, cell: usize, m: usize, nu_hat: usize) -> f64 {
        self.md[self.index(cell, m, nu_hat)]
    }

    pub fn nu_pmf(&self, cell: usize, m: usize, nu_hat: usize) -> f64 {
        self.nu_pmf[self.index(cell, m, nu_hat)]
    }

    /// Nearest grid cell of the posterior formed from `(P̂_MD, 1 − P̂_FA, ν̂)`.
    pub fn post_cell(&self, cell: usize, m: usize, nu_hat: usize) -> usize {
        self.post_cell[self.index(cell, m, nu_hat)] as usize
    }

    /// Posterior compressed belief for an observed `ν̂`.
    pub fn posterior(&self, cell: usize, m: usize, nu_hat: usize) -> CompressedBeliefState {
        let i = self.index(cell, m, nu_hat);
        posterior_cbs(self.md[i], 1.0 - self.fa[i], nu_hat, self.f_bands)
    }
}

/// Raw Monte-Carlo accumulators for one `(cell, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSample {
    pub counts: Vec<u64>,
    pub md_sum: Vec<f64>,
    pub fa_sum: Vec<f64>,
}

/// Runs the estimator `n_mc` times on states drawn from the cell centre, with the low-level
/// bands placed by a uniformly random permutation.
pub fn sample_detection<R: Rng + ?Sized>(
    grid: &CbsGrid,
    cell: usize,
    m: usize,
    n_mc: usize,
    p: &ModelParams,
    rng: &mut R,
) -> Result<DetectionSample> {
    let f = grid.f_bands;
    let cbs = grid.cell_cbs(cell);
    let mut out = DetectionSample {
        counts: vec![0; f + 1],
        md_sum: vec![0.0; f + 1],
        fa_sum: vec![0.0; f + 1],
    };
    let mut order: Vec<usize> = (0..f).collect();
    let mut beta = vec![0.0; f];
    for _ in 0..n_mc {
        order.shuffle(rng);
        for (k, &band) in order.iter().enumerate() {
            beta[band] = if k < cbs.nu { cbs.beta_low } else { cbs.beta_high };
        }
        let truth = OccupancyVector(beta.iter().map(|&b| rng.random::<f64>() < b).collect());
        let batch = generate_batch(&truth, m, p, rng);
        let est = map_estimate(&ExpectedOccupancy(beta.clone()), &batch, p)?;
        let nu_hat = f - est.occupied();
        let (mut missed, mut false_alarm) = (0usize, 0usize);
        for (&b, &e) in truth.0.iter().zip(&est.0) {
            missed += usize::from(b && !e);
            false_alarm += usize::from(!b && e);
        }
        out.counts[nu_hat] += 1;
        if nu_hat > 0 {
            out.md_sum[nu_hat] += missed as f64 / nu_hat as f64;
        }
        if nu_hat < f {
            out.fa_sum[nu_hat] += false_alarm as f64 / (f - nu_hat) as f64;
        }
    }
    Ok(out)
}

struct CellRows {
    fa: Vec<f64>,
    md: Vec<f64>,
    pmf: Vec<f64>,
    post: Vec<u32>,
    fallbacks: usize,
}

/// Estimates the detection tables. Rows with `m = 0` are the prior itself: `ν̂ = ν`,
/// `P̂_MD = β̄_L`, `P̂_FA = 1 − β̄_H`.
pub fn estimate_detection_tables(grid: &CbsGrid, n_mc: usize, p: &ModelParams, seed: u64) -> Result<DetectionTables> {
    if n_mc < 100 {
        return Err(Error::InvalidParameter {
            name: "n_mc",
            value: n_mc as f64,
            reason: "at least 100 Monte-Carlo samples required",
        });
    }
    check_grid(grid, p)?;
    let f = grid.f_bands;
    let b = p.b_channels;
    let rows: Vec<CellRows> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| -> Result<CellRows> {
            let cbs = grid.cell_cbs(cell);
            let width = (b + 1) * (f + 1);
            let mut rows = CellRows {
                fa: vec![1.0 - cbs.beta_high; width],
                md: vec![cbs.beta_low; width],
                pmf: vec![0.0; width],
                post: vec![0; width],
                fallbacks: 0,
            };
            rows.pmf[cbs.nu] = 1.0;
            for m in 1..=b {
                // Common random numbers: every cell replays the same draws, so estimation noise
                // is shared by neighbouring cells instead of roughening the value function.
                let mut rng = stream(seed, Domain::Detection, m as u64);
                let s = sample_detection(grid, cell, m, n_mc, p, &mut rng)?;
                for k in 0..=f {
                    let i = m * (f + 1) + k;
                    let c = s.counts[k];
                    rows.pmf[i] = c as f64 / n_mc as f64;
                    if c == 0 {
                        rows.fallbacks += 1;
                        continue;
                    }
                    if k > 0 {
                        rows.md[i] = s.md_sum[k] / c as f64;
                    }
                    if k < f {
                        rows.fa[i] = s.fa_sum[k] / c as f64;
                    }
                }
            }
            for m in 0..=b {
                for k in 0..=f {
                    let i = m * (f + 1) + k;
                    let post = posterior_cbs(rows.md[i], 1.0 - rows.fa[i], k, f);
                    rows.post[i] = grid.cell_of(&post) as u32;
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut tables = DetectionTables {
        f_bands: f,
        b_channels: b,
        n_cells: grid.n_cells(),
        fa: Vec::with_capacity(rows.len() * (b + 1) * (f + 1)),
        md: Vec::new(),
        nu_pmf: Vec::new(),
        post_cell: Vec::new(),
        fallbacks: 0,
    };
    for r in rows {
        tables.fa.extend(r.fa);
        tables.md.extend(r.md);
        tables.nu_pmf.extend(r.pmf);
        tables.post_cell.extend(r.post);
        tables.fallbacks += r.fallbacks;
    }
    log::info!(
        "detection tables: {} cells, {} unobserved (cell, m, ν̂) entries use prior rates",
        grid.n_cells(),
        tables.fallbacks
    );
    Ok(tables)
}

fn check_grid(grid: &CbsGrid, p: &ModelParams) -> Result<()> {
    if grid.f_bands != p.f_bands {
        return Err(Error::LengthMismatch {
            expected: p.f_bands,
            found: grid.f_bands,
        });
    }
    Ok(())
}

/// Posterior-to-prior update of one band: `P(b' = 1 | fb)` under occupancy `beta_hat`.
pub(crate) fn next_band_prior(beta_hat: f64, r: f64, sym: FeedbackSymbol, p: &ModelParams) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (b, w) in [(false, 1.0 - beta_hat), (true, beta_hat)] {
        let like = w * feedback_prob(sym, b, r, p);
        if like > 0.0 {
            num += like * busy_next_given_feedback(b, r, sym, p);
            den += like;
        }
    }
    (den > 0.0).then(|| (num / den).clamp(0.0, 1.0))
}

/// Next-slot prior occupancy given the posterior, the scheduled traffic and the feedback.
pub fn next_prior_occupancy(
    beta_hat: &ExpectedOccupancy,
    r: &TrafficVector,
    fb: &[FeedbackSymbol],
    p: &ModelParams,
) -> Result<ExpectedOccupancy> {
    let f = beta_hat.len();
    for len in [r.0.len(), fb.len()] {
        if len != f {
            return Err(Error::LengthMismatch { expected: f, found: len });
        }
    }
    let mut next = Vec::with_capacity(f);
    for i in 0..f {
        if r.0[i] < 0.0 {
            return Err(Error::NegativeRate(r.0[i]));
        }
        next.push(next_band_prior(beta_hat.0[i], r.0[i], fb[i], p).ok_or(Error::ImpossibleFeedback { band: i })?);
    }
    Ok(ExpectedOccupancy(next))
}

/// Row-stochastic sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseKernel {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseKernel {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut k = SparseKernel {
            row_ptr: Vec::with_capacity(rows.len() + 1),
            cols: Vec::new(),
            vals: Vec::new(),
        };
        k.row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                k.cols.push(c);
                k.vals.push(v);
            }
            k.row_ptr.push(k.cols.len());
        }
        k
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len().saturating_sub(1)
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Target cells and probabilities of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Probability of moving from row `i` to `target`.
    pub fn prob(&self, i: usize, target: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter()
            .zip(vals)
            .filter(|(c, _)| **c as usize == target)
            .map(|(_, v)| v)
            .sum()
    }

    /// `Σ_j K(i, j) v_j`.
    pub fn expect(&self, i: usize, values: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * values[c as usize]).sum()
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_error(&self) -> f64 {
        (0..self.n_rows())
            .map(|i| (self.row(i).1.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Kernel from a prior cell and measurement count to posterior cells, row
/// `cell · (B+1) + m`: `Σ_ν̂ P(ν̂ | s, m)` times the interpolation weights of the posterior.
pub fn estimate_posterior_kernel(grid: &CbsGrid, tables: &DetectionTables) -> SparseKernel {
    let b = tables.b_channels;
    let f = tables.f_bands;
    let rows: Vec<Vec<(u32, f64)>> = (0..tables.n_cells)
        .into_par_iter()
        .flat_map_iter(|cell| {
            (0..=b).map(move |m| {
                let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
                for k in 0..=f {
                    let w = tables.nu_pmf(cell, m, k);
                    if w > 0.0 {
                        for (c, v) in grid.interpolate(&tables.posterior(cell, m, k)) {
                            *acc.entry(c as u32).or_insert(0.0) += w * v;
                        }
                    }
                }
                acc.into_iter().collect()
            })
        })
        .collect();
    SparseKernel::from_rows(rows)
}

/// Prior→posterior kernel, row `cell · |ψ grid| + j`, mixing the posterior kernel over
/// `m ~ Binomial(B, ψe^{−ψ})`.
pub fn estimate_sensing_kernel(posterior: &SparseKernel, b_channels: usize, psi_grid: &[f64]) -> SparseKernel {
    let n_cells = posterior.n_rows() / (b_channels + 1);
    let rows: Vec<Vec<(u32, f64)>> = (0..n_cells)
        .into_par_iter()
        .flat_map_iter(|cell| {
            psi_grid.iter().map(move |&psi| {
                let pm = binomial_pmf(b_channels, psi * (-psi).exp());
                let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
                for (m, &wm) in pm.iter().enumerate() {
                    if wm == 0.0 {
                        continue;
                    }
                    let (cols, vals) = posterior.row(cell * (b_channels + 1) + m);
                    for (&c, &v) in cols.iter().zip(vals) {
                        *acc.entry(c).or_insert(0.0) += wm * v;
                    }
                }
                acc.into_iter().collect()
            })
        })
        .collect();
    SparseKernel::from_rows(rows)
}

/// Posterior→prior kernel with the expected stage throughputs of each `(cell, Λ)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingKernel {
    pub n_lambda: usize,
    /// Total traffic `Λ` per row `cell · n_lambda + k`.
    pub budgets: Vec<f64>,
    /// Expected SU throughput per row.
    pub su: Vec<f64>,
    /// Expected PU throughput per row.
    pub pu: Vec<f64>,
    pub kernel: SparseKernel,
    counts: Vec<Vec<(u32, u32)>>,
    n_mc: usize,
}

impl SchedulingKernel {
    pub fn row(&self, cell: usize, k: usize) -> usize {
        cell * self.n_lambda + k
    }

    fn from_counts(n_lambda: usize, n_mc: usize, budgets: Vec<f64>, su: Vec<f64>, pu: Vec<f64>, counts: Vec<Vec<(u32, u32)>>) -> Self {
        let rows = counts
            .iter()
            .map(|r| r.iter().map(|&(c, n)| (c, n as f64 / n_mc as f64)).collect())
            .collect();
        Self {
            n_lambda,
            budgets,
            su,
            pu,
            kernel: SparseKernel::from_rows(rows),
            counts,
            n_mc,
        }
    }
}

/// Budget grid point `k` of a cell: `k/(n−1) · Λ_max`.
pub fn lambda_point(lmax: f64, k: usize, n_lambda: usize) -> f64 {
    if n_lambda <= 1 {
        0.0
    } else if k == n_lambda - 1 {
        lmax
    } else {
        lmax * k as f64 / (n_lambda - 1) as f64
    }
}

/// Feedback law of a band with occupancy `beta` and traffic `r`, `b` marginalised,
/// with the next-slot prior that each symbol leads to.
pub(crate) fn band_feedback_law(beta: f64, r: f64, p: &ModelParams) -> [(f64, f64); 3] {
    FeedbackSymbol::ALL.map(|sym| {
        let prob = (1.0 - beta) * feedback_prob(sym, false, r, p) + beta * feedback_prob(sym, true, r, p);
        let next = next_band_prior(beta, r, sym, p).unwrap_or(0.0);
        (prob, next)
    })
}

/// Draws `(n_ACK, n_NACK, n_∅)` for `n` bands sharing one feedback law.
pub(crate) fn sample_feedback_counts<R: Rng + ?Sized>(n: usize, law: &[(f64, f64); 3], rng: &mut R) -> [usize; 3] {
    let draw = |n: usize, q: f64, rng: &mut R| -> usize {
        if n == 0 || q <= 0.0 {
            0
        } else if q >= 1.0 {
            n
        } else {
            Binomial::new(n as u64, q).expect("probability in (0, 1)").sample(rng) as usize
        }
    };
    let acks = draw(n, law[0].0, rng);
    let rest = law[1].0 + law[2].0;
    let nacks = if rest > 0.0 { draw(n - acks, law[1].0 / rest, rng) } else { 0 };
    [acks, nacks, n - acks - nacks]
}

/// Monte-Carlo estimate of the scheduling kernel on a `n_lambda`-point budget grid per cell.
pub fn estimate_scheduling_kernel(
    grid: &CbsGrid,
    n_lambda: usize,
    n_mc: usize,
    p: &ModelParams,
    seed: u64,
) -> Result<SchedulingKernel> {
    check_grid(grid, p)?;
    if n_lambda == 0 || n_mc == 0 {
        return Err(Error::InvalidParameter {
            name: "n_lambda",
            value: n_lambda as f64,
            reason: "budget grid and sample count must be nonempty",
        });
    }
    let f = grid.f_bands;
    type Row = (f64, f64, f64, Vec<(u32, u32)>);
    let per_cell: Vec<Vec<Row>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| -> Result<Vec<Row>> {
            let beta = grid.cell_beta(cell);
            let cbs = grid.cell_cbs(cell);
            let lmax = lambda_max(&beta, p);
            let mut rows: Vec<Row> = Vec::with_capacity(n_lambda);
            for k in 0..n_lambda {
                if lmax <= 0.0 && k > 0 {
                    let first = rows[0].clone();
                    rows.push(first);
                    continue;
                }
                let budget = lambda_point(lmax, k, n_lambda);
                let alloc = allocate(&beta, budget, p)?;
                let r = &alloc.traffic.0;
                let (mut su, mut pu) = (0.0, 0.0);
                for (&b, &ri) in beta.0.iter().zip(r) {
                    su += (1.0 - b) * (1.0 - p.rho_s) * ri * (-ri).exp();
                    pu += b * (1.0 - p.rho_p) * (-ri).exp();
                }
                let groups = [
                    (cbs.nu, band_feedback_law(cbs.beta_low, r[0], p)),
                    (f - cbs.nu, band_feedback_law(cbs.beta_high, r[f - 1], p)),
                ];
                let mut rng = stream(seed, Domain::Scheduling, k as u64);
                let mut next = vec![0.0; f];
                let mut hits: Vec<u32> = Vec::with_capacity(n_mc);
                for _ in 0..n_mc {
                    let mut at = 0;
                    for (n, law) in &groups {
                        let counts = sample_feedback_counts(*n, law, &mut rng);
                        for (s, &c) in counts.iter().enumerate() {
                            next[at..at + c].fill(law[s].1);
                            at += c;
                        }
                    }
                    hits.push(grid.dithered_cell(&project_cbs(&next), &mut rng) as u32);
                }
                hits.sort_unstable();
                let mut row: Vec<(u32, u32)> = Vec::new();
                for h in hits {
                    match row.last_mut() {
                        Some((c, n)) if *c == h => *n += 1,
                        _ => row.push((h, 1)),
                    }
                }
                rows.push((budget, su, pu, row));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let total = grid.n_cells() * n_lambda;
    let (mut budgets, mut su, mut pu, mut counts) = (
        Vec::with_capacity(total),
        Vec::with_capacity(total),
        Vec::with_capacity(total),
        Vec::with_capacity(total),
    );
    for (b, s, q, c) in per_cell.into_iter().flatten() {
        budgets.push(b);
        su.push(s);
        pu.push(q);
        counts.push(c);
    }
    Ok(SchedulingKernel::from_counts(n_lambda, n_mc, budgets, su, pu, counts))
}

/// Everything that determines a kernel cache besides the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub level_step: f64,
    pub n_mc: usize,
    pub seed: u64,
    pub psi_grid: Vec<f64>,
    pub n_lambda: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            level_step: 0.05,
            n_mc: 2000,
            seed: 0,
            psi_grid: default_psi_grid(),
            n_lambda: 21,
        }
    }
}

/// `{0, 0.05, …, 1}`.
pub fn default_psi_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

const MAGIC: &[u8; 8] = b"CBSKERN\0";
const FORMAT_VERSION: u32 = 4;

/// Tables and kernels for one parameter set, identified by a SHA-256 digest.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCache {
    pub params: ModelParams,
    pub spec: KernelSpec,
    pub grid: CbsGrid,
    pub digest: String,
    pub tables: DetectionTables,
    /// Row `cell · (B+1) + m`.
    pub posterior: SparseKernel,
    /// Row `cell · |ψ grid| + j`.
    pub sensing: SparseKernel,
    pub scheduling: SchedulingKernel,
}

impl KernelCache {
    /// Digest of everything the kernels depend on (λ excluded).
    pub fn digest_for(params: &ModelParams, spec: &KernelSpec) -> String {
        let mut h = Sha256::new();
        h.update(Self::describe(params, spec).as_bytes());
        hex::encode(h.finalize())
    }

    fn describe(params: &ModelParams, spec: &KernelSpec) -> String {
        let psi: Vec<String> = spec.psi_grid.iter().map(|v| format!("{v:e}")).collect();
        format!(
            "format={FORMAT_VERSION}\nparams={}\nlevel_step={:e}\nn_mc={}\nseed={}\npsi_grid={}\nn_lambda={}\n",
            params.kernel_key(),
            spec.level_step,
            spec.n_mc,
            spec.seed,
            psi.join(","),
            spec.n_lambda
        )
    }

    pub fn build(params: &ModelParams, spec: &KernelSpec) -> Result<Self> {
        Self::build_reusing(params, spec, None)
    }

    /// Whether `other` has the detection tables `(params, spec)` would produce; they do not
    /// depend on the trade-off weights.
    pub fn shares_tables(&self, params: &ModelParams, spec: &KernelSpec) -> bool {
        self.spec == *spec && self.params.with_tradeoff(0.5, 0.0) == params.with_tradeoff(0.5, 0.0)
    }

    /// As [`KernelCache::build`], taking the detection tables from `base` when it shares them.
    pub fn build_reusing(params: &ModelParams, spec: &KernelSpec, base: Option<&KernelCache>) -> Result<Self> {
        params.validate()?;
        let grid = CbsGrid::new(spec.level_step, params.f_bands)?;
        if spec.psi_grid.iter().any(|v| !(0.0..=1.0).contains(v)) || spec.psi_grid.is_empty() {
            return Err(Error::Config("ψ grid must be nonempty and inside [0, 1]".into()));
        }
        let (tables, posterior, sensing) = match base.filter(|b| b.shares_tables(params, spec)) {
            Some(b) => (b.tables.clone(), b.posterior.clone(), b.sensing.clone()),
            None => {
                log::info!("estimating detection tables on {} cells", grid.n_cells());
                let tables = estimate_detection_tables(&grid, spec.n_mc, params, spec.seed)?;
                let posterior = estimate_posterior_kernel(&grid, &tables);
                let sensing = estimate_sensing_kernel(&posterior, params.b_channels, &spec.psi_grid);
                (tables, posterior, sensing)
            }
        };
        log::info!("estimating scheduling kernel");
        let scheduling = estimate_scheduling_kernel(&grid, spec.n_lambda, spec.n_mc, params, spec.seed)?;
        Ok(Self {
            params: *params,
            spec: spec.clone(),
            grid,
            digest: Self::digest_for(params, spec),
            tables,
            posterior,
            sensing,
            scheduling,
        })
    }

    pub fn n_psi(&self) -> usize {
        self.spec.psi_grid.len()
    }

    /// Row of the sensing kernel for a prior cell and ψ-grid index.
    pub fn sensing_row(&self, cell: usize, j: usize) -> usize {
        cell * self.n_psi() + j
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("cbsk.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let f = self.grid.f_bands;
        let b = self.tables.b_channels;
        let header = format!(
            "{}layout: tables indexed ((cell*(B+1)+m)*(F+1)+nu_hat) with fa f64, md f64, nu_pmf f64, \
             post_cell u32; then scheduling rows (cell*n_lambda+k) with budget f64, su f64, pu f64, nnz u32, \
             nnz*(cell u32, count u32) over n_mc samples. Cells are nu-major, then i_low, then i_high \
             (i_low <= i_high), levels i*level_step. Little-endian.\n",
            Self::describe(&self.params, &self.spec)
        );
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(header.len() as u32)?;
        w.write_all(header.as_bytes())?;
        w.write_all(&hex::decode(&self.digest).map_err(|e| Error::Format(e.to_string()))?)?;
        for v in [f, b, self.grid.n_levels(), self.grid.n_cells(), self.spec.n_mc] {
            w.write_u64::<LittleEndian>(v as u64)?;
        }
        w.write_u64::<LittleEndian>(self.spec.seed)?;
        w.write_f64::<LittleEndian>(self.grid.level_step)?;
        w.write_u64::<LittleEndian>(self.spec.psi_grid.len() as u64)?;
        for &v in &self.spec.psi_grid {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u64::<LittleEndian>(self.spec.n_lambda as u64)?;
        let t = &self.tables;
        for i in 0..t.fa.len() {
            w.write_f64::<LittleEndian>(t.fa[i])?;
            w.write_f64::<LittleEndian>(t.md[i])?;
            w.write_f64::<LittleEndian>(t.nu_pmf[i])?;
            w.write_u32::<LittleEndian>(t.post_cell[i])?;
        }
        w.write_u64::<LittleEndian>(t.fallbacks as u64)?;
        let s = &self.scheduling;
        for row in 0..s.budgets.len() {
            w.write_f64::<LittleEndian>(s.budgets[row])?;
            w.write_f64::<LittleEndian>(s.su[row])?;
            w.write_f64::<LittleEndian>(s.pu[row])?;
            w.write_u32::<LittleEndian>(s.counts[row].len() as u32)?;
            for &(c, n) in &s.counts[row] {
                w.write_u32::<LittleEndian>(c)?;
                w.write_u32::<LittleEndian>(n)?;
            }
        }
        Ok(())
    }

    /// Reads a cache, rejecting it unless its digest matches `params` and `spec`.
    pub fn read(path: &Path, params: &ModelParams, spec: &KernelSpec) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r, params, spec)
    }

    fn read_from<R: Read>(r: &mut R, params: &ModelParams, spec: &KernelSpec) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("kernel cache: {what}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = r.read_u32::<LittleEndian>()? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let mut raw = [0u8; 32];
        r.read_exact(&mut raw)?;
        let found = hex::encode(raw);
        let expected = Self::digest_for(params, spec);
        if found != expected {
            return Err(Error::DigestMismatch { expected, found });
        }
        let grid = CbsGrid::new(spec.level_step, params.f_bands)?;
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = r.read_u64::<LittleEndian>()? as usize;
        }
        let [f, b, n_levels, n_cells, n_mc] = dims;
        if f != params.f_bands || b != params.b_channels || n_levels != grid.n_levels() || n_cells != grid.n_cells() || n_mc != spec.n_mc {
            return Err(bad("dimensions disagree with the digest"));
        }
        let _seed = r.read_u64::<LittleEndian>()?;
        let _step = r.read_f64::<LittleEndian>()?;
        let n_psi = r.read_u64::<LittleEndian>()? as usize;
        for _ in 0..n_psi {
            r.read_f64::<LittleEndian>()?;
        }
        let n_lambda = r.read_u64::<LittleEndian>()? as usize;
        if n_psi != spec.psi_grid.len() || n_lambda != spec.n_lambda {
            return Err(bad("grid sizes disagree with the digest"));
        }
        let len = n_cells * (b + 1) * (f + 1);
        let mut tables = DetectionTables {
            f_bands: f,
            b_channels: b,
            n_cells,
            fa: Vec::with_capacity(len),
            md: Vec::with_capacity(len),
            nu_pmf: Vec::with_capacity(len),
            post_cell: Vec::with_capacity(len),
            fallbacks: 0,
        };
        for _ in 0..len {
            tables.fa.push(r.read_f64::<LittleEndian>()?);
            tables.md.push(r.read_f64::<LittleEndian>()?);
            tables.nu_pmf.push(r.read_f64::<LittleEndian>()?);
            let c = r.read_u32::<LittleEndian>()?;
            if c as usize >= n_cells {
                return Err(bad("posterior cell out of range"));
            }
            tables.post_cell.push(c);
        }
        tables.fallbacks = r.read_u64::<LittleEndian>()? as usize;
        let rows = n_cells * n_lambda;
        let (mut budgets, mut su, mut pu, mut counts) = (
            Vec::with_capacity(rows),
            Vec::with_capacity(rows),
            Vec::with_capacity(rows),
            Vec::with_capacity(rows),
        );
        for _ in 0..rows {
            budgets.push(r.read_f64::<LittleEndian>()?);
            su.push(r.read_f64::<LittleEndian>()?);
            pu.push(r.read_f64::<LittleEndian>()?);
            let nnz = r.read_u32::<LittleEndian>()? as usize;
            let mut row = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let c = r.read_u32::<LittleEndian>()?;
                let n = r.read_u32::<LittleEndian>()?;
                if c as usize >= n_cells {
                    return Err(bad("kernel target out of range"));
                }
                row.push((c, n));
            }
            if row.iter().map(|&(_, n)| n as usize).sum::<usize>() != n_mc {
                return Err(bad("kernel row counts do not sum to n_mc"));
            }
            counts.push(row);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes"));
        }
        let posterior = estimate_posterior_kernel(&grid, &tables);
        let sensing = estimate_sensing_kernel(&posterior, b, &spec.psi_grid);
        Ok(Self {
            params: *params,
            spec: spec.clone(),
            grid,
            digest: expected,
            tables,
            posterior,
            sensing,
            scheduling: SchedulingKernel::from_counts(n_lambda, n_mc, budgets, su, pu, counts),
        })
    }

    /// File name used for a digest inside a cache directory.
    pub fn file_name(digest: &str) -> String {
        format!("kernels-{}.cbsk", &digest[..16])
    }

    /// Loads the cache for `(params, spec)` from `location`, building and writing it when
    /// absent. `location` is a directory, or a `.cbsk` file; when that file belongs to other
    /// parameters it is left alone and a digest-named sibling is used instead.
    pub fn load_or_build(location: &Path, params: &ModelParams, spec: &KernelSpec) -> Result<(Self, PathBuf, bool)> {
        Self::load_or_build_reusing(location, params, spec, None)
    }

    /// As [`KernelCache::load_or_build`], reusing the detection tables of `base` on a build.
    pub fn load_or_build_reusing(
        location: &Path,
        params: &ModelParams,
        spec: &KernelSpec,
        base: Option<&KernelCache>,
    ) -> Result<(Self, PathBuf, bool)> {
        let digest = Self::digest_for(params, spec);
        let is_file = location.extension().is_some_and(|e| e == "cbsk");
        let path = if is_file {
            if location.exists() {
                match Self::read(location, params, spec) {
                    Ok(cache) => return Ok((cache, location.to_path_buf(), false)),
                    Err(Error::DigestMismatch { .. }) => {
                        log::info!("{} holds other parameters; leaving it untouched", location.display());
                        location
                            .parent()
                            .unwrap_or(Path::new("."))
                            .join(Self::file_name(&digest))
                    }
                    Err(e) => return Err(e),
                }
            } else {
                location.to_path_buf()
            }
        } else {
            fs::create_dir_all(location)?;
            location.join(Self::file_name(&digest))
        };
        if path.exists() {
            match Self::read(&path, params, spec) {
                Ok(cache) => return Ok((cache, path, false)),
                Err(Error::DigestMismatch { .. }) => {
                    log::warn!("{} has a colliding name but another digest; rebuilding in place", path.display());
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let cache = Self::build_reusing(params, spec, base)?;
        cache.write(&path)?;
        Ok((cache, path, true))
    }
}
