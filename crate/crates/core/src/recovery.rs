//! MAP occupancy estimation from compressed measurements: the residual problem around
//! the prior mode, its box-constrained convex relaxation, hill-climbing refinement and
//! an exhaustive oracle.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::compression::ExpectedOccupancy;
use crate::dynamics::OccupancyVector;
use crate::error::{Error, Result};
use crate::measurement::{MeasurementBatch, MAX_DENSE_BANDS};
use crate::params::ModelParams;

/// Occupancy probabilities are clamped to `[BETA_CLAMP, 1 − BETA_CLAMP]` before taking log-odds.
pub const BETA_CLAMP: f64 = 1e-9;

pub const RELAX_TOL: f64 = 1e-8;
pub const RELAX_MAX_ITER: usize = 10_000;
const POWER_ITERATIONS: usize = 50;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn clamp_beta(beta: f64) -> f64 {
    let c = beta.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP);
    if c != beta && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("occupancy probability {beta} clamped to {c} for finite log-odds (reported once)");
    }
    c
}

/// Bits to flip relative to the prior mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionVector(pub Vec<bool>);

impl CorrectionVector {
    pub fn zeros(f_bands: usize) -> Self {
        Self(vec![false; f_bands])
    }

    /// Rounds a relaxed solution at 0.5.
    pub fn round(x: &[f64]) -> Self {
        Self(x.iter().map(|&v| v >= 0.5).collect())
    }
}

/// The estimation problem rewritten around the prior mode `b^map`:
/// minimise `‖ŷ − Âᵀe‖² + μᵀe` over corrections `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProblem {
    pub residual_obs: Vec<f64>,
    /// Column-major `F × m`.
    pub corrected_gains: Vec<f64>,
    pub weights: Vec<f64>,
    pub prior_mode: OccupancyVector,
    /// `ÂÂᵀ`, row-major `F × F`.
    gram: Vec<f64>,
    /// `Âŷ`.
    correlation: Vec<f64>,
}

impl ResidualProblem {
    pub fn f_bands(&self) -> usize {
        self.weights.len()
    }

    pub fn count(&self) -> usize {
        self.residual_obs.len()
    }

    #[cfg(test)]
    fn gain(&self, i: usize, j: usize) -> f64 {
        self.corrected_gains[j * self.f_bands() + i]
    }

    fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.f_bands() + j]
    }

    /// `Âᵀx`.
    fn apply_t(&self, x: &[f64], out: &mut [f64]) {
        let f = self.f_bands();
        for (j, o) in out.iter_mut().enumerate() {
            let col = &self.corrected_gains[j * f..(j + 1) * f];
            *o = col.iter().zip(x).map(|(a, v)| a * v).sum();
        }
    }

    /// `Âv` for `v` of length `m`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let f = self.f_bands();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &vj) in v.iter().enumerate() {
            let col = &self.corrected_gains[j * f..(j + 1) * f];
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * vj;
            }
        }
    }

    /// Objective at a real-valued point of the box.
    pub fn relaxed_objective(&self, x: &[f64]) -> f64 {
        let mut fit = vec![0.0; self.count()];
        self.apply_t(x, &mut fit);
        let resid: f64 = self
            .residual_obs
            .iter()
            .zip(&fit)
            .map(|(y, a)| (y - a) * (y - a))
            .sum();
        resid + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Improvement `J(e) − J(flip_i e)` for every band.
    pub fn flip_gains(&self, e: &CorrectionVector) -> Vec<f64> {
        let f = self.f_bands();
        (0..f)
            .map(|i| {
                let cross: f64 = (0..f)
                    .filter(|&j| j != i && e.0[j])
                    .map(|j| self.gram(i, j))
                    .sum();
                let sign = if e.0[i] { 1.0 } else { -1.0 };
                sign * (-2.0 * self.correlation[i] + 2.0 * cross + self.gram(i, i) + self.weights[i])
            })
            .collect()
    }
}

/// Rewrites the MAP problem as a sparse correction of the prior mode.
pub fn residual_transform(
    beta: &ExpectedOccupancy,
    batch: &MeasurementBatch,
    p: &ModelParams,
) -> Result<ResidualProblem> {
    let f = beta.len();
    if batch.f_bands() != f {
        return Err(Error::LengthMismatch {
            expected: f,
            found: batch.f_bands(),
        });
    }
    let m = batch.count();
    let mode = OccupancyVector(beta.0.iter().map(|&b| b >= 0.5).collect());
    let clean = batch.project(&mode.0);
    let residual_obs: Vec<f64> = batch.observations().iter().zip(&clean).map(|(y, c)| y - c).collect();
    let mut corrected_gains = batch.gains().to_vec();
    for j in 0..m {
        for i in (0..f).filter(|&i| mode.0[i]) {
            corrected_gains[j * f + i] = -corrected_gains[j * f + i];
        }
    }
    let weights = beta
        .0
        .iter()
        .zip(&mode.0)
        .map(|(&b, &bm)| {
            let b = clamp_beta(b);
            let sign = if bm { -1.0 } else { 1.0 };
            2.0 * p.sigma_z2 * sign * ((1.0 - b) / b).ln()
        })
        .collect();

    let mut gram = vec![0.0; f * f];
    for j in 0..m {
        let col = &corrected_gains[j * f..(j + 1) * f];
        for a in 0..f {
            for b in a..f {
                gram[a * f + b] += col[a] * col[b];
            }
        }
    }
    for a in 0..f {
        for b in 0..a {
            gram[a * f + b] = gram[b * f + a];
        }
    }
    let mut prob = ResidualProblem {
        residual_obs,
        corrected_gains,
        weights,
        prior_mode: mode,
        gram,
        correlation: vec![0.0; f],
    };
    let mut corr = vec![0.0; f];
    prob.apply(&prob.residual_obs, &mut corr);
    prob.correlation = corr;
    Ok(prob)
}

/// `‖ŷ − Âᵀe‖² + μᵀe`.
pub fn map_objective(e: &CorrectionVector, prob: &ResidualProblem) -> f64 {
    let x: Vec<f64> = e.0.iter().map(|&v| f64::from(u8::from(v))).collect();
    prob.relaxed_objective(&x)
}

/// Output of [`relaxed_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the projected gradient fell below `tol`.
    pub converged: bool,
}

/// Minimises the relaxed objective over `[0,1]^F`.
///
/// Each round takes one projected-gradient step of length `1/L`, `L = 2λ_max(ÂÂᵀ)`, then
/// runs conjugate gradients with exact line searches on the face it lands on, stopping a
/// CG pass when it reaches a new bound. The objective never increases. `iterations`
/// counts both kinds of step.
pub fn relaxed_solve(prob: &ResidualProblem, tol: f64, max_iter: usize) -> Result<RelaxedSolution> {
    relaxed_solve_traced(prob, tol, max_iter, None)
}

/// As [`relaxed_solve`], recording the objective after every step.
pub fn relaxed_solve_traced(
    prob: &ResidualProblem,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<RelaxedSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            reason: "tolerance must be positive",
        });
    }
    let f = prob.f_bands();
    let m = prob.count();
    let lip = 2.0 * largest_eigenvalue(prob);
    let step = if lip > 1e-12 { 1.0 / lip } else { 1.0 };
    let mut x = vec![0.0; f];
    let mut g = vec![0.0; f];
    let mut fit = vec![0.0; m];
    let mut hd = vec![0.0; f];
    let mut d = vec![0.0; f];
    let mut r = vec![0.0; f];
    let mut iterations = 0;
    let mut converged = false;
    if let Some(t) = trace.as_deref_mut() {
        t.push(prob.relaxed_objective(&x));
    }
    let gradient = |x: &[f64], fit: &mut Vec<f64>, g: &mut Vec<f64>| {
        prob.apply_t(x, fit);
        for k in 0..m {
            fit[k] -= prob.residual_obs[k];
        }
        prob.apply(fit, g);
        for i in 0..f {
            g[i] = 2.0 * g[i] + prob.weights[i];
        }
    };
    let hessian = |d: &[f64], fit: &mut Vec<f64>, out: &mut Vec<f64>| {
        prob.apply_t(d, fit);
        prob.apply(fit, out);
        out.iter_mut().for_each(|v| *v *= 2.0);
    };
    while iterations < max_iter {
        gradient(&x, &mut fit, &mut g);
        let mut pg = 0.0;
        for i in 0..f {
            let moved = (x[i] - g[i]).clamp(0.0, 1.0) - x[i];
            pg += moved * moved;
        }
        if pg.sqrt() < tol {
            converged = true;
            break;
        }
        for i in 0..f {
            x[i] = (x[i] - step * g[i]).clamp(0.0, 1.0);
        }
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(prob.relaxed_objective(&x));
        }

        gradient(&x, &mut fit, &mut g);
        let free: Vec<bool> = (0..f)
            .map(|i| (x[i] > 0.0 || g[i] < 0.0) && (x[i] < 1.0 || g[i] > 0.0))
            .collect();
        for i in 0..f {
            r[i] = if free[i] { -g[i] } else { 0.0 };
        }
        d.copy_from_slice(&r);
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..f {
            if rr.sqrt() < tol || iterations >= max_iter {
                break;
            }
            hessian(&d, &mut fit, &mut hd);
            let dhd: f64 = d.iter().zip(&hd).map(|(a, b)| a * b).sum();
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                break;
            }
            let mut to_bound = f64::INFINITY;
            for i in 0..f {
                if d[i] > 0.0 {
                    to_bound = to_bound.min((1.0 - x[i]) / d[i]);
                } else if d[i] < 0.0 {
                    to_bound = to_bound.min(-x[i] / d[i]);
                }
            }
            let exact = if dhd > 0.0 { -slope / dhd } else { f64::INFINITY };
            let alpha = exact.min(to_bound);
            if !alpha.is_finite() {
                break;
            }
            for i in 0..f {
                x[i] = (x[i] + alpha * d[i]).clamp(0.0, 1.0);
                g[i] += alpha * hd[i];
            }
            iterations += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(prob.relaxed_objective(&x));
            }
            if alpha >= to_bound {
                break;
            }
            for i in 0..f {
                r[i] = if free[i] { -g[i] } else { 0.0 };
            }
            let rr_next: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_next / rr;
            for i in 0..f {
                d[i] = r[i] + beta * d[i];
            }
            rr = rr_next;
        }
    }
    if !converged {
        log::debug!("relaxed solve stopped after {iterations} iterations");
    }
    let objective = prob.relaxed_objective(&x);
    Ok(RelaxedSolution {
        x,
        objective,
        iterations,
        converged,
    })
}

/// Power iteration on `ÂÂᵀ`, applied as `Â(Âᵀv)`.
fn largest_eigenvalue(prob: &ResidualProblem) -> f64 {
    let f = prob.f_bands();
    if prob.count() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..f).map(|i| 1.0 + i as f64 / f as f64).collect();
    let mut tmp = vec![0.0; prob.count()];
    let mut w = vec![0.0; f];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        prob.apply_t(&v, &mut tmp);
        prob.apply(&tmp, &mut w);
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut v, &mut w);
    }
    lambda
}

/// Local search by single-bit flips, repeatedly applying the best strictly improving flip.
pub fn hill_climb(start: &CorrectionVector, prob: &ResidualProblem) -> CorrectionVector {
    hill_climb_counted(start, prob).0
}

/// [`hill_climb`] also returning the number of accepted flips.
pub fn hill_climb_counted(start: &CorrectionVector, prob: &ResidualProblem) -> (CorrectionVector, usize) {
    let f = prob.f_bands();
    let mut e = start.clone();
    // cross[i] = Σ_{j≠i} G_ij e_j
    let mut cross: Vec<f64> = (0..f)
        .map(|i| {
            (0..f)
                .filter(|&j| j != i && e.0[j])
                .map(|j| prob.gram(i, j))
                .sum()
        })
        .collect();
    let mut flips = 0;
    loop {
        let mut best = (0.0, usize::MAX);
        for i in 0..f {
            let sign = if e.0[i] { 1.0 } else { -1.0 };
            let delta = sign * (-2.0 * prob.correlation[i] + 2.0 * cross[i] + prob.gram(i, i) + prob.weights[i]);
            if delta > best.0 {
                best = (delta, i);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        let k = best.1;
        e.0[k] = !e.0[k];
        let sign = if e.0[k] { 1.0 } else { -1.0 };
        for (i, c) in cross.iter_mut().enumerate() {
            if i != k {
                *c += sign * prob.gram(i, k);
            }
        }
        flips += 1;
    }
    (e, flips)
}

/// Estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub estimate: OccupancyVector,
    pub flips: usize,
    pub relaxation_converged: bool,
}

/// Prior mode corrected by the rounded relaxation, refined by hill climbing.
pub fn map_estimate(beta: &ExpectedOccupancy, batch: &MeasurementBatch, p: &ModelParams) -> Result<OccupancyVector> {
    Ok(map_estimate_detailed(beta, batch, p)?.estimate)
}

pub fn map_estimate_detailed(
    beta: &ExpectedOccupancy,
    batch: &MeasurementBatch,
    p: &ModelParams,
) -> Result<MapEstimate> {
    let prob = residual_transform(beta, batch, p)?;
    let relaxed = relaxed_solve(&prob, RELAX_TOL, RELAX_MAX_ITER)?;
    let (e, flips) = hill_climb_counted(&CorrectionVector::round(&relaxed.x), &prob);
    let estimate = OccupancyVector(prob.prior_mode.0.iter().zip(&e.0).map(|(&a, &b)| a ^ b).collect());
    Ok(MapEstimate {
        estimate,
        flips,
        relaxation_converged: relaxed.converged,
    })
}

/// Exact MAP by enumeration of all `2^F` states; ties go to the smallest index (band `i` = bit `i`).
pub fn map_exhaustive(beta: &ExpectedOccupancy, batch: &MeasurementBatch, p: &ModelParams) -> Result<OccupancyVector> {
    let f = beta.len();
    if f > MAX_DENSE_BANDS {
        return Err(Error::TooManyBands {
            bands: f,
            max: MAX_DENSE_BANDS,
        });
    }
    if batch.f_bands() != f {
        return Err(Error::LengthMismatch {
            expected: f,
            found: batch.f_bands(),
        });
    }
    let penalty: Vec<f64> = beta
        .0
        .iter()
        .map(|&b| {
            let b = clamp_beta(b);
            2.0 * p.sigma_z2 * ((1.0 - b) / b).ln()
        })
        .collect();
    let m = batch.count();
    let mut fit = vec![0.0; m];
    let mut best = (f64::INFINITY, 0);
    for s in 0..1usize << f {
        fit.iter_mut().for_each(|v| *v = 0.0);
        let mut cost = 0.0;
        for i in (0..f).filter(|i| s >> i & 1 == 1) {
            cost += penalty[i];
            for (j, v) in fit.iter_mut().enumerate() {
                *v += batch.gain(i, j);
            }
        }
        cost += fit
            .iter()
            .zip(batch.observations())
            .map(|(a, y)| (y - a) * (y - a))
            .sum::<f64>();
        if cost < best.0 {
            best = (cost, s);
        }
    }
    Ok(OccupancyVector::from_index(best.1, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::generate_batch;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, f: usize, m: usize) -> (ExpectedOccupancy, MeasurementBatch, ResidualProblem) {
        let p = ModelParams::reference();
        let beta = ExpectedOccupancy((0..f).map(|_| rng.random_range(0.02..0.98)).collect());
        let truth = OccupancyVector(beta.0.iter().map(|&b| rng.random::<f64>() < b).collect());
        let batch = generate_batch(&truth, m, &p, rng);
        let prob = residual_transform(&beta, &batch, &p).unwrap();
        (beta, batch, prob)
    }

    #[test]
    fn transform_examples() {
        let p = ModelParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = OccupancyVector(vec![true, false, true]);
        let batch = generate_batch(&truth, 3, &p, &mut rng);

        let prob = residual_transform(&ExpectedOccupancy(vec![0.5; 3]), &batch, &p).unwrap();
        assert!(prob.weights.iter().all(|&w| w == 0.0));
        assert_eq!(prob.prior_mode.0, vec![true; 3]);

        let prob = residual_transform(&ExpectedOccupancy(vec![0.2, 0.4, 0.1]), &batch, &p).unwrap();
        assert_eq!(prob.corrected_gains, batch.gains());
        assert_eq!(prob.residual_obs, batch.observations());
        assert_eq!(prob.prior_mode.0, vec![false; 3]);

        let two = generate_batch(&OccupancyVector(vec![true, false]), 1, &p, &mut rng);
        let prob = residual_transform(&ExpectedOccupancy(vec![0.9, 0.1]), &two, &p).unwrap();
        for &w in &prob.weights {
            assert_abs_diff_eq!(w, 0.1 * 9f64.ln(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(prob.weights[0], 0.2197, epsilon = 5e-5);
    }

    #[test]
    fn objective_hand_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, _, prob) = random_problem(&mut rng, 2, 3);
        for s in 0..4usize {
            let e = CorrectionVector(vec![s & 1 == 1, s & 2 == 2]);
            let mut want = 0.0;
            for j in 0..3 {
                let mut fit = 0.0;
                for i in 0..2 {
                    if e.0[i] {
                        fit += prob.gain(i, j);
                    }
                }
                want += (prob.residual_obs[j] - fit).powi(2);
            }
            for i in 0..2 {
                if e.0[i] {
                    want += prob.weights[i];
                }
            }
            assert_abs_diff_eq!(map_objective(&e, &prob), want, epsilon = 1e-12);
        }
        let e = CorrectionVector::zeros(2);
        let ny: f64 = prob.residual_obs.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(map_objective(&e, &prob), ny, epsilon = 1e-12);
    }

    #[test]
    fn flip_gains_match_objective_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let f = rng.random_range(1..=12);
            let m = rng.random_range(0..=6);
            let (_, _, prob) = random_problem(&mut rng, f, m);
            let e = CorrectionVector((0..f).map(|_| rng.random()).collect());
            let base = map_objective(&e, &prob);
            for (i, d) in prob.flip_gains(&e).iter().enumerate() {
                let mut g = e.clone();
                g.0[i] = !g.0[i];
                assert_abs_diff_eq!(map_objective(&g, &prob) - base, -d, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn relaxed_trivial_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, _, mut prob) = random_problem(&mut rng, 5, 3);
        prob.residual_obs.iter_mut().for_each(|v| *v = 0.0);
        prob.correlation.iter_mut().for_each(|v| *v = 0.0);
        prob.weights = vec![0.3; 5];
        let sol = relaxed_solve(&prob, 1e-8, 10_000).unwrap();
        assert!(sol.x.iter().all(|&v| v == 0.0));

        for _ in 0..100 {
            let f = rng.random_range(2..=20);
            let m = rng.random_range(1..=5);
            let (_, _, prob) = random_problem(&mut rng, f, m);
            let mut trace = Vec::new();
            let sol = relaxed_solve_traced(&prob, 1e-8, 10_000, Some(&mut trace)).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            assert!(sol.objective <= prob.relaxed_objective(&vec![0.0; f]) + 1e-12);
            assert!(sol.objective <= prob.relaxed_objective(&vec![1.0; f]) + 1e-12);
        }
        assert!(relaxed_solve(&prob, 0.0, 10).is_err());
    }

    #[test]
    fn hill_climb_fixed_point_at_optimum() {
        let p = ModelParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let f = rng.random_range(1..=8);
            let (beta, batch, prob) = random_problem(&mut rng, f, 3);
            let best = map_exhaustive(&beta, &batch, &p).unwrap();
            let e = CorrectionVector(best.0.iter().zip(&prob.prior_mode.0).map(|(a, b)| a ^ b).collect());
            let (out, flips) = hill_climb_counted(&e, &prob);
            assert_eq!(out, e);
            assert_eq!(flips, 0);
        }
    }

    #[test]
    fn empty_batch_returns_prior_mode() {
        let p = ModelParams::reference();
        let beta = ExpectedOccupancy(vec![0.9, 0.2, 0.6, 0.05]);
        let est = map_estimate(&beta, &MeasurementBatch::empty(4), &p).unwrap();
        assert_eq!(est.0, vec![true, false, true, false]);
        let ex = map_exhaustive(&ExpectedOccupancy(vec![0.9, 0.2]), &MeasurementBatch::empty(2), &p).unwrap();
        assert_eq!(ex.0, vec![true, false]);
        assert!(map_exhaustive(&ExpectedOccupancy(vec![0.5; 15]), &MeasurementBatch::empty(15), &p).is_err());
    }

    #[test]
    fn noiseless_exhaustive_recovers_truth() {
        let mut p = ModelParams::reference();
        p.sigma_z2 = 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let f = rng.random_range(1..=8);
            let truth = OccupancyVector((0..f).map(|_| rng.random()).collect());
            let batch = generate_batch(&truth, f + 1, &p, &mut rng);
            let beta = ExpectedOccupancy(vec![0.3; f]);
            assert_eq!(map_exhaustive(&beta, &batch, &p).unwrap(), truth);
        }
    }

    #[test]
    fn scalar_log_odds_monotonicity() {
        let p = ModelParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let truth = OccupancyVector(vec![rng.random()]);
            let batch = generate_batch(&truth, rng.random_range(0..=3), &p, &mut rng);
            let mut prev = false;
            for k in 1..100 {
                let b = k as f64 / 100.0;
                let est = map_estimate(&ExpectedOccupancy(vec![b]), &batch, &p).unwrap().0[0];
                assert!(!(prev && !est), "estimate dropped from 1 to 0 at β = {b}");
                prev = est;
            }
        }
    }
}
