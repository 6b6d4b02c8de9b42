//! Compressed spectrum measurements and the exact Bayesian posterior over all `2^F` states.

use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::dynamics::OccupancyVector;
use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Largest `F` for which full enumeration of occupancy states is allowed.
pub const MAX_DENSE_BANDS: usize = 14;

/// Measurements received in one slot: gains `A` (`F × m`) and observations `y = Aᵀb + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    f_bands: usize,
    /// Column-major: column `j` is the gain vector of measurement `j`.
    gains: Vec<f64>,
    observations: Vec<f64>,
}

impl MeasurementBatch {
    pub fn new(f_bands: usize, gains: Vec<f64>, observations: Vec<f64>) -> Result<Self> {
        if gains.len() != f_bands * observations.len() {
            return Err(Error::LengthMismatch {
                expected: f_bands * observations.len(),
                found: gains.len(),
            });
        }
        Ok(Self {
            f_bands,
            gains,
            observations,
        })
    }

    pub fn empty(f_bands: usize) -> Self {
        Self {
            f_bands,
            gains: Vec::new(),
            observations: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.observations.len()
    }

    pub fn f_bands(&self) -> usize {
        self.f_bands
    }

    /// Gain vector of measurement `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.gains[j * self.f_bands..(j + 1) * self.f_bands]
    }

    /// Entry `A[i][j]`.
    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gains[j * self.f_bands + i]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Keeps only the measurements whose indices are listed.
    pub fn select(&self, columns: &[usize]) -> Self {
        let mut gains = Vec::with_capacity(columns.len() * self.f_bands);
        let mut observations = Vec::with_capacity(columns.len());
        for &j in columns {
            gains.extend_from_slice(self.column(j));
            observations.push(self.observations[j]);
        }
        Self {
            f_bands: self.f_bands,
            gains,
            observations,
        }
    }

    /// `Aᵀb` for a given occupancy.
    pub fn project(&self, b: &[bool]) -> Vec<f64> {
        (0..self.count())
            .map(|j| {
                self.column(j)
                    .iter()
                    .zip(b)
                    .filter(|(_, &bi)| bi)
                    .map(|(a, _)| a)
                    .sum()
            })
            .collect()
    }

    /// One row per measurement: index, the `F` gains, then the observation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["measurement".to_string()];
        header.extend((0..self.f_bands).map(|i| format!("a{i}")));
        header.push("y".to_string());
        w.write_record(&header)?;
        for j in 0..self.count() {
            let mut row = vec![j.to_string()];
            row.extend(self.column(j).iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.observations[j]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of measurements that reach the controller: `Binomial(B, ψe^{−ψ})`.
pub fn draw_measurement_count<R: Rng + ?Sized>(psi: f64, p: &ModelParams, rng: &mut R) -> Result<usize> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::InvalidParameter {
            name: "psi",
            value: psi,
            reason: "sensing traffic must lie in [0, 1]",
        });
    }
    let q = psi * (-psi).exp();
    if q <= 0.0 {
        return Ok(0);
    }
    let law = Binomial::new(p.b_channels as u64, q).map_err(|_| Error::InvalidParameter {
        name: "psi",
        value: psi,
        reason: "invalid binomial parameter",
    })?;
    Ok(law.sample(rng) as usize)
}

/// Draws `m` Gaussian measurements of the occupancy `b`.
pub fn generate_batch<R: Rng + ?Sized>(
    b: &OccupancyVector,
    m: usize,
    p: &ModelParams,
    rng: &mut R,
) -> MeasurementBatch {
    let f = b.len();
    let gain = Normal::new(0.0, p.sigma_a2.sqrt()).expect("validated variance");
    let noise = Normal::new(0.0, p.sigma_z2.sqrt()).expect("validated variance");
    let mut gains = Vec::with_capacity(f * m);
    let mut observations = Vec::with_capacity(m);
    for _ in 0..m {
        let mut y = 0.0;
        for &bi in &b.0 {
            let a: f64 = gain.sample(rng);
            if bi {
                y += a;
            }
            gains.push(a);
        }
        observations.push(y + noise.sample(rng));
    }
    MeasurementBatch {
        f_bands: f,
        gains,
        observations,
    }
}

/// A probability distribution over all `2^F` occupancy vectors, band `i` being bit `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBelief {
    f_bands: usize,
    masses: Vec<f64>,
}

impl DenseBelief {
    fn check_bands(f_bands: usize) -> Result<()> {
        if f_bands > MAX_DENSE_BANDS {
            Err(Error::TooManyBands {
                bands: f_bands,
                max: MAX_DENSE_BANDS,
            })
        } else {
            Ok(())
        }
    }

    /// Normalizes the given nonnegative masses.
    pub fn new(f_bands: usize, masses: Vec<f64>) -> Result<Self> {
        Self::check_bands(f_bands)?;
        if masses.len() != 1 << f_bands {
            return Err(Error::LengthMismatch {
                expected: 1 << f_bands,
                found: masses.len(),
            });
        }
        if let Some(&bad) = masses.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "masses",
                value: bad,
                reason: "masses must be finite and nonnegative",
            });
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroPrior);
        }
        Ok(Self {
            f_bands,
            masses: masses.into_iter().map(|m| m / total).collect(),
        })
    }

    /// Product distribution with per-band occupancy probabilities `beta`.
    pub fn factorized(beta: &[f64]) -> Result<Self> {
        Self::check_bands(beta.len())?;
        let f = beta.len();
        let masses = (0..1usize << f)
            .map(|s| {
                (0..f)
                    .map(|i| if s >> i & 1 == 1 { beta[i] } else { 1.0 - beta[i] })
                    .product()
            })
            .collect();
        Self::new(f, masses)
    }

    pub fn point_mass(b: &OccupancyVector) -> Result<Self> {
        Self::check_bands(b.len())?;
        let mut masses = vec![0.0; 1 << b.len()];
        masses[b.to_index()] = 1.0;
        Ok(Self {
            f_bands: b.len(),
            masses,
        })
    }

    pub fn f_bands(&self) -> usize {
        self.f_bands
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, b: &OccupancyVector) -> f64 {
        self.masses[b.to_index()]
    }

    /// Per-band occupancy probabilities.
    pub fn marginals(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.f_bands];
        for (s, &m) in self.masses.iter().enumerate() {
            for (i, bi) in beta.iter_mut().enumerate() {
                if s >> i & 1 == 1 {
                    *bi += m;
                }
            }
        }
        beta
    }

    /// Most probable state; ties go to the smallest index.
    pub fn argmax(&self) -> OccupancyVector {
        let mut best = 0;
        for (s, &m) in self.masses.iter().enumerate() {
            if m > self.masses[best] {
                best = s;
            }
        }
        OccupancyVector::from_index(best, self.f_bands)
    }
}

/// `π̂(b) ∝ π(b)·exp{−‖y − Aᵀb‖²/(2σ_Z²)}`, evaluated in the log domain.
pub fn exact_posterior(prior: &DenseBelief, batch: &MeasurementBatch, p: &ModelParams) -> Result<DenseBelief> {
    let f = prior.f_bands;
    if batch.f_bands != f {
        return Err(Error::LengthMismatch {
            expected: f,
            found: batch.f_bands,
        });
    }
    if prior.masses.iter().all(|&m| m <= 0.0) {
        return Err(Error::ZeroPrior);
    }
    let m = batch.count();
    let mut logs = vec![f64::NEG_INFINITY; prior.masses.len()];
    let mut fit = vec![0.0; m];
    for (s, log) in logs.iter_mut().enumerate() {
        let w = prior.masses[s];
        if w <= 0.0 {
            continue;
        }
        fit.iter_mut().for_each(|v| *v = 0.0);
        for i in (0..f).filter(|i| s >> i & 1 == 1) {
            for (j, v) in fit.iter_mut().enumerate() {
                *v += batch.gain(i, j);
            }
        }
        let dist2: f64 = fit
            .iter()
            .zip(&batch.observations)
            .map(|(a, y)| (y - a) * (y - a))
            .sum();
        *log = w.ln() - dist2 / (2.0 * p.sigma_z2);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let masses = logs.iter().map(|&l| (l - top).exp()).collect();
    DenseBelief::new(f, masses)
}
