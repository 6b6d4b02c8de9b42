//! Two-level factorized beliefs and the KLD projection onto them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::DenseBelief;
use crate::stats::binary_entropy;

/// Per-band occupancy probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOccupancy(pub Vec<f64>);

impl ExpectedOccupancy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = probs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: bad,
                reason: "occupancy probability outside [0, 1]",
            });
        }
        Ok(Self(probs))
    }

    pub fn uniform(f_bands: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; f_bands])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Σ_i H₂(β_i) in nats.
    pub fn entropy(&self) -> f64 {
        self.0.iter().map(|&b| binary_entropy(b)).sum()
    }
}

/// Compressed belief `(β̄_L, β̄_H, ν)`: `ν` bands at the low level, the rest at the high level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressedBeliefState {
    pub beta_low: f64,
    pub beta_high: f64,
    pub nu: usize,
}

impl CompressedBeliefState {
    pub fn new(beta_low: f64, beta_high: f64, nu: usize, f_bands: usize) -> Result<Self> {
        if !(0.0 <= beta_low && beta_low <= beta_high && beta_high <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "beta_low",
                value: beta_low,
                reason: "levels must satisfy 0 ≤ low ≤ high ≤ 1",
            });
        }
        if nu == 0 || nu >= f_bands {
            return Err(Error::InvalidParameter {
                name: "nu",
                value: nu as f64,
                reason: "low-level count must lie in 1..F−1",
            });
        }
        Ok(Self {
            beta_low,
            beta_high,
            nu,
        })
    }

    /// Expected number of occupied bands.
    pub fn total(&self, f_bands: usize) -> f64 {
        self.nu as f64 * self.beta_low + (f_bands - self.nu) as f64 * self.beta_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

/// Assignment of each band to one of the two levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMap(pub Vec<Level>);

impl LevelMap {
    /// First `nu` bands low, the rest high.
    pub fn leading(nu: usize, f_bands: usize) -> Self {
        Self(
            (0..f_bands)
                .map(|i| if i < nu { Level::Low } else { Level::High })
                .collect(),
        )
    }

    pub fn low_count(&self) -> usize {
        self.0.iter().filter(|l| **l == Level::Low).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// KLD projection of a factorized belief with marginals `beta` onto the two-level manifold.
///
/// Levels are the prefix/suffix means of the stably sorted `beta`; ties in the objective
/// go to the smallest `ν`.
pub fn project(beta: &ExpectedOccupancy) -> Result<(CompressedBeliefState, LevelMap)> {
    let f = beta.len();
    if f < 2 {
        return Err(Error::TooFewBands { bands: f, min: 2 });
    }
    let (cbs, order) = project_sorted(&beta.0);
    let mut map = vec![Level::High; f];
    for &band in &order[..cbs.nu] {
        map[band] = Level::Low;
    }
    Ok((cbs, LevelMap(map)))
}

/// Projection without building the level map; `beta.len() ≥ 2`.
pub(crate) fn project_cbs(beta: &[f64]) -> CompressedBeliefState {
    project_sorted(beta).0
}

fn project_sorted(beta: &[f64]) -> (CompressedBeliefState, Vec<usize>) {
    let f = beta.len();
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| beta[a].total_cmp(&beta[b]));
    let mut prefix = vec![0.0; f + 1];
    for (k, &band) in order.iter().enumerate() {
        prefix[k + 1] = prefix[k] + beta[band];
    }
    let total = prefix[f];
    let mut best = (f64::INFINITY, 1, 0.0, 0.0);
    for nu in 1..f {
        let low = (prefix[nu] / nu as f64).clamp(0.0, 1.0);
        let high = ((total - prefix[nu]) / (f - nu) as f64).clamp(0.0, 1.0);
        let obj = nu as f64 * binary_entropy(low) + (f - nu) as f64 * binary_entropy(high);
        // Near-equal objectives count as ties so rounding in the means cannot move ν.
        if obj < best.0 - 1e-12 {
            best = (obj, nu, low, high);
        }
    }
    let (_, nu, low, high) = best;
    (
        CompressedBeliefState {
            beta_low: low,
            beta_high: high.max(low),
            nu,
        },
        order,
    )
}

/// Per-band probabilities of a compressed belief under a level map.
pub fn expand(cbs: &CompressedBeliefState, map: &LevelMap) -> Result<ExpectedOccupancy> {
    let found = map.low_count();
    if found != cbs.nu {
        return Err(Error::InconsistentLevelMap {
            expected: cbs.nu,
            found,
        });
    }
    Ok(ExpectedOccupancy(
        map.0
            .iter()
            .map(|l| match l {
                Level::Low => cbs.beta_low,
                Level::High => cbs.beta_high,
            })
            .collect(),
    ))
}

/// `D(π‖π̃)` where `π̃` is the factorized law of the expanded compressed belief.
/// Returns `+∞` when `π̃` vanishes on part of the support of `π`.
pub fn kld_to_factorized(pi: &DenseBelief, cbs: &CompressedBeliefState, map: &LevelMap) -> Result<f64> {
    if map.len() != pi.f_bands() {
        return Err(Error::LengthMismatch {
            expected: pi.f_bands(),
            found: map.len(),
        });
    }
    let approx = expand(cbs, map)?;
    let mut total = 0.0;
    for (s, &mass) in pi.masses().iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let mut q = 1.0;
        for (i, &beta) in approx.0.iter().enumerate() {
            q *= if s >> i & 1 == 1 { beta } else { 1.0 - beta };
        }
        if q <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total += mass * (mass / q).ln();
    }
    Ok(total.max(0.0))
}
