//! Myopic split of a total traffic budget `Λ` across bands given posterior occupancies.
//!
//! Band `i` contributes `g_i(r) = [(1−β̂_i)r + cβ̂_i]e^{−r}`, concave on `[0, r_max,i]`.
//! The allocation solves `max Σ g_i(r_i)` s.t. `Σ r_i = Λ`, `0 ≤ r_i ≤ r_max,i` through its
//! KKT conditions: every band sits at 0, at its cap, or where `−g_i'(r_i) = μ`.

use serde::Serialize;

use crate::compression::ExpectedOccupancy;
use crate::dynamics::TrafficVector;
use crate::error::{Error, Result};
use crate::params::ModelParams;

const OUTER_TOL: f64 = 1e-9;
const INNER_TOL: f64 = 1e-11;
const MAX_OUTER: usize = 400;
/// Budgets this far above `Λ_max` are treated as rounding and clamped.
const BUDGET_SLACK: f64 = 1e-9;

/// Result of [`allocate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationResult {
    pub traffic: TrafficVector,
    pub multiplier: f64,
    /// Myopic objective at `traffic`.
    pub objective: f64,
}

/// Largest useful per-band traffic: `[1 − cβ̂/(1−β̂)]⁺`.
pub fn r_max(beta_hat: &ExpectedOccupancy, p: &ModelParams) -> TrafficVector {
    let c = p.pu_weight();
    TrafficVector(beta_hat.0.iter().map(|&b| band_cap(b, c)).collect())
}

/// `Σ_i r_max,i`.
pub fn lambda_max(beta_hat: &ExpectedOccupancy, p: &ModelParams) -> f64 {
    let c = p.pu_weight();
    beta_hat.0.iter().map(|&b| band_cap(b, c)).sum()
}

pub(crate) fn band_cap(beta: f64, c: f64) -> f64 {
    if beta >= 1.0 {
        return 0.0;
    }
    (1.0 - beta / (1.0 - beta) * c).max(0.0)
}

/// Occupancy at or above which a band receives no traffic.
pub fn zero_traffic_threshold(p: &ModelParams) -> f64 {
    let su = p.xi * (1.0 - p.rho_s);
    su / ((1.0 - p.xi) * (1.0 - p.rho_p) + su)
}

/// `Σ_i [(1−β̂_i)r_i + cβ̂_i]e^{−r_i}`.
pub fn myopic_objective(beta_hat: &ExpectedOccupancy, r: &TrafficVector, p: &ModelParams) -> Result<f64> {
    if beta_hat.len() != r.0.len() {
        return Err(Error::LengthMismatch {
            expected: beta_hat.len(),
            found: r.0.len(),
        });
    }
    if let Some(&bad) = r.0.iter().find(|v| **v < 0.0) {
        return Err(Error::NegativeRate(bad));
    }
    let c = p.pu_weight();
    Ok(beta_hat
        .0
        .iter()
        .zip(&r.0)
        .map(|(&b, &ri)| band_value(b, c, ri))
        .sum())
}

fn band_value(beta: f64, c: f64, r: f64) -> f64 {
    ((1.0 - beta) * r + c * beta) * (-r).exp()
}

/// `−g'(r) = [(1−β̂)(r−1) + cβ̂]e^{−r}`, increasing on `[0, r_max]` and zero at `r_max`.
fn marginal_cost(beta: f64, c: f64, r: f64) -> f64 {
    ((1.0 - beta) * (r - 1.0) + c * beta) * (-r).exp()
}

/// Bands sharing the same occupancy, solved once per group.
struct Group {
    beta: f64,
    cap: f64,
    count: usize,
}

impl Group {
    fn response(&self, mu: f64, c: f64) -> f64 {
        if self.cap <= 0.0 || marginal_cost(self.beta, c, 0.0) >= mu {
            return 0.0;
        }
        if mu >= 0.0 {
            return self.cap;
        }
        let (mut lo, mut hi) = (0.0, self.cap);
        while hi - lo > INNER_TOL {
            let mid = 0.5 * (lo + hi);
            if marginal_cost(self.beta, c, mid) < mu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Concave split of `budget` over the bands.
pub fn allocate(beta_hat: &ExpectedOccupancy, budget: f64, p: &ModelParams) -> Result<AllocationResult> {
    if !(budget >= 0.0) {
        return Err(Error::NegativeRate(budget));
    }
    let c = p.pu_weight();
    let f = beta_hat.len();

    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| beta_hat.0[a].total_cmp(&beta_hat.0[b]));
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of = vec![0; f];
    for &band in &order {
        let beta = beta_hat.0[band];
        match groups.last_mut() {
            Some(g) if g.beta == beta => g.count += 1,
            _ => groups.push(Group {
                beta,
                cap: band_cap(beta, c),
                count: 1,
            }),
        }
        group_of[band] = groups.len() - 1;
    }
    let total_cap: f64 = groups.iter().map(|g| g.cap * g.count as f64).sum();
    if budget > total_cap + BUDGET_SLACK {
        return Err(Error::BudgetInfeasible {
            budget,
            max: total_cap,
        });
    }

    let finish = |per_group: Vec<f64>, multiplier: f64| {
        let traffic = TrafficVector((0..f).map(|i| per_group[group_of[i]]).collect());
        let objective = beta_hat
            .0
            .iter()
            .zip(&traffic.0)
            .map(|(&b, &r)| band_value(b, c, r))
            .sum();
        AllocationResult {
            traffic,
            multiplier,
            objective,
        }
    };

    if budget == 0.0 || total_cap <= 0.0 {
        let lo = groups
            .iter()
            .map(|g| marginal_cost(g.beta, c, 0.0))
            .fold(0.0, f64::min);
        return Ok(finish(vec![0.0; groups.len()], lo));
    }
    if budget >= total_cap {
        return Ok(finish(groups.iter().map(|g| g.cap).collect(), 0.0));
    }

    let total = |mu: f64| -> (f64, Vec<f64>) {
        let per: Vec<f64> = groups.iter().map(|g| g.response(mu, c)).collect();
        let s = per.iter().zip(&groups).map(|(r, g)| r * g.count as f64).sum();
        (s, per)
    };
    let mut lo = groups
        .iter()
        .filter(|g| g.cap > 0.0)
        .map(|g| marginal_cost(g.beta, c, 0.0))
        .fold(0.0, f64::min);
    let mut hi = 0.0;
    let mut best = (lo, vec![0.0; groups.len()], f64::INFINITY);
    for _ in 0..MAX_OUTER {
        let mid = 0.5 * (lo + hi);
        let (s, per) = total(mid);
        let gap = s - budget;
        if gap.abs() < best.2 {
            best = (mid, per, gap.abs());
        }
        if gap.abs() < OUTER_TOL {
            break;
        }
        if gap < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * lo.abs() {
            break;
        }
    }
    Ok(finish(best.1, best.0))
}
