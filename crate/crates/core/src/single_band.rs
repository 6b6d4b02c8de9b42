//! Single-band, noiseless sensing: the memoryless (non-adaptive) scheme and the
//! heuristic adaptive scheme whose sensing traffic depends on the last detected state.

use serde::Serialize;

use crate::dynamics::{busy_next, steady_state_idle_prob};
use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Belief of the single-band controller: last detected state and slots since detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DelayBelief {
    pub last_state: bool,
    pub age: u32,
}

/// Adaptive single-band policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleBandPolicy {
    /// Sensing traffic while the last detection was idle.
    pub psi0: f64,
    /// Sensing traffic while the last detection was busy.
    pub psi1: f64,
    /// Data traffic scheduled in the slot of an idle detection.
    pub r: f64,
}

impl SingleBandPolicy {
    pub fn new(psi0: f64, psi1: f64, r: f64) -> Result<Self> {
        for (name, value) in [("psi0", psi0), ("psi1", psi1), ("r", r)] {
            check_unit(name, value)?;
        }
        Ok(Self { psi0, psi1, r })
    }

    pub fn psi(&self, b: bool) -> f64 {
        if b {
            self.psi1
        } else {
            self.psi0
        }
    }
}

/// Long-run averages of a single-band policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleBandMetrics {
    pub cost: f64,
    /// Part of `cost` spent on sensing.
    pub sensing_cost: f64,
    pub su_throughput: f64,
    pub pu_throughput: f64,
}

impl SingleBandMetrics {
    pub fn sensing_fraction(&self) -> f64 {
        if self.cost > 0.0 {
            self.sensing_cost / self.cost
        } else {
            0.0
        }
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

fn check_budget(c_max: f64) -> Result<()> {
    if c_max > 0.0 && c_max.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveBudget(c_max))
    }
}

/// Metrics of memoryless sensing with traffic `psi` and data traffic `r` on idle detections.
pub fn nonadaptive_metrics(psi: f64, r: f64, p: &ModelParams) -> Result<SingleBandMetrics> {
    check_unit("psi", psi)?;
    check_unit("r", r)?;
    let pi0 = steady_state_idle_prob(p);
    let detect = pi0 * psi * (-psi).exp();
    let sensing_cost = psi * p.c_s;
    Ok(SingleBandMetrics {
        cost: sensing_cost + detect * r * p.c_tx,
        sensing_cost,
        su_throughput: (1.0 - p.rho_s) * detect * r * (-r).exp(),
        pu_throughput: (1.0 - p.rho_p) * (1.0 - pi0),
    })
}

/// Outcome of [`nonadaptive_optimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonadaptiveOptimum {
    pub psi: f64,
    pub r: f64,
    pub metrics: SingleBandMetrics,
    /// Closed-form upper-bound maximiser, for cross-checking the search.
    pub closed_form_psi: f64,
}

const NONADAPTIVE_STEP: f64 = 1e-4;

/// Exhaustive search along the budget-tight curve `r(ψ)`, clipped to `r ≤ 1`.
pub fn nonadaptive_optimize(c_max: f64, p: &ModelParams) -> Result<NonadaptiveOptimum> {
    check_budget(c_max)?;
    let pi0 = steady_state_idle_prob(p);
    let closed_form_psi =
        (2.0 * (c_max / p.c_s) / (1.0 + (1.0 + 4.0 * pi0 * p.c_tx / p.c_s).sqrt())).min(1.0);

    let full = nonadaptive_metrics(1.0, 1.0, p)?;
    if c_max >= full.cost {
        return Ok(NonadaptiveOptimum {
            psi: 1.0,
            r: 1.0,
            metrics: full,
            closed_form_psi,
        });
    }

    let steps = (1.0 / NONADAPTIVE_STEP).round() as usize;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for k in 1..=steps {
        let psi = k as f64 * NONADAPTIVE_STEP;
        let leftover = c_max - psi * p.c_s;
        if leftover < 0.0 {
            break;
        }
        let r = if pi0 * p.c_tx > 0.0 {
            (leftover * psi.exp() / (pi0 * psi * p.c_tx)).min(1.0)
        } else {
            1.0
        };
        let t = (1.0 - p.rho_s) * pi0 * psi * (-psi).exp() * r * (-r).exp();
        if t > best.2 {
            best = (psi, r, t);
        }
    }
    let (psi, r) = if best.2.is_finite() {
        (best.0, best.1)
    } else {
        (0.0, 0.0)
    };
    Ok(NonadaptiveOptimum {
        psi,
        r,
        metrics: nonadaptive_metrics(psi, r, p)?,
        closed_form_psi,
    })
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Occupancy chain without SU data traffic; `m[from][to]`.
pub(crate) fn idle_chain(p: &ModelParams) -> Mat2 {
    let mut m = [[0.0; 2]; 2];
    for from in 0..2 {
        let busy = busy_next(from == 1, 0.0, p);
        m[from][0] = 1.0 - busy;
        m[from][1] = busy;
    }
    m
}

const TAIL_TOL: f64 = 1e-12;

/// `Σ_{τ≥1} (1−p)^{τ−1} p P^τ[from][to]`, truncated once the tail bound drops below 1e-12.
fn first_detection_series(chain: &Mat2, p_detect: f64, from: usize, to: usize) -> f64 {
    let x = 1.0 - p_detect;
    let mut power = *chain;
    let mut decay = 1.0;
    let mut sum = 0.0;
    loop {
        sum += p_detect * decay * power[from][to];
        decay *= x;
        // Terms beyond τ sum to at most x^τ.
        if decay <= TAIL_TOL {
            break;
        }
        power = mat_mul(&power, chain);
    }
    sum
}

/// Stationary law of the delay-indexed belief under an adaptive policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSteadyState {
    /// Per-slot detection probability `ψ(b)e^{−ψ(b)}` in belief state `b`.
    pub detect_prob: [f64; 2],
    /// Mass `π̂(b, 0)` of detecting state `b` in the current slot.
    pub detected: [f64; 2],
}

impl AdaptiveSteadyState {
    /// Stationary mass of belief `(b, τ)` for `τ ≥ 1`; at `τ = 0` the probability of
    /// detecting `b` in a slot.
    pub fn mass(&self, belief: DelayBelief) -> f64 {
        let b = usize::from(belief.last_state);
        if belief.age == 0 {
            self.detected[b]
        } else {
            self.detected[b] * (1.0 - self.detect_prob[b]).powi(belief.age as i32 - 1)
        }
    }

    pub fn solve(pol: &SingleBandPolicy, p: &ModelParams) -> Option<Self> {
        let ps = [pol.psi0 * (-pol.psi0).exp(), pol.psi1 * (-pol.psi1).exp()];
        if ps[0] <= 0.0 || ps[1] <= 0.0 {
            return None;
        }
        let chain = idle_chain(p);
        // f(b): probability that the next detection after last detecting 1−b reads b.
        let f = [
            first_detection_series(&chain, ps[1], 1, 0),
            first_detection_series(&chain, ps[0], 0, 1),
        ];
        // f(b) is rate-balanced against the dwell time 1/p_S(b) in belief b.
        let z = f[0] / ps[0] + f[1] / ps[1];
        Some(Self {
            detect_prob: ps,
            detected: [f[0] / z, f[1] / z],
        })
    }
}

/// Long-run metrics of an adaptive policy; degenerate policies that never detect
/// both states yield all-zero cost and throughput.
pub fn adaptive_metrics(pol: &SingleBandPolicy, p: &ModelParams) -> Result<SingleBandMetrics> {
    let pol = SingleBandPolicy::new(pol.psi0, pol.psi1, pol.r)?;
    let pu_throughput = (1.0 - p.rho_p) * (1.0 - steady_state_idle_prob(p));
    let Some(ss) = AdaptiveSteadyState::solve(&pol, p) else {
        return Ok(SingleBandMetrics {
            cost: 0.0,
            sensing_cost: 0.0,
            su_throughput: 0.0,
            pu_throughput,
        });
    };
    Ok(adaptive_from_steady(&ss, &pol, p, pu_throughput))
}

fn adaptive_from_steady(
    ss: &AdaptiveSteadyState,
    pol: &SingleBandPolicy,
    p: &ModelParams,
    pu_throughput: f64,
) -> SingleBandMetrics {
    let sensing_cost = p.c_s * (ss.detected[0] * pol.psi0.exp() + ss.detected[1] * pol.psi1.exp());
    SingleBandMetrics {
        cost: sensing_cost + ss.detected[0] * pol.r * p.c_tx,
        sensing_cost,
        su_throughput: (1.0 - p.rho_s) * ss.detected[0] * pol.r * (-pol.r).exp(),
        pu_throughput,
    }
}

/// Outcome of [`adaptive_optimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveOptimum {
    pub policy: SingleBandPolicy,
    pub metrics: SingleBandMetrics,
}

const COARSE_STEP: f64 = 0.02;
const FINE_STEP: f64 = 0.002;

/// Grid search over `(ψ(0), ψ(1), r)` maximising SU throughput under `C̄ ≤ c_max`:
/// a 0.02 grid plus the non-adaptive optimum, then one 0.002 pass within one coarse step
/// of the incumbent.
pub fn adaptive_optimize(c_max: f64, p: &ModelParams) -> Result<AdaptiveOptimum> {
    check_budget(c_max)?;
    let pu_throughput = (1.0 - p.rho_p) * (1.0 - steady_state_idle_prob(p));
    let coarse: Vec<f64> = (0..=50).map(|k| k as f64 * COARSE_STEP).collect();

    let mut best = Incumbent::new(pu_throughput);
    best.scan(&coarse, &coarse, &coarse, c_max, p);
    // Equal sensing rates reproduce the non-adaptive scheme, whose optimum can sit between
    // coarse points at small budgets; a slightly shrunk r is the fallback when round-off
    // puts the exact one just past C̄ = c_max.
    let na = nonadaptive_optimize(c_max, p)?;
    best.scan(&[na.psi], &[na.psi], &[na.r], c_max, p);
    if best.policy != (SingleBandPolicy { psi0: na.psi, psi1: na.psi, r: na.r }) {
        best.scan(&[na.psi], &[na.psi], &[na.r * (1.0 - 1e-9)], c_max, p);
    }

    let local = |centre: f64| -> Vec<f64> {
        (-10..=10)
            .map(|k| centre + k as f64 * FINE_STEP)
            .filter(|v| (-1e-12..=1.0 + 1e-12).contains(v))
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    };
    let centre = best.policy;
    best.scan(
        &local(centre.psi0),
        &local(centre.psi1),
        &local(centre.r),
        c_max,
        p,
    );

    Ok(AdaptiveOptimum {
        policy: best.policy,
        metrics: best.metrics,
    })
}

struct Incumbent {
    policy: SingleBandPolicy,
    metrics: SingleBandMetrics,
}

impl Incumbent {
    fn new(pu_throughput: f64) -> Self {
        Self {
            policy: SingleBandPolicy {
                psi0: 0.0,
                psi1: 0.0,
                r: 0.0,
            },
            metrics: SingleBandMetrics {
                cost: 0.0,
                sensing_cost: 0.0,
                su_throughput: 0.0,
                pu_throughput,
            },
        }
    }

    fn better(&self, t: f64, pol: &SingleBandPolicy) -> bool {
        let cur = &self.policy;
        let key = |q: &SingleBandPolicy| (q.psi0 + q.psi1, q.r);
        t > self.metrics.su_throughput
            || (t == self.metrics.su_throughput && t > 0.0 && key(pol) < key(cur))
    }

    fn scan(&mut self, psi0s: &[f64], psi1s: &[f64], rs: &[f64], c_max: f64, p: &ModelParams) {
        let pu = self.metrics.pu_throughput;
        for &psi0 in psi0s {
            for &psi1 in psi1s {
                let probe = SingleBandPolicy { psi0, psi1, r: 0.0 };
                let Some(ss) = AdaptiveSteadyState::solve(&probe, p) else {
                    continue;
                };
                for &r in rs {
                    let pol = SingleBandPolicy { psi0, psi1, r };
                    let m = adaptive_from_steady(&ss, &pol, p, pu);
                    if m.cost <= c_max && self.better(m.su_throughput, &pol) {
                        self.policy = pol;
                        self.metrics = m;
                    }
                }
            }
        }
    }
}
