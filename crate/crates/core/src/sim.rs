//! Slot-by-slot closed loop: sense, estimate, schedule, collect feedback, advance the spectrum.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::compression::{expand, project, CompressedBeliefState, ExpectedOccupancy, LevelMap};
use crate::dynamics::{busy_next_given_feedback, pu_success, steady_state_idle_prob, su_success, FeedbackSymbol, OccupancyVector};
use crate::error::{Error, Result};
use crate::kernels::{next_band_prior, KernelCache};
use crate::measurement::{draw_measurement_count, generate_batch};
use crate::params::ModelParams;
use crate::planner::{FixedPolicy, Policy};
use crate::recovery::map_estimate_detailed;
use crate::scheduler::{allocate, lambda_max};
use crate::streams::{stream, Domain};
use crate::stats::spearman;

/// Horizon, burn-in and randomness of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub slots: usize,
    /// Leading fraction of slots left out of every average.
    pub burn_in: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slots: 20_000,
            burn_in: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    fn burn_in_slots(&self) -> usize {
        (self.slots as f64 * self.burn_in).floor() as usize
    }
}

/// Everything the controller saw and did in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub slot: usize,
    pub occupancy: OccupancyVector,
    pub prior: CompressedBeliefState,
    pub psi: f64,
    pub measurements: usize,
    pub estimate: OccupancyVector,
    pub posterior: CompressedBeliefState,
    pub budget: f64,
    pub traffic: Vec<f64>,
    pub feedback: Vec<FeedbackSymbol>,
    pub su_throughput: f64,
    pub pu_throughput: f64,
    pub sensing_cost: f64,
    pub sched_cost: f64,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    slot: usize,
    occupancy: String,
    prior_low: f64,
    prior_high: f64,
    prior_nu: usize,
    psi: f64,
    m: usize,
    estimate: String,
    post_low: f64,
    post_high: f64,
    post_nu: usize,
    budget: f64,
    traffic: &'a str,
    feedback: String,
    su_throughput: f64,
    pu_throughput: f64,
    sensing_cost: f64,
    sched_cost: f64,
}

fn bits(v: &OccupancyVector) -> String {
    v.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Per-slot CSV sink for [`SlotTrace`]s.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
        }
    }

    pub fn write(&mut self, t: &SlotTrace) -> Result<()> {
        let traffic: Vec<String> = t.traffic.iter().map(|r| format!("{r:.6}")).collect();
        let traffic = traffic.join(";");
        self.inner.serialize(TraceRow {
            slot: t.slot,
            occupancy: bits(&t.occupancy),
            prior_low: t.prior.beta_low,
            prior_high: t.prior.beta_high,
            prior_nu: t.prior.nu,
            psi: t.psi,
            m: t.measurements,
            estimate: bits(&t.estimate),
            post_low: t.posterior.beta_low,
            post_high: t.posterior.beta_high,
            post_nu: t.posterior.nu,
            budget: t.budget,
            traffic: &traffic,
            feedback: t.feedback.iter().map(|s| s.as_char()).collect(),
            su_throughput: t.su_throughput,
            pu_throughput: t.pu_throughput,
            sensing_cost: t.sensing_cost,
            sched_cost: t.sched_cost,
        })?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Per-slot diagnostics kept after burn-in.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// `(Σ_i H₂(β_i), ψ)` of each prior.
    pub entropy_psi: Vec<(f64, f64)>,
    /// `(Σ_i β̂_i, Λ)` of each posterior.
    pub occupancy_budget: Vec<(f64, f64)>,
    /// Hill-climbing flips per estimate with `m ≥ 1`.
    pub flips: Vec<usize>,
    /// Feedback heard from bands whose posterior said idle with certainty (whole run).
    pub contradictions: usize,
}

impl Diagnostics {
    /// Spearman correlation of prior entropy with the applied ψ.
    pub fn entropy_psi_spearman(&self) -> f64 {
        pair_spearman(&self.entropy_psi)
    }

    /// Spearman correlation of posterior occupancy with the allocated Λ.
    pub fn occupancy_budget_spearman(&self) -> f64 {
        pair_spearman(&self.occupancy_budget)
    }
}

fn pair_spearman(pairs: &[(f64, f64)]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    spearman(&x, &y)
}

/// Long-run averages per slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub slots: usize,
    pub c_sensing: f64,
    pub c_sched: f64,
    pub c_total: f64,
    pub t_su: f64,
    pub t_pu: f64,
    pub lagrangian: f64,
    pub mean_psi: f64,
    pub mean_m: f64,
    pub mean_budget: f64,
    #[serde(skip)]
    pub diagnostics: Diagnostics,
}

/// Column order of [`MetricsReport::csv_record`].
pub const REPORT_COLUMNS: [&str; 10] = [
    "slots",
    "c_sensing",
    "c_sched",
    "c_total",
    "t_su",
    "t_pu",
    "lagrangian",
    "mean_psi",
    "mean_m",
    "mean_budget",
];

impl MetricsReport {
    pub fn csv_record(&self) -> Vec<String> {
        let mut row = vec![self.slots.to_string()];
        row.extend(
            [
                self.c_sensing,
                self.c_sched,
                self.c_total,
                self.t_su,
                self.t_pu,
                self.lagrangian,
                self.mean_psi,
                self.mean_m,
                self.mean_budget,
            ]
            .iter()
            .map(|v| format!("{v:.9}")),
        );
        row
    }

    pub fn sensing_fraction(&self) -> f64 {
        if self.c_total > 0.0 {
            self.c_sensing / self.c_total
        } else {
            0.0
        }
    }

    /// Slot-weighted average of several reports; diagnostics are concatenated in order.
    pub fn merge(reports: &[MetricsReport], p: &ModelParams) -> Option<MetricsReport> {
        let n: usize = reports.iter().map(|r| r.slots).sum();
        if n == 0 {
            return None;
        }
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r) * r.slots as f64).sum::<f64>() / n as f64;
        let mut diagnostics = Diagnostics::default();
        for r in reports {
            diagnostics.entropy_psi.extend(&r.diagnostics.entropy_psi);
            diagnostics.occupancy_budget.extend(&r.diagnostics.occupancy_budget);
            diagnostics.flips.extend(&r.diagnostics.flips);
            diagnostics.contradictions += r.diagnostics.contradictions;
        }
        let (cs, cx) = (avg(|r| r.c_sensing), avg(|r| r.c_sched));
        let (ts, tp) = (avg(|r| r.t_su), avg(|r| r.t_pu));
        Some(MetricsReport {
            slots: n,
            c_sensing: cs,
            c_sched: cx,
            c_total: cs + cx,
            t_su: ts,
            t_pu: tp,
            lagrangian: p.xi * ts + (1.0 - p.xi) * tp - p.lambda * (cs + cx),
            mean_psi: avg(|r| r.mean_psi),
            mean_m: avg(|r| r.mean_m),
            mean_budget: avg(|r| r.mean_budget),
            diagnostics,
        })
    }
}

/// Starting belief: the projection of the stationary occupancy on every band.
pub fn initial_prior(p: &ModelParams) -> Result<(CompressedBeliefState, LevelMap)> {
    let busy = 1.0 - steady_state_idle_prob(p);
    project(&ExpectedOccupancy(vec![busy; p.f_bands]))
}

#[derive(Default)]
struct Totals {
    su: f64,
    pu: f64,
    sensing: f64,
    sched: f64,
    psi: f64,
    m: f64,
    budget: f64,
}

/// Runs the loop under `policy`; rewards are expectations given the true state.
pub fn run<P: Policy + ?Sized>(
    policy: &P,
    kernels: &KernelCache,
    p: &ModelParams,
    config: &SimConfig,
    mut trace: Option<&mut dyn FnMut(&SlotTrace) -> Result<()>>,
) -> Result<MetricsReport> {
    p.validate()?;
    if config.slots == 0 {
        return Err(Error::InvalidParameter {
            name: "slots",
            value: 0.0,
            reason: "at least one slot required",
        });
    }
    if !(0.0..1.0).contains(&config.burn_in) {
        return Err(Error::InvalidParameter {
            name: "burn_in",
            value: config.burn_in,
            reason: "burn-in fraction must lie in [0, 1)",
        });
    }
    if p.kernel_key() != kernels.params.kernel_key() {
        return Err(Error::Config("kernels were built for different model parameters".into()));
    }
    let f = p.f_bands;
    let grid = &kernels.grid;
    let tables = &kernels.tables;
    let mut rng = stream(config.seed, Domain::Simulation, 0);

    let busy0 = 1.0 - steady_state_idle_prob(p);
    let mut b = OccupancyVector((0..f).map(|_| rng.random::<f64>() < busy0).collect());
    let (mut prior, mut map) = initial_prior(p)?;
    let burn = config.burn_in_slots();
    let mut totals = Totals::default();
    let mut diagnostics = Diagnostics::default();
    let mut contradictions = 0usize;

    for slot in 0..config.slots {
        let beta = expand(&prior, &map)?;
        let psi = policy.psi(&prior).clamp(0.0, 1.0);
        let m = draw_measurement_count(psi, p, &mut rng)?;
        let batch = generate_batch(&b, m, p, &mut rng);
        let est = map_estimate_detailed(&beta, &batch, p)?;

        let (posterior, beta_hat) = if m == 0 {
            (prior, beta.clone())
        } else {
            let cell = grid.cell_of(&prior);
            let nu_hat = f - est.estimate.occupied();
            let low = tables.md(cell, m, nu_hat);
            let high = 1.0 - tables.fa(cell, m, nu_hat);
            let bh = ExpectedOccupancy(est.estimate.0.iter().map(|&busy| if busy { high } else { low }).collect());
            let (cbs, lm) = project(&bh)?;
            (cbs, expand(&cbs, &lm)?)
        };

        let lmax = lambda_max(&beta_hat, p);
        let budget = policy.budget(&posterior, lmax).clamp(0.0, lmax);
        let alloc = allocate(&beta_hat, budget, p)?;
        let r = &alloc.traffic.0;

        let mut su = 0.0;
        let mut pu = 0.0;
        let mut feedback = Vec::with_capacity(f);
        let mut next = Vec::with_capacity(f);
        for i in 0..f {
            su += su_success(b.0[i], r[i], p);
            pu += pu_success(b.0[i], r[i], p);
            let (sym, busy_next) = if b.0[i] {
                let delivered = rng.random::<f64>() < pu_success(true, r[i], p);
                let erased = rng.random::<f64>() < p.epsilon;
                let busy_next = if delivered {
                    rng.random::<f64>() < p.theta + (1.0 - p.theta) * p.zeta
                } else {
                    true
                };
                let sym = match (erased, delivered) {
                    (true, _) => FeedbackSymbol::Empty,
                    (false, true) => FeedbackSymbol::Ack,
                    (false, false) => FeedbackSymbol::Nack,
                };
                (sym, busy_next)
            } else {
                (FeedbackSymbol::Empty, rng.random::<f64>() < p.zeta)
            };
            feedback.push(sym);
            next.push(busy_next);
        }
        let sensing_cost = psi * p.b_channels as f64 * p.c_s;
        let sched_cost = p.c_tx * alloc.traffic.total();

        if slot >= burn {
            totals.su += su;
            totals.pu += pu;
            totals.sensing += sensing_cost;
            totals.sched += sched_cost;
            totals.psi += psi;
            totals.m += m as f64;
            totals.budget += budget;
            diagnostics.entropy_psi.push((beta.entropy(), psi));
            diagnostics.occupancy_budget.push((beta_hat.total(), budget));
            if m > 0 {
                diagnostics.flips.push(est.flips);
            }
        }
        if let Some(sink) = trace.as_mut() {
            sink(&SlotTrace {
                slot,
                occupancy: b.clone(),
                prior,
                psi,
                measurements: m,
                estimate: est.estimate.clone(),
                posterior,
                budget,
                traffic: r.clone(),
                feedback: feedback.clone(),
                su_throughput: su,
                pu_throughput: pu,
                sensing_cost,
                sched_cost,
            })?;
        }

        // A zero posterior can meet ACK/NACK from a band the tables called idle; the
        // feedback then settles the state.
        let next_beta: Vec<f64> = (0..f)
            .map(|i| {
                next_band_prior(beta_hat.0[i], r[i], feedback[i], p).unwrap_or_else(|| {
                    contradictions += 1;
                    busy_next_given_feedback(true, r[i], feedback[i], p)
                })
            })
            .collect();
        (prior, map) = project(&ExpectedOccupancy(next_beta))?;
        b = OccupancyVector(next);
    }

    if contradictions > 0 {
        log::debug!("{contradictions} band updates contradicted a zero posterior");
    }
    diagnostics.contradictions = contradictions;
    let n = (config.slots - burn) as f64;
    let (cs, cx) = (totals.sensing / n, totals.sched / n);
    let (ts, tp) = (totals.su / n, totals.pu / n);
    Ok(MetricsReport {
        slots: config.slots - burn,
        c_sensing: cs,
        c_sched: cx,
        c_total: cs + cx,
        t_su: ts,
        t_pu: tp,
        lagrangian: p.xi * ts + (1.0 - p.xi) * tp - p.lambda * (cs + cx),
        mean_psi: totals.psi / n,
        mean_m: totals.m / n,
        mean_budget: totals.budget / n,
        diagnostics,
    })
}

/// Constant sensing traffic and a constant fraction of `Λ_max`.
pub fn run_fixed(
    psi: f64,
    budget_fraction: f64,
    kernels: &KernelCache,
    p: &ModelParams,
    config: &SimConfig,
) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&budget_fraction) {
        return Err(Error::InvalidParameter {
            name: "budget_fraction",
            value: budget_fraction,
            reason: "fraction of the largest useful budget must lie in [0, 1]",
        });
    }
    run(&FixedPolicy { psi, budget_fraction }, kernels, p, config, None)
}

/// Independent trajectories with seeds `seed, seed+1, …`, merged slot-weighted.
pub fn run_replicated<P: Policy + Sync + ?Sized>(
    policy: &P,
    kernels: &KernelCache,
    p: &ModelParams,
    config: &SimConfig,
    replicas: usize,
) -> Result<MetricsReport> {
    let reports: Vec<MetricsReport> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = SimConfig {
                seed: config.seed.wrapping_add(k),
                ..*config
            };
            run(policy, kernels, p, &cfg, None)
        })
        .collect::<Result<_>>()?;
    MetricsReport::merge(&reports, p).ok_or(Error::InvalidParameter {
        name: "replicas",
        value: 0.0,
        reason: "at least one replica required",
    })
}
