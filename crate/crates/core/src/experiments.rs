//! The four experiment drivers behind the command-line tool.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::kernels::KernelCache;
use crate::params::ModelParams;
use crate::planner::{solve, PolicyTables};
use crate::sim::{self, MetricsReport, SlotTrace, TraceWriter, REPORT_COLUMNS};
use crate::single_band::{adaptive_optimize, nonadaptive_optimize};

/// Optimised single-band schemes over the configured budgets.
pub fn cmd_single_band<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<()> {
    let p = cfg.params();
    let rows: Vec<_> = cfg
        .c_max
        .par_iter()
        .map(|&c| -> Result<_> { Ok((c, nonadaptive_optimize(c, &p)?, adaptive_optimize(c, &p)?)) })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "c_max",
        "scheme",
        "psi0",
        "psi1",
        "r",
        "cost",
        "sensing_fraction",
        "su_throughput",
        "pu_throughput",
    ])?;
    let f = |v: f64| format!("{v:.9}");
    for (c, na, ad) in rows {
        let schemes = [
            ("nonadaptive", na.psi, na.psi, na.r, na.metrics),
            ("adaptive", ad.policy.psi0, ad.policy.psi1, ad.policy.r, ad.metrics),
        ];
        for (name, psi0, psi1, r, m) in schemes {
            w.write_record([
                f(c),
                name.into(),
                f(psi0),
                f(psi1),
                f(r),
                f(m.cost),
                f(m.sensing_fraction()),
                f(m.su_throughput),
                f(m.pu_throughput),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads or builds the kernel cache named by `cfg.kernels` for trade-off weight `xi`
/// (the kernels depend on ξ through the allocation, not on λ).
/// A previously loaded cache for another ξ lends its detection tables to a build.
pub fn load_kernels(cfg: &ExperimentConfig, xi: f64, base: Option<&KernelCache>) -> Result<KernelCache> {
    let p = cfg.params().with_tradeoff(xi, cfg.lambda);
    let (cache, path, built) = KernelCache::load_or_build_reusing(&cfg.kernels, &p, &cfg.kernel_spec(), base)?;
    log::info!("{} kernels {}", if built { "built" } else { "loaded" }, path.display());
    Ok(cache)
}

/// Policy file for one sweep point; a single point uses `cfg.policy` unchanged.
pub fn policy_path(cfg: &ExperimentConfig, lambda: f64, xi: f64) -> PathBuf {
    if cfg.sweep_points().len() == 1 {
        return cfg.policy.clone();
    }
    let stem = cfg.policy.file_stem().and_then(|s| s.to_str()).unwrap_or("policy");
    let name = format!("{stem}-lambda{lambda}-xi{xi}.json");
    cfg.policy.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Solves one policy per sweep point and writes each to its policy file.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let base = cfg.params();
    let points = cfg.sweep_points();
    let mut solved: Vec<((f64, f64), PolicyTables)> = Vec::with_capacity(points.len());
    let mut last: Option<KernelCache> = None;
    for group in by_xi(&points) {
        let kernels = load_kernels(cfg, group[0].1, last.as_ref())?;
        let policies: Vec<PolicyTables> = group
            .par_iter()
            .map(|&(l, x)| solve(&kernels, &base.with_tradeoff(x, l), cfg.tol, cfg.max_sweeps))
            .collect::<Result<_>>()?;
        solved.extend(group.into_iter().zip(policies));
        last = Some(kernels);
    }
    solved.sort_by_key(|(pt, _)| points.iter().position(|q| q == pt));
    let mut paths = Vec::with_capacity(points.len());
    for ((l, x), pol) in &solved {
        let (l, x) = (*l, *x);
        let path = policy_path(cfg, l, x);
        ensure_parent(&path)?;
        pol.write_json(&path)?;
        log::info!(
            "λ={l} ξ={x}: gain {:.6}, {} sweeps{}",
            pol.gain,
            pol.sweeps,
            if pol.converged { "" } else { " (not converged)" }
        );
        paths.push(path);
    }
    Ok(paths)
}

const SIM_PREFIX: [&str; 3] = ["lambda", "xi", "seed"];

/// Sweep points grouped by ξ (one kernel cache each), keeping grid order inside a group.
fn by_xi(points: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for &pt in points {
        match groups.iter_mut().find(|g| g[0].1 == pt.1) {
            Some(g) => g.push(pt),
            None => groups.push(vec![pt]),
        }
    }
    groups
}

/// Simulates the policy at `cfg.policy` and appends one report row to `cfg.out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, trace: Option<&Path>) -> Result<MetricsReport> {
    let policy = PolicyTables::read_json(&cfg.policy)?;
    let kernels = load_kernels(cfg, policy.params.xi, None)?;
    if policy.kernel_digest != kernels.digest {
        log::warn!("policy was solved on kernels {}, simulating with {}", policy.kernel_digest, kernels.digest);
    }
    let p = policy.params;
    let report = match trace {
        Some(path) => {
            ensure_parent(path)?;
            let mut w = TraceWriter::new(File::create(path)?);
            let mut sink = |t: &SlotTrace| w.write(t);
            let r = sim::run(&policy, &kernels, &p, &cfg.sim_config(), Some(&mut sink))?;
            w.flush()?;
            r
        }
        None => sim::run(&policy, &kernels, &p, &cfg.sim_config(), None)?,
    };
    append_report(&cfg.out, &p, cfg.seed, &report)?;
    Ok(report)
}

fn append_report(path: &Path, p: &ModelParams, seed: u64, report: &MetricsReport) -> Result<()> {
    ensure_parent(path)?;
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        let mut header: Vec<&str> = SIM_PREFIX.to_vec();
        header.extend(REPORT_COLUMNS);
        header.push("sensing_fraction");
        w.write_record(header)?;
    }
    let mut row = vec![p.lambda.to_string(), p.xi.to_string(), seed.to_string()];
    row.extend(report.csv_record());
    row.push(format!("{:.9}", report.sensing_fraction()));
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}

/// One row of the trade-off sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub xi: f64,
    pub gain: f64,
    pub converged: bool,
    pub report: MetricsReport,
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "lambda",
    "xi",
    "t_su",
    "t_pu",
    "c_total",
    "c_sensing",
    "c_sched",
    "sensing_fraction",
    "lagrangian",
    "mean_psi",
    "gain",
    "converged",
];

/// Trains and simulates every `(λ, ξ)` point; rows come back in grid order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let base = cfg.params();
    let points = cfg.sweep_points();
    let mut rows = Vec::with_capacity(points.len());
    let mut last: Option<KernelCache> = None;
    for group in by_xi(&points) {
        let kernels = load_kernels(cfg, group[0].1, last.as_ref())?;
        let solved: Vec<SweepRow> = group
            .par_iter()
            .map(|&(lambda, xi)| {
                let p = base.with_tradeoff(xi, lambda);
                let policy = solve(&kernels, &p, cfg.tol, cfg.max_sweeps)?;
                let report = sim::run(&policy, &kernels, &p, &cfg.sim_config(), None)?;
                Ok(SweepRow {
                    lambda,
                    xi,
                    gain: policy.gain,
                    converged: policy.converged,
                    report,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(solved);
        last = Some(kernels);
    }
    // Back to λ-major grid order.
    rows.sort_by_key(|r| points.iter().position(|&pt| pt == (r.lambda, r.xi)));
    Ok(rows)
}

/// Sweep over the configured `(λ, ξ)` grid, written as one CSV.
pub fn cmd_sweep<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<Vec<SweepRow>> {
    let rows = run_sweep(cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in &rows {
        let f = |v: f64| format!("{v:.9}");
        let m = &r.report;
        w.write_record([
            r.lambda.to_string(),
            r.xi.to_string(),
            f(m.t_su),
            f(m.t_pu),
            f(m.c_total),
            f(m.c_sensing),
            f(m.c_sched),
            f(m.sensing_fraction()),
            f(m.lagrangian),
            f(m.mean_psi),
            f(r.gain),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}
