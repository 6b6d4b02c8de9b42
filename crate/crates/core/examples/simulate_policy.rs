//! Closed-loop simulation of a solved policy against fixed heuristics that sense and
//! schedule the same way in every slot; writes a per-slot trace of the solved policy.
//!
//! `cargo run --example simulate_policy -- [f_bands] [slots]`

use std::fs::File;

use crsense::kernels::{KernelCache, KernelSpec};
use crsense::params::ModelParams;
use crsense::planner::{solve, FixedPolicy, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crsense::sim::{self, MetricsReport, SimConfig, SlotTrace, TraceWriter};

fn show(name: &str, r: &MetricsReport) {
    println!(
        "{name:<22} T_S {:.4}  T_P {:.4}  C {:.4}  sensing share {:.3}  L {:.4}",
        r.t_su,
        r.t_pu,
        r.c_total,
        r.sensing_fraction(),
        r.lagrangian
    );
}

fn main() -> crsense::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let f: usize = args.first().map_or(8, |s| s.parse().expect("f_bands"));
    let slots: usize = args.get(1).map_or(20_000, |s| s.parse().expect("slots"));
    let p = ModelParams::reference().with_bands(f);
    let spec = KernelSpec {
        level_step: 0.1,
        n_mc: 300,
        ..KernelSpec::default()
    };
    let kernels = KernelCache::build(&p, &spec)?;
    let policy = solve(&kernels, &p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?;
    let cfg = SimConfig {
        slots,
        ..SimConfig::default()
    };

    let trace_path = std::env::temp_dir().join("crsense-trace.csv");
    let mut w = TraceWriter::new(File::create(&trace_path)?);
    let mut sink = |t: &SlotTrace| w.write(t);
    let solved = sim::run(&policy, &kernels, &p, &cfg, Some(&mut sink))?;
    w.flush()?;
    println!("F={f}, lambda={}, xi={}, {slots} slots (planner gain {:.4})", p.lambda, p.xi, policy.gain);
    show("solved policy", &solved);
    println!(
        "  entropy-psi rank corr {:.3}, occupancy-budget rank corr {:.3}",
        solved.diagnostics.entropy_psi_spearman(),
        solved.diagnostics.occupancy_budget_spearman()
    );
    for (psi, frac) in [(0.0, 0.0), (0.0, 1.0), (0.5, 0.5), (1.0, 0.5), (1.0, 1.0)] {
        let fixed = FixedPolicy {
            psi,
            budget_fraction: frac,
        };
        let r = sim::run(&fixed, &kernels, &p, &cfg, None)?;
        show(&format!("fixed psi={psi} frac={frac}"), &r);
    }
    println!("trace written to {}", trace_path.display());
    Ok(())
}
