//! Kernels, planner and simulator end to end on a small spectrum.

use crsense::kernels::{KernelCache, KernelSpec};
use crsense::params::ModelParams;
use crsense::planner::{solve, FixedPolicy, PolicyTables, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crsense::sim::{self, SimConfig};

fn small() -> (ModelParams, KernelCache) {
    let p = ModelParams::reference().with_bands(4);
    let spec = KernelSpec {
        level_step: 0.1,
        n_mc: 150,
        seed: 3,
        psi_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
        n_lambda: 11,
    };
    let k = KernelCache::build(&p, &spec).unwrap();
    (p, k)
}

#[test]
fn solved_policy_beats_fixed_heuristics() {
    let (p, k) = small();
    let policy = solve(&k, &p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
    assert!(policy.converged);
    let cfg = SimConfig {
        slots: 20_000,
        ..SimConfig::default()
    };
    let solved = sim::run(&policy, &k, &p, &cfg, None).unwrap();
    for (psi, frac) in [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let fixed = FixedPolicy {
            psi,
            budget_fraction: frac,
        };
        let r = sim::run(&fixed, &k, &p, &cfg, None).unwrap();
        assert!(
            solved.lagrangian > r.lagrangian,
            "solved {} vs fixed ({psi}, {frac}) {}",
            solved.lagrangian,
            r.lagrangian
        );
    }
}

#[test]
fn kernel_and_policy_files_round_trip() {
    let (p, k) = small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(KernelCache::file_name(&k.digest));
    k.write(&path).unwrap();
    let back = KernelCache::read(&path, &p, &k.spec).unwrap();
    assert_eq!(back.digest, k.digest);
    assert_eq!(back.tables, k.tables);
    assert_eq!(back.posterior, k.posterior);
    assert_eq!(back.sensing, k.sensing);
    assert_eq!(back.scheduling, k.scheduling);

    let policy = solve(&back, &p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
    let json = dir.path().join("p.json");
    policy.write_json(&json).unwrap();
    assert_eq!(PolicyTables::read_json(&json).unwrap(), policy);
    assert_eq!(policy, solve(&k, &p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap());
}

#[test]
fn costlier_resources_buy_less_of_them() {
    let (p, k) = small();
    let cfg = SimConfig {
        slots: 10_000,
        ..SimConfig::default()
    };
    let cost = |lambda: f64| {
        let q = p.with_tradeoff(p.xi, lambda);
        let pol = solve(&k, &q, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        sim::run(&pol, &k, &q, &cfg, None).unwrap().c_total
    };
    let (cheap, dear) = (cost(0.0), cost(0.3));
    assert!(dear < cheap, "C at λ=0.3 {dear} vs λ=0 {cheap}");
}
