//! Acceptance criteria 1-10, one PASS/FAIL line each. Runs as a plain binary
//! (`harness = false`) and exits non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crsense::compression::{project, ExpectedOccupancy};
use crsense::config::ExperimentConfig;
use crsense::dynamics::{band_transition_prob, pu_success_prob, steady_state_idle_prob, su_success_prob, OccupancyVector, TrafficVector};
use crsense::experiments::{load_kernels, run_sweep, SweepRow};
use crsense::measurement::{draw_measurement_count, exact_posterior, generate_batch, DenseBelief};
use crsense::params::ModelParams;
use crsense::recovery::{
    map_estimate, map_exhaustive, map_objective, relaxed_solve, residual_transform, CorrectionVector, RELAX_MAX_ITER,
    RELAX_TOL,
};
use crsense::scheduler::{allocate, lambda_max, myopic_objective, r_max, zero_traffic_threshold};
use crsense::single_band::{adaptive_optimize, nonadaptive_optimize};
use crsense::stats::{binomial_pmf, spearman};

type Outcome = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn xor(a: &OccupancyVector, b: &OccupancyVector) -> CorrectionVector {
    CorrectionVector(a.0.iter().zip(&b.0).map(|(x, y)| x ^ y).collect())
}

fn c1_steady_state() -> Outcome {
    let p = ModelParams::reference();
    let pi0 = steady_state_idle_prob(&p);
    let mut g = rng(1);
    let mut busy = g.random::<f64>() >= pi0;
    let slots = 1_000_000;
    let mut idle = 0usize;
    for _ in 0..slots {
        busy = g.random::<f64>() < band_transition_prob(true, busy, 0.0, &p).unwrap();
        idle += usize::from(!busy);
    }
    let sim = idle as f64 / slots as f64;
    let ok = (pi0 - 0.30005).abs() < 1e-5 && (sim - pi0).abs() <= 0.005;
    (ok, format!("closed form {pi0:.6}, {slots}-slot simulation {sim:.5}"))
}

fn c2_footnote() -> Outcome {
    let p = ModelParams {
        rho_p: 0.0,
        rho_s: 0.0,
        ..ModelParams::reference()
    };
    let pu = pu_success_prob(true, 1.0, &p).unwrap();
    let su = su_success_prob(false, 1.0, &p).unwrap();
    let e = (-1.0f64).exp();
    ((pu - e).abs() <= 1e-4 && (su - e).abs() <= 1e-4, format!("pu {pu:.6}, su {su:.6}"))
}

fn c3_single_band() -> Outcome {
    let p = ModelParams::reference();
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [0.02, 0.05, 0.1, 0.2, 0.3] {
        let na = nonadaptive_optimize(c, &p).unwrap();
        let ad = adaptive_optimize(c, &p).unwrap();
        let ratio = ad.metrics.su_throughput / na.metrics.su_throughput;
        let (fa, fn_) = (ad.metrics.sensing_fraction(), na.metrics.sensing_fraction());
        ok &= ratio >= 1.5 && fa >= 0.6 && fn_ >= 0.6;
        parts.push(format!("c={c}: ratio {ratio:.3}, sensing {fn_:.2}/{fa:.2}"));
    }
    (ok, parts.join("; "))
}

fn c4_scheduler() -> Outcome {
    let mut g = rng(4);
    let mut fails: Vec<String> = Vec::new();
    let mut count = 0;
    for f in [2usize, 5, 20] {
        for _ in 0..1000 {
            count += 1;
            let p = ModelParams::reference().with_bands(f).with_tradeoff(g.random_range(0.05..0.95), 0.0);
            let beta = ExpectedOccupancy::new((0..f).map(|_| g.random::<f64>()).collect()).unwrap();
            let caps = r_max(&beta, &p);
            let lmax = lambda_max(&beta, &p);
            // concavity along a chord inside the box
            let r1 = TrafficVector(caps.0.iter().map(|&c| c * g.random::<f64>()).collect());
            let r2 = TrafficVector(caps.0.iter().map(|&c| c * g.random::<f64>()).collect());
            let t: f64 = g.random();
            let mid = TrafficVector(r1.0.iter().zip(&r2.0).map(|(a, b)| t * a + (1.0 - t) * b).collect());
            let chord = t * myopic_objective(&beta, &r1, &p).unwrap() + (1.0 - t) * myopic_objective(&beta, &r2, &p).unwrap();
            if myopic_objective(&beta, &mid, &p).unwrap() < chord - 1e-9 {
                fails.push(format!("concavity F={f}"));
            }
            let (b1, b2) = {
                let (x, y) = (g.random::<f64>() * lmax, g.random::<f64>() * lmax);
                (x.max(y), x.min(y))
            };
            let a1 = allocate(&beta, b1, &p).unwrap();
            let a2 = allocate(&beta, b2, &p).unwrap();
            let thr = zero_traffic_threshold(&p);
            let c = p.pu_weight();
            if (a1.traffic.total() - b1).abs() > 1e-8 {
                fails.push(format!("budget F={f}"));
            }
            for i in 0..f {
                let (bi, ri) = (beta.0[i], a1.traffic.0[i]);
                if bi >= thr && ri != 0.0 {
                    fails.push(format!("threshold F={f}"));
                }
                if ri + 1e-7 < a2.traffic.0[i] {
                    fails.push(format!("monotone F={f}"));
                }
                for j in 0..f {
                    if bi > beta.0[j] && ri > a1.traffic.0[j] + 1e-7 {
                        fails.push(format!("ordering F={f}"));
                    }
                }
                if ri > 1e-6 && ri < caps.0[i] - 1e-6 {
                    let stationarity = ((1.0 - bi) * (ri - 1.0) + c * bi) * (-ri).exp();
                    if (stationarity - a1.multiplier).abs() > 1e-7 {
                        fails.push(format!("kkt F={f}"));
                    }
                }
            }
        }
    }
    // grid oracle: every coordinate but one on a 0.005 grid (plus its cap), the last fills Λ
    let mut worst: f64 = 0.0;
    for f in [2usize, 3] {
        for _ in 0..60 {
            let p = ModelParams::reference().with_bands(f).with_tradeoff(g.random_range(0.3..0.9), 0.0);
            let beta = ExpectedOccupancy::new((0..f).map(|_| g.random::<f64>() * 0.6).collect()).unwrap();
            let caps = r_max(&beta, &p).0;
            let budget = g.random::<f64>() * lambda_max(&beta, &p);
            let a = allocate(&beta, budget, &p).unwrap();
            let axis = |cap: f64| -> Vec<f64> {
                let mut v: Vec<f64> = (0..).map(|k| k as f64 * 0.005).take_while(|&x| x < cap).collect();
                v.push(cap);
                v
            };
            let mut best = f64::NEG_INFINITY;
            for dep in 0..f {
                let free: Vec<usize> = (0..f).filter(|&i| i != dep).collect();
                let grids: Vec<Vec<f64>> = free.iter().map(|&i| axis(caps[i])).collect();
                let mut idx = vec![0usize; free.len()];
                loop {
                    let mut r = vec![0.0; f];
                    for (k, &i) in free.iter().enumerate() {
                        r[i] = grids[k][idx[k]];
                    }
                    let rest = budget - r.iter().sum::<f64>();
                    if rest >= 0.0 && rest <= caps[dep] {
                        r[dep] = rest;
                        best = best.max(myopic_objective(&beta, &TrafficVector(r), &p).unwrap());
                    }
                    let mut k = 0;
                    while k < idx.len() {
                        idx[k] += 1;
                        if idx[k] < grids[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                    if k == idx.len() {
                        break;
                    }
                }
            }
            let gap = best - a.objective;
            worst = worst.max(gap.abs());
            if gap > 1e-4 || gap < -1e-4 {
                fails.push(format!("grid oracle F={f} gap {gap:.2e}"));
            }
        }
    }
    fails.dedup();
    (
        fails.is_empty(),
        format!("{count} instances, grid-oracle max gap {worst:.2e}, failures {:?}", &fails[..fails.len().min(5)]),
    )
}

fn band_kld(b: f64, q: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(b, q) + term(1.0 - b, 1.0 - q)
}

fn c5_projection() -> Outcome {
    let mut g = rng(5);
    let levels: Vec<f64> = (0..=200).map(|k| k as f64 * 0.005).collect();
    let (mut ok, mut worst_gap, mut worst_mean) = (true, f64::NEG_INFINITY, 0.0f64);
    for n in 0..500 {
        let f = 2 + n % 5;
        let beta: Vec<f64> = (0..f).map(|_| g.random_range(0.001..0.999)).collect();
        let (cbs, map) = project(&ExpectedOccupancy::new(beta.clone()).unwrap()).unwrap();
        let kld: f64 = crsense::compression::kld_to_factorized(&DenseBelief::factorized(&beta).unwrap(), &cbs, &map).unwrap();
        let total = cbs.nu as f64 * cbs.beta_low + (f - cbs.nu) as f64 * cbs.beta_high;
        worst_mean = worst_mean.max((total - beta.iter().sum::<f64>()).abs());
        // exhaustive over band-to-level maps, grid over each level
        let mut grid_min = f64::INFINITY;
        for mask in 1u32..(1 << f) - 1 {
            let fit = |low: bool| -> f64 {
                levels
                    .iter()
                    .map(|&q| {
                        (0..f)
                            .filter(|&i| ((mask >> i) & 1 == 1) == low)
                            .map(|i| band_kld(beta[i], q))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            grid_min = grid_min.min(fit(true) + fit(false));
        }
        let gap = kld - grid_min;
        worst_gap = worst_gap.max(gap);
        ok &= gap <= 1e-6;
    }
    ok &= worst_mean <= 1e-12;
    (ok, format!("max KLD excess over grid {worst_gap:.2e}, max mean error {worst_mean:.1e}"))
}

fn c6_recovery() -> Outcome {
    let mut g = rng(6);
    let mut notes = Vec::new();
    let mut ok = true;

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let f = g.random_range(2..=20);
        let p = ModelParams::reference().with_bands(f);
        let beta = ExpectedOccupancy::new((0..f).map(|_| g.random_range(0.01..0.99)).collect()).unwrap();
        let truth = OccupancyVector(beta.0.iter().map(|&b| g.random::<f64>() < b).collect());
        let batch = generate_batch(&truth, g.random_range(1..=5), &p, &mut g);
        let prob = residual_transform(&beta, &batch, &p).unwrap();
        let e = CorrectionVector((0..f).map(|_| g.random::<bool>()).collect());
        let base = map_objective(&e, &prob);
        for (i, d) in prob.flip_gains(&e).into_iter().enumerate() {
            let mut flipped = e.clone();
            flipped.0[i] = !flipped.0[i];
            worst = worst.max((map_objective(&flipped, &prob) - base + d).abs());
        }
    }
    ok &= worst <= 1e-9;
    notes.push(format!("(a) bookkeeping error {worst:.1e}"));

    let mut worse = 0;
    for _ in 0..500 {
        let f = [5, 10, 20][g.random_range(0..3)];
        let p = ModelParams::reference().with_bands(f);
        let beta = ExpectedOccupancy::new((0..f).map(|_| g.random_range(0.02..0.98)).collect()).unwrap();
        let truth = OccupancyVector(beta.0.iter().map(|&b| g.random::<f64>() < b).collect());
        let batch = generate_batch(&truth, g.random_range(1..=5), &p, &mut g);
        let prob = residual_transform(&beta, &batch, &p).unwrap();
        let relaxed = relaxed_solve(&prob, RELAX_TOL, RELAX_MAX_ITER).unwrap();
        let rounded = map_objective(&CorrectionVector::round(&relaxed.x), &prob);
        let est = map_estimate(&beta, &batch, &p).unwrap();
        worse += usize::from(map_objective(&xor(&est, &prob.prior_mode), &prob) > rounded + 1e-12);
    }
    ok &= worse == 0;
    notes.push(format!("(b) {worse}/500 worse than rounding"));

    let mut mismatch = 0;
    for _ in 0..200 {
        let f = g.random_range(2..=8);
        let p = ModelParams::reference().with_bands(f);
        let beta: Vec<f64> = (0..f).map(|_| g.random_range(0.05..0.95)).collect();
        let truth = OccupancyVector(beta.iter().map(|&b| g.random::<f64>() < b).collect());
        let batch = generate_batch(&truth, g.random_range(0..=f), &p, &mut g);
        let post = exact_posterior(&DenseBelief::factorized(&beta).unwrap(), &batch, &p).unwrap();
        let exh = map_exhaustive(&ExpectedOccupancy::new(beta).unwrap(), &batch, &p).unwrap();
        mismatch += usize::from(exh != post.argmax());
    }
    ok &= mismatch == 0;
    notes.push(format!("(c) {mismatch}/200 oracle mismatches"));

    let p = ModelParams {
        sigma_z2: 1e-10,
        ..ModelParams::reference().with_bands(8)
    };
    let trials = 500;
    let mut hits = 0;
    for _ in 0..trials {
        let beta = ExpectedOccupancy::new((0..8).map(|_| g.random_range(0.05..0.95)).collect()).unwrap();
        let truth = OccupancyVector(beta.0.iter().map(|&b| g.random::<f64>() < b).collect());
        let batch = generate_batch(&truth, 8, &p, &mut g);
        hits += usize::from(map_estimate(&beta, &batch, &p).unwrap() == truth);
    }
    let rate = hits as f64 / trials as f64;
    ok &= rate >= 0.99;
    notes.push(format!("(d) noiseless recovery {rate:.3}"));
    (ok, notes.join(", "))
}

fn c7_measurement_law() -> Outcome {
    let p = ModelParams::reference();
    let mut g = rng(7);
    let n = 100_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for psi in [0.2, 0.5, 1.0] {
        let mut hist = vec![0f64; p.b_channels + 1];
        for _ in 0..n {
            hist[draw_measurement_count(psi, &p, &mut g).unwrap()] += 1.0;
        }
        // pool the upper tail until every expected count reaches 5
        let law = binomial_pmf(p.b_channels, psi * (-psi).exp());
        let (mut obs, mut exp) = (Vec::new(), Vec::new());
        let (mut o, mut e) = (0.0, 0.0);
        for (h, q) in hist.iter().zip(&law) {
            o += h;
            e += q * n as f64;
            if e >= 5.0 {
                obs.push(o);
                exp.push(e);
                (o, e) = (0.0, 0.0);
            }
        }
        if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
            *lo += o;
            *le += e;
        }
        let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
        let df = (obs.len() - 1) as f64;
        let pval = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
        ok &= pval > 0.001;
        parts.push(format!("psi={psi}: chi2 {stat:.2} on {df} df, p {pval:.3}"));
    }
    (ok, parts.join("; "))
}

fn closed_loop_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        level_step: 0.1,
        n_mc: 300,
        slots: 20_000,
        seed: 1,
        lambda: 0.025,
        xi: 0.7,
        kernels: dir.join("kernels"),
        ..ExperimentConfig::default()
    }
}

fn c8_kernels(cfg: &ExperimentConfig) -> Outcome {
    let k = load_kernels(cfg, cfg.xi, None).unwrap();
    let err = k
        .posterior
        .max_row_error()
        .max(k.sensing.max_row_error())
        .max(k.scheduling.kernel.max_row_error());
    let n = k.grid.n_cells();
    let identity = k.spec.psi_grid[0] == 0.0 && (0..n).all(|c| k.sensing.prob(k.sensing_row(c, 0), c) == 1.0);
    let t = &k.tables;
    let b = t.b_channels();
    let mean_md: Vec<f64> = (0..=b)
        .map(|m| {
            let mut acc = 0.0;
            for c in 0..n {
                let (mut w, mut s) = (0.0, 0.0);
                for nu in 1..=t.f_bands() {
                    w += t.nu_pmf(c, m, nu);
                    s += t.nu_pmf(c, m, nu) * t.md(c, m, nu);
                }
                acc += if w > 0.0 { s / w } else { 0.0 };
            }
            acc / n as f64
        })
        .collect();
    let ms: Vec<f64> = (0..=b).map(|m| m as f64).collect();
    let rho = spearman(&ms, &mean_md);
    let ok = err <= 1e-6 && identity && rho <= -0.5;
    let md: Vec<String> = mean_md.iter().map(|v| format!("{v:.3}")).collect();
    (
        ok,
        format!("max row error {err:.1e}, psi=0 identity {identity}, mean MD by m [{}], Spearman {rho:.3}", md.join(" ")),
    )
}

fn column(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

fn c9_closed_loop(cfg: &ExperimentConfig) -> Outcome {
    let t0 = Instant::now();
    let xi_rows = run_sweep(&ExperimentConfig {
        sweep_xi: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        ..cfg.clone()
    })
    .unwrap();
    let lambdas = vec![0.0, 0.005, 0.01, 0.025, 0.05, 0.1, 0.2];
    let lambda_rows = run_sweep(&ExperimentConfig {
        sweep_lambda: lambdas.clone(),
        ..cfg.clone()
    })
    .unwrap();
    let elapsed = t0.elapsed().as_secs_f64();

    let a = spearman(&column(&lambda_rows, |r| r.report.c_total), &column(&lambda_rows, |r| r.report.t_su));
    let b = spearman(&column(&xi_rows, |r| r.report.t_pu), &column(&xi_rows, |r| r.report.sensing_fraction()));
    let at = lambdas.iter().position(|&l| l == cfg.lambda).unwrap();
    let d = &lambda_rows[at].report.diagnostics;
    let (c, dd) = (d.entropy_psi_spearman(), d.occupancy_budget_spearman());
    let ok = a >= 0.9 && b >= 0.5 && c > 0.3 && dd < -0.3 && elapsed < 1800.0;
    (
        ok,
        format!(
            "(a) {a:.3} {}, (b) {b:.3} {}, (c) {c:.3} {}, (d) {dd:.3} {}, {elapsed:.0}s",
            mark(a >= 0.9),
            mark(b >= 0.5),
            mark(c > 0.3),
            mark(dd < -0.3)
        ),
    )
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn cli_run(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_crsense");
    let cfg = dir.join("tiny.toml");
    fs::write(
        &cfg,
        "f_bands = 4\nlevel_step = 0.1\nn_mc = 100\npsi_points = 6\nlambda_points = 6\nslots = 3000\n\
         sweep_lambda = [0.01, 0.1]\nc_max = [0.05, 0.3]\n",
    )
    .unwrap();
    let run = |args: &[&str]| {
        let status = Command::new(bin)
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", "9"])
            .args(args)
            .current_dir(dir)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(status.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&status.stderr));
    };
    run(&["single-band", "--out", "single.csv"]);
    // `train` and `simulate` share a single-point config, so drop the sweep grid for them
    let single = dir.join("single.toml");
    fs::write(&single, fs::read_to_string(&cfg).unwrap().replace("sweep_lambda = [0.01, 0.1]\n", "")).unwrap();
    for args in [
        vec!["train", "--kernels", "k", "--policy", "policy.json"],
        vec!["simulate", "--kernels", "k", "--policy", "policy.json", "--out", "sim.csv", "--trace", "trace.csv"],
    ] {
        let out = Command::new(bin)
            .arg("--config")
            .arg(&single)
            .args(["--seed", "9"])
            .args(&args)
            .current_dir(dir)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    }
    run(&["sweep", "--kernels", "k2", "--out", "sweep.csv"]);

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for sub in [".", "k", "k2"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for path in names.into_iter().filter(|p| p.is_file() && p.extension().is_some_and(|e| e != "toml")) {
            let name = format!("{sub}/{}", path.file_name().unwrap().to_string_lossy());
            files.push((name, fs::read(&path).unwrap()));
        }
    }
    files
}

fn c10_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = cli_run(a.path());
    let fb = cli_run(b.path());
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    let same = fa == fb;
    (same && fa.len() >= 7, format!("{} files compared byte for byte: {}", fa.len(), names.join(", ")))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = closed_loop_config(dir.path());
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("steady state", Box::new(c1_steady_state)),
        ("collision footnote", Box::new(c2_footnote)),
        ("single-band adaptive gain", Box::new(c3_single_band)),
        ("scheduler structure", Box::new(c4_scheduler)),
        ("projection optimality", Box::new(c5_projection)),
        ("sparse recovery", Box::new(c6_recovery)),
        ("measurement law", Box::new(c7_measurement_law)),
        // closed loop first builds the kernels the sanity checks read back
        ("closed loop", Box::new(|| c9_closed_loop(&cfg))),
        ("kernel sanity", Box::new(|| c8_kernels(&cfg))),
        ("determinism", Box::new(c10_determinism)),
    ];
    let numbers = [1, 2, 3, 4, 5, 6, 7, 9, 8, 10];
    let mut results: Vec<(usize, &str, bool, String, f64)> = Vec::new();
    for (n, (name, check)) in numbers.iter().zip(criteria) {
        let t = Instant::now();
        let (ok, detail) = check();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n:>2} {} {name} ({secs:.1}s): {detail}", if ok { "PASS" } else { "FAIL" });
        results.push((*n, name, ok, detail, secs));
    }
    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    for (n, name, ok, _, _) in &results {
        println!("criterion {n:>2}: {} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.2).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
