//! Solves the two-stage dynamic program on a small spectrum and prints how the chosen
//! sensing traffic and budget vary over the compressed belief grid.
//!
//! `cargo run --example train_policy -- [f_bands] [lambda] [xi]`

use crsense::kernels::{KernelCache, KernelSpec};
use crsense::params::ModelParams;
use crsense::planner::{solve, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};

fn main() -> crsense::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).map_or(d, |s| s.parse().expect("number"));
    let f = arg(0, 8.0) as usize;
    let p = ModelParams::reference().with_bands(f).with_tradeoff(arg(2, 0.7), arg(1, 0.025));
    let spec = KernelSpec {
        level_step: 0.1,
        n_mc: 300,
        ..KernelSpec::default()
    };
    let kernels = KernelCache::build(&p, &spec)?;
    let pol = solve(&kernels, &p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?;
    println!(
        "F={f} lambda={} xi={}: gain {:.5}, {} sweeps, converged {}, final span {:.2e}",
        p.lambda,
        p.xi,
        pol.gain,
        pol.sweeps,
        pol.converged,
        pol.spans.last().copied().unwrap_or(0.0)
    );

    let g = &kernels.grid;
    let n = g.n_levels();
    let nu = f / 2;
    println!("\npsi on prior cells with nu={nu} (rows beta_L, columns beta_H)");
    print!("      ");
    for h in 0..n {
        print!("{:>5.1}", g.level(h));
    }
    println!();
    for l in 0..n {
        print!("{:>5.1} ", g.level(l));
        for h in 0..n {
            if h < l {
                print!("{:>5}", "");
            } else {
                print!("{:>5.2}", pol.sensing[g.cell_index(l, h, nu)]);
            }
        }
        println!();
    }
    println!("\nbudget fraction of Lambda_max on posterior cells with nu={nu}");
    for l in 0..n {
        print!("{:>5.1} ", g.level(l));
        for h in 0..n {
            if h < l {
                print!("{:>5}", "");
            } else {
                let k = pol.budget_index[g.cell_index(l, h, nu)];
                print!("{:>5.2}", k as f64 / (pol.n_lambda - 1) as f64);
            }
        }
        println!();
    }
    Ok(())
}
