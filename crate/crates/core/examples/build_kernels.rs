//! Builds (or loads) the detection tables and transition kernels for the default 20-band
//! model and prints a few summary statistics.
//!
//! `cargo run --example build_kernels -- [level_step] [n_mc] [cache_dir]`

use std::path::PathBuf;
use std::time::Instant;

use crsense::kernels::{KernelCache, KernelSpec};
use crsense::params::ModelParams;

fn main() -> crsense::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut spec = KernelSpec::default();
    if let Some(v) = args.first() {
        spec.level_step = v.parse().expect("level_step");
    }
    if let Some(v) = args.get(1) {
        spec.n_mc = v.parse().expect("n_mc");
    }
    let dir = args.get(2).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("crsense-kernels"));
    let params = ModelParams::reference();

    let t0 = Instant::now();
    let (cache, path, built) = KernelCache::load_or_build(&dir, &params, &spec)?;
    println!(
        "{} {} in {:.1}s",
        if built { "built" } else { "loaded" },
        path.display(),
        t0.elapsed().as_secs_f64()
    );
    println!("cells            {}", cache.grid.n_cells());
    println!("digest           {}", cache.digest);
    println!("table fallbacks  {}", cache.tables.fallbacks);
    println!("sensing nnz      {}", cache.sensing.nnz());
    println!("scheduling nnz   {}", cache.scheduling.kernel.nnz());

    // Detection quality at a typical prior: 15 bands near 0.1, 5 near 0.9.
    let cell = cache.grid.cell_index(1, 9, 15);
    println!("\nprior cell {:?}", cache.grid.cell_cbs(cell));
    println!("  m   P(nu_hat=15)  MD@15    FA@15");
    for m in 0..=params.b_channels {
        println!(
            "  {m}   {:.3}         {:.4}   {:.4}",
            cache.tables.nu_pmf(cell, m, 15),
            cache.tables.md(cell, m, 15),
            cache.tables.fa(cell, m, 15)
        );
    }
    Ok(())
}
