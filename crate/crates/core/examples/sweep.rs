//! The cost/throughput trade-off curve: trains and simulates one policy per cost
//! multiplier and prints the sweep table, as the `sweep` subcommand does.
//!
//! `cargo run --example sweep -- [f_bands]`

use crsense::config::ExperimentConfig;
use crsense::experiments::cmd_sweep;

fn main() -> crsense::error::Result<()> {
    let f: usize = std::env::args().nth(1).map_or(8, |s| s.parse().expect("f_bands"));
    let dir = std::env::temp_dir().join("crsense-sweep-example");
    let cfg = ExperimentConfig {
        f_bands: f,
        level_step: 0.1,
        n_mc: 300,
        slots: 20_000,
        sweep_lambda: vec![0.0, 0.01, 0.025, 0.05, 0.1, 0.2],
        kernels: dir.join("kernels"),
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let rows = cmd_sweep(&cfg, std::io::stdout().lock())?;
    let ok = rows.windows(2).all(|w| w[1].report.c_total <= w[0].report.c_total + 1e-9);
    eprintln!("cost falls as lambda grows: {ok}");
    Ok(())
}
