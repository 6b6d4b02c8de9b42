use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crsense::config::ExperimentConfig;
use crsense::error::Result;
use crsense::experiments;

#[derive(Parser)]
#[command(name = "crsense", about = "Joint spectrum sensing and scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (flat `key = value`); defaults reproduce the reference model.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Kernel cache directory or `.cbsk` file.
    #[arg(long, global = true)]
    kernels: Option<PathBuf>,
    /// Policy file written by `train` and read by `simulate`.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
    /// Output CSV (`-` for stdout where supported).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Per-slot trace CSV for `simulate`.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimised single-band schemes over a range of budgets.
    SingleBand,
    /// Build kernels and solve one policy per configured (λ, ξ) point.
    Train,
    /// Run the closed loop under a trained policy and append a report row.
    Simulate,
    /// Train and simulate every (λ, ξ) point of the sweep grid.
    Sweep,
}

fn output(path: &PathBuf) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(Box::new(BufWriter::new(File::create(path)?)))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.kernels {
        cfg.kernels = k;
    }
    if let Some(p) = cli.policy {
        cfg.policy = p;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| crsense::error::Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::SingleBand => {
            let mut out = output(&cfg.out)?;
            experiments::cmd_single_band(&cfg, &mut out)?;
            out.flush()?;
        }
        Command::Train => {
            for path in experiments::cmd_train(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Simulate => {
            let r = experiments::cmd_simulate(&cfg, cli.trace.as_deref())?;
            println!(
                "T_S {:.5}  T_P {:.5}  C {:.5} (sensing {:.1}%)  L {:.5}",
                r.t_su,
                r.t_pu,
                r.c_total,
                100.0 * r.sensing_fraction(),
                r.lagrangian
            );
        }
        Command::Sweep => {
            let mut out = output(&cfg.out)?;
            experiments::cmd_sweep(&cfg, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
