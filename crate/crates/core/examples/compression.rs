//! Compressing a 20-band belief to two levels: the optimal split, its Kullback-Leibler
//! cost, and the mean it preserves.
//!
//! `cargo run --example compression`

use crsense::compression::{expand, kld_to_factorized, project, ExpectedOccupancy};
use crsense::measurement::DenseBelief;
use crsense::streams::{stream, Domain};
use rand::Rng;

fn main() -> crsense::error::Result<()> {
    let mut rng = stream(5, Domain::Simulation, 0);
    let beliefs = [
        vec![0.05, 0.1, 0.15, 0.9, 0.92, 0.95, 0.97, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7],
        (0..20).map(|_| rng.random::<f64>()).collect(),
        vec![0.7; 20],
    ];
    for beta in beliefs {
        let beta = ExpectedOccupancy::new(beta)?;
        let (cbs, map) = project(&beta)?;
        let back = expand(&cbs, &map)?;
        println!(
            "beta_L {:.4}  beta_H {:.4}  nu {:<2}  mean {:.6} -> {:.6}  entropy {:.3} -> {:.3} nats",
            cbs.beta_low,
            cbs.beta_high,
            cbs.nu,
            beta.total(),
            back.total(),
            beta.entropy(),
            back.entropy()
        );
    }

    // KLD from a factorised belief on 6 bands, where the dense form is still small.
    let beta = vec![0.02, 0.1, 0.35, 0.6, 0.8, 0.99];
    let (cbs, map) = project(&ExpectedOccupancy::new(beta.clone())?)?;
    let dense = DenseBelief::factorized(&beta)?;
    println!(
        "\n6 bands {beta:?}\n  -> ({:.4}, {:.4}, {}), KLD {:.5} nats",
        cbs.beta_low,
        cbs.beta_high,
        cbs.nu,
        kld_to_factorized(&dense, &cbs, &map)?
    );
    Ok(())
}
