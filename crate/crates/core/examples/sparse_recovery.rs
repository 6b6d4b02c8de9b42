//! MAP spectrum estimation from a handful of compressed measurements: the relaxed solver
//! plus hill climbing, against exhaustive search, at increasing measurement counts.
//!
//! `cargo run --example sparse_recovery -- [trials]`

use crsense::compression::ExpectedOccupancy;
use crsense::dynamics::OccupancyVector;
use crsense::measurement::generate_batch;
use crsense::params::ModelParams;
use crsense::recovery::{map_estimate_detailed, map_exhaustive};
use crsense::streams::{stream, Domain};
use rand::Rng;

fn main() -> crsense::error::Result<()> {
    let trials: usize = std::env::args().nth(1).map_or(300, |s| s.parse().expect("trials"));
    let f = 10;
    let p = ModelParams::reference().with_bands(f);
    let mut rng = stream(3, Domain::Simulation, 0);
    println!("F={f}, prior occupancy 0.1..0.9 per band");
    println!("m   bit errors/band   prior-mode errors   = exhaustive MAP   mean flips");
    for m in [0, 1, 2, 4, 6, 8, 10] {
        let (mut err, mut prior_err, mut agree, mut flips) = (0usize, 0usize, 0usize, 0usize);
        for _ in 0..trials {
            let beta: Vec<f64> = (0..f).map(|_| rng.random_range(0.1..0.9)).collect();
            let truth = OccupancyVector(beta.iter().map(|&b| rng.random::<f64>() < b).collect());
            let batch = generate_batch(&truth, m, &p, &mut rng);
            let beta = ExpectedOccupancy::new(beta)?;
            let est = map_estimate_detailed(&beta, &batch, &p)?;
            let exact = map_exhaustive(&beta, &batch, &p)?;
            err += est.estimate.0.iter().zip(&truth.0).filter(|(a, b)| a != b).count();
            prior_err += beta.0.iter().zip(&truth.0).filter(|(&b, &t)| (b >= 0.5) != t).count();
            agree += usize::from(est.estimate == exact);
            flips += est.flips;
        }
        let n = (trials * f) as f64;
        println!(
            "{m:<3} {:.4}            {:.4}              {:.3}              {:.2}",
            err as f64 / n,
            prior_err as f64 / n,
            agree as f64 / trials as f64,
            flips as f64 / trials as f64
        );
    }
    Ok(())
}
