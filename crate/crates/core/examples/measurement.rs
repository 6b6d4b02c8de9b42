//! Random measurement counts on the control channel, one measurement batch, and the exact
//! Bayesian posterior it induces on a small spectrum.
//!
//! `cargo run --example measurement`

use crsense::dynamics::OccupancyVector;
use crsense::measurement::{draw_measurement_count, exact_posterior, generate_batch, DenseBelief};
use crsense::params::ModelParams;
use crsense::stats::binomial_pmf;
use crsense::streams::{stream, Domain};

fn main() -> crsense::error::Result<()> {
    let p = ModelParams::reference();
    let mut rng = stream(11, Domain::Simulation, 0);

    let draws = 100_000;
    for psi in [0.2, 0.5, 1.0] {
        let mut hist = vec![0usize; p.b_channels + 1];
        for _ in 0..draws {
            hist[draw_measurement_count(psi, &p, &mut rng)?] += 1;
        }
        let law = binomial_pmf(p.b_channels, psi * (-psi).exp());
        let row: Vec<String> = hist
            .iter()
            .zip(&law)
            .map(|(&h, q)| format!("{:.3}/{:.3}", h as f64 / draws as f64, q))
            .collect();
        println!("psi={psi}: P(m) empirical/binomial  {}", row.join("  "));
    }

    // Four bands, two busy, three noisy measurements.
    let p4 = ModelParams::reference().with_bands(4);
    let truth = OccupancyVector(vec![true, false, false, true]);
    let batch = generate_batch(&truth, 3, &p4, &mut rng);
    let mut csv = Vec::new();
    batch.write_csv(&mut csv)?;
    println!("\nbatch (gains column-major, then observations):\n{}", String::from_utf8_lossy(&csv));

    let prior = DenseBelief::factorized(&[0.7; 4])?;
    let post = exact_posterior(&prior, &batch, &p4)?;
    println!("state  prior   posterior");
    for (i, (&a, &b)) in prior.masses().iter().zip(post.masses()).enumerate() {
        let bits: String = OccupancyVector::from_index(i, 4).0.iter().map(|&x| if x { '1' } else { '0' }).collect();
        println!("{bits}   {a:.4}  {b:.4}");
    }
    println!("posterior marginals {:?}", post.marginals().iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>());
    println!("MAP state {:?}, truth {:?}", post.argmax().0, truth.0);
    Ok(())
}
