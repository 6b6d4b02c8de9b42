//! Myopic traffic allocation on a posterior belief: per-band rates as the total budget
//! grows, the zero-traffic threshold and the budget beyond which nothing more is useful.
//!
//! `cargo run --example scheduler -- [xi]`

use crsense::compression::ExpectedOccupancy;
use crsense::params::ModelParams;
use crsense::scheduler::{allocate, lambda_max, zero_traffic_threshold};

fn main() -> crsense::error::Result<()> {
    let xi: f64 = std::env::args().nth(1).map_or(0.7, |s| s.parse().expect("xi"));
    let p = ModelParams::reference().with_bands(6).with_tradeoff(xi, 0.0);
    let beta = ExpectedOccupancy::new(vec![0.02, 0.05, 0.1, 0.3, 0.6, 0.95])?;
    let lmax = lambda_max(&beta, &p);
    println!("xi {xi}: bands at or above beta = {:.4} get no traffic", zero_traffic_threshold(&p));
    println!("belief {:?}, Lambda_max {lmax:.4}", beta.0);
    println!("Lambda   multiplier  objective  rates");
    for k in 0..=8 {
        let budget = lmax * k as f64 / 8.0;
        let a = allocate(&beta, budget, &p)?;
        let rates: Vec<String> = a.traffic.0.iter().map(|r| format!("{r:.3}")).collect();
        println!("{budget:.4}   {:.4}      {:.4}     {}", a.multiplier, a.objective, rates.join(" "));
    }
    Ok(())
}
