//! Single-band cost/throughput trade-off: the best non-adaptive scheme against the best
//! adaptive one, whose sensing traffic depends on the last detected state.
//!
//! `cargo run --example single_band`

use crsense::params::ModelParams;
use crsense::single_band::{adaptive_optimize, nonadaptive_optimize};

fn main() -> crsense::error::Result<()> {
    let p = ModelParams::reference();
    println!("c_max  T_S(non-adaptive)  T_S(adaptive)  ratio  sensing share (na / ad)  psi0  psi1  r");
    for c in [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
        let na = nonadaptive_optimize(c, &p)?;
        let ad = adaptive_optimize(c, &p)?;
        println!(
            "{c:<5}  {:.5}            {:.5}        {:.3}  {:.3} / {:.3}            {:.2}  {:.2}  {:.2}",
            na.metrics.su_throughput,
            ad.metrics.su_throughput,
            ad.metrics.su_throughput / na.metrics.su_throughput,
            na.metrics.sensing_fraction(),
            ad.metrics.sensing_fraction(),
            ad.policy.psi0,
            ad.policy.psi1,
            ad.policy.r
        );
    }
    Ok(())
}
