//! Per-band success probabilities, the occupancy chain and its stationary law, checked
//! against a long simulation with no secondary traffic.
//!
//! `cargo run --example pu_dynamics -- [slots]`

use crsense::dynamics::{
    band_transition_prob, feedback_conditioned_transition, feedback_pmf, pu_success_prob, steady_state_idle_prob,
    su_success_prob, FeedbackSymbol,
};
use crsense::params::ModelParams;
use crsense::streams::{stream, Domain};
use rand::Rng;

fn main() -> crsense::error::Result<()> {
    let slots: usize = std::env::args().nth(1).map_or(1_000_000, |s| s.parse().expect("slots"));
    let p = ModelParams::reference();

    println!("r     P_succ^P(b=1)  P_succ^S(b=0)");
    for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("{r:.2}  {:.4}         {:.4}", pu_success_prob(true, r, &p)?, su_success_prob(false, r, &p)?);
    }

    println!("\nP(b'=1 | b=1, r=0)      {:.6}", band_transition_prob(true, true, 0.0, &p)?);
    println!("P(ACK | b=1, r=0)       {:.4}", feedback_pmf(FeedbackSymbol::Ack, true, 0.0, &p)?);
    for sym in [FeedbackSymbol::Ack, FeedbackSymbol::Nack, FeedbackSymbol::Empty] {
        println!(
            "P(b'=1 | b=1, r=0.5, {}) {:.5}",
            sym.as_char(),
            feedback_conditioned_transition(true, true, 0.5, sym, &p)?
        );
    }

    let pi0 = steady_state_idle_prob(&p);
    let mut rng = stream(7, Domain::Simulation, 0);
    let mut busy = rng.random::<f64>() >= pi0;
    let mut idle = 0usize;
    for _ in 0..slots {
        let up = band_transition_prob(true, busy, 0.0, &p)?;
        busy = rng.random::<f64>() < up;
        idle += usize::from(!busy);
    }
    println!("\nstationary idle probability {pi0:.5}, simulated over {slots} slots {:.5}", idle as f64 / slots as f64);
    Ok(())
}
