//! Independent deterministic random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families; each owns a disjoint range of stream ids.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    Detection = 1,
    Scheduling = 2,
    Simulation = 3,
}

/// Generator for item `index` of `domain`, independent of every other `(domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}
