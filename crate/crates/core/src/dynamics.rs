//! Per-band PU/SU physics under the collision channel: success probabilities,
//! the two-state occupancy chain, PU feedback and feedback-conditioned transitions.
//!
//! Collisions use the many-SU limit: with traffic `r` the probability that no SU
//! transmits is `e^{−r}` and the probability that exactly one does is `r·e^{−r}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// PU feedback overheard by the controller at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackSymbol {
    Ack,
    Nack,
    /// Erased feedback, or no PU on the band.
    Empty,
}

impl FeedbackSymbol {
    pub const ALL: [FeedbackSymbol; 3] = [FeedbackSymbol::Ack, FeedbackSymbol::Nack, FeedbackSymbol::Empty];

    pub fn as_char(self) -> char {
        match self {
            FeedbackSymbol::Ack => 'A',
            FeedbackSymbol::Nack => 'N',
            FeedbackSymbol::Empty => '-',
        }
    }
}

/// Which network a throughput figure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserClass {
    Secondary,
    Primary,
}

/// True spectrum state: `true` means the band is occupied by a PU.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OccupancyVector(pub Vec<bool>);

impl OccupancyVector {
    pub fn idle(f_bands: usize) -> Self {
        Self(vec![false; f_bands])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn occupied(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Band `i` maps to bit `i` of the returned integer.
    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (usize::from(b) << i))
    }

    pub fn from_index(index: usize, f_bands: usize) -> Self {
        Self((0..f_bands).map(|i| (index >> i) & 1 == 1).collect())
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Per-band SU traffic, each entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficVector(pub Vec<f64>);

impl TrafficVector {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        for &r in &rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::RateOutOfRange(r));
            }
        }
        Ok(Self(rates))
    }

    pub fn zeros(f_bands: usize) -> Self {
        Self(vec![0.0; f_bands])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn check_rate(r: f64) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeRate(r))
    }
}

#[inline]
pub(crate) fn pu_success(b: bool, r: f64, p: &ModelParams) -> f64 {
    if b {
        (1.0 - p.rho_p) * (-r).exp()
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn su_success(b: bool, r: f64, p: &ModelParams) -> f64 {
    if b {
        0.0
    } else {
        (1.0 - p.rho_s) * r * (-r).exp()
    }
}

#[inline]
pub(crate) fn busy_next(b: bool, r: f64, p: &ModelParams) -> f64 {
    if b {
        1.0 - (1.0 - p.theta) * (1.0 - p.zeta) * pu_success(true, r, p)
    } else {
        p.zeta
    }
}

/// Probability `b(1−ρ_P)e^{−r}` that the PU on the band delivers its packet.
pub fn pu_success_prob(b: bool, r: f64, p: &ModelParams) -> Result<f64> {
    check_rate(r)?;
    Ok(pu_success(b, r, p))
}

/// Probability `(1−b)(1−ρ_S)r·e^{−r}` that exactly one SU transmits on an idle band and succeeds.
pub fn su_success_prob(b: bool, r: f64, p: &ModelParams) -> Result<f64> {
    check_rate(r)?;
    Ok(su_success(b, r, p))
}

/// `P_B(b_next | b, r)` of the occupancy chain.
pub fn band_transition_prob(b_next: bool, b: bool, r: f64, p: &ModelParams) -> Result<f64> {
    check_rate(r)?;
    let busy = busy_next(b, r, p);
    Ok(if b_next { busy } else { 1.0 - busy })
}

#[inline]
pub(crate) fn feedback_prob(sym: FeedbackSymbol, b: bool, r: f64, p: &ModelParams) -> f64 {
    match (sym, b) {
        (FeedbackSymbol::Empty, false) => 1.0,
        (FeedbackSymbol::Empty, true) => p.epsilon,
        (_, false) => 0.0,
        (FeedbackSymbol::Ack, true) => (1.0 - p.epsilon) * pu_success(true, r, p),
        (FeedbackSymbol::Nack, true) => (1.0 - p.epsilon) * (1.0 - pu_success(true, r, p)),
    }
}

/// Probability of observing `sym` on a band in state `b` carrying SU traffic `r`.
pub fn feedback_pmf(sym: FeedbackSymbol, b: bool, r: f64, p: &ModelParams) -> Result<f64> {
    check_rate(r)?;
    Ok(feedback_prob(sym, b, r, p))
}

#[inline]
pub(crate) fn busy_next_given_feedback(b: bool, r: f64, sym: FeedbackSymbol, p: &ModelParams) -> f64 {
    match sym {
        FeedbackSymbol::Ack => p.theta + (1.0 - p.theta) * p.zeta,
        FeedbackSymbol::Nack => 1.0,
        // Erasures are independent of the PU outcome, so an empty symbol on a busy
        // band leaves the unconditioned transition in place.
        FeedbackSymbol::Empty => busy_next(b, r, p),
    }
}

/// `P(b_next | b, r, sym)`: the transition conditioned on the overheard feedback.
///
/// ACK/NACK can only be heard from an occupied band; asking for them with `b = false`
/// is rejected.
pub fn feedback_conditioned_transition(
    b_next: bool,
    b: bool,
    r: f64,
    sym: FeedbackSymbol,
    p: &ModelParams,
) -> Result<f64> {
    check_rate(r)?;
    if sym != FeedbackSymbol::Empty && !b {
        return Err(Error::InconsistentFeedback { band: 0 });
    }
    let busy = busy_next_given_feedback(b, r, sym, p);
    Ok(if b_next { busy } else { 1.0 - busy })
}

/// Long-run probability that a band carrying no SU traffic is idle.
pub fn steady_state_idle_prob(p: &ModelParams) -> f64 {
    let release = (1.0 - p.theta) * (1.0 - p.zeta) * (1.0 - p.rho_p);
    release / (release + p.zeta)
}

/// Sum over bands of the per-band success probability of the chosen network.
pub fn aggregate_throughput(
    b: &OccupancyVector,
    r: &TrafficVector,
    which: UserClass,
    p: &ModelParams,
) -> Result<f64> {
    if b.len() != r.0.len() {
        return Err(Error::LengthMismatch {
            expected: b.len(),
            found: r.0.len(),
        });
    }
    let mut total = 0.0;
    for (&bit, &rate) in b.0.iter().zip(&r.0) {
        check_rate(rate)?;
        total += match which {
            UserClass::Primary => pu_success(bit, rate, p),
            UserClass::Secondary => su_success(bit, rate, p),
        };
    }
    Ok(total)
}
