use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, RngStream};

use super::proposal::Proposal;
use super::rho::IncrementalRho;

/// CIS state: anchor value at the most recent event, signed weight, time
/// since that event and absolute time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CisParticle {
    pub y: Vec<Real>,
    pub w: Real,
    pub s: Real,
    pub t: Real,
}

impl CisParticle {
    pub fn new(y: Vec<Real>) -> Self {
        CisParticle { y, w: 1.0, s: 0.0, t: 0.0 }
    }
}

/// Event-rate policy for the weight-update Poisson clock. Between events
/// the anchor is frozen, so both policies are constant over an inter-event
/// interval and gaps are plain exponentials.
#[derive(Debug, Clone)]
pub enum EventRatePolicy {
    Constant(Real),
    /// `base + quad * |y - x_hat|^2`, evaluated at the current anchor (the
    /// control-variate tuning from the subsampling study).
    AnchorQuadratic { base: Real, quad: Real, x_hat: Real },
}

impl EventRatePolicy {
    pub fn rate(&self, anchor: &[Real]) -> Result<Real> {
        let r = match self {
            EventRatePolicy::Constant(r) => *r,
            EventRatePolicy::AnchorQuadratic { base, quad, x_hat } => {
                let d2: Real = anchor.iter().map(|&a| (a - x_hat) * (a - x_hat)).sum();
                base + quad * d2
            }
        };
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::Config(format!("event rate must be positive, got {r}")));
        }
        Ok(r)
    }
}

/// Per-run accounting for CIS propagation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CisStepStats {
    pub events: u64,
    /// Weight updates whose multiplier `1 + rho/lambda` was negative.
    pub sign_flips: u64,
    pub data_accesses: u64,
}

/// Advance the particle by one event or to the horizon, whichever is first.
///
/// The inter-event gap is exponential with the policy rate at the current
/// anchor. An event draws the next anchor from `q_s`, multiplies the weight
/// by `1 + rho(y', y, s) / lambda` and resets the elapsed time; crossing
/// the horizon instead materializes a draw `X ~ q_{s}(. | y)` over the full
/// elapsed time and freezes the weight.
pub fn cis_step(
    particle: &CisParticle,
    proposal: &Proposal,
    rho: &dyn IncrementalRho,
    policy: &EventRatePolicy,
    horizon: Real,
    rng: &mut RngStream,
    stats: &mut CisStepStats,
) -> Result<CisParticle> {
    if particle.t >= horizon {
        return Ok(particle.clone());
    }
    let rate = policy.rate(&particle.y)?;
    let gap = rng.exp1::<Real>() / rate;
    let event_t = particle.t + gap;
    if event_t > horizon {
        let elapsed = particle.s + (horizon - particle.t);
        let x = proposal.sample(&particle.y, elapsed, rng)?;
        return Ok(CisParticle { y: x, w: particle.w, s: 0.0, t: horizon });
    }
    let s_event = particle.s + gap;
    let y_new = proposal.sample(&particle.y, s_event, rng)?;
    let increment = rho.eval(&y_new, &particle.y, s_event, rng)?;
    stats.data_accesses += rho.data_accesses();
    let multiplier = 1.0 + increment / rate;
    if multiplier < 0.0 {
        stats.sign_flips += 1;
    }
    stats.events += 1;
    let w = particle.w * multiplier;
    if !w.is_finite() {
        return Err(Error::NonFiniteState {
            t: event_t,
            detail: format!("weight became {w} (rho = {increment}, rate = {rate})"),
        });
    }
    Ok(CisParticle { y: y_new, w, s: 0.0, t: event_t })
}

/// Run [`cis_step`] until the horizon is reached.
pub fn propagate(
    particle: &CisParticle,
    proposal: &Proposal,
    rho: &dyn IncrementalRho,
    policy: &EventRatePolicy,
    horizon: Real,
    rng: &mut RngStream,
    stats: &mut CisStepStats,
) -> Result<CisParticle> {
    let mut p = particle.clone();
    while p.t < horizon {
        p = cis_step(&p, proposal, rho, policy, horizon, rng, stats)?;
    }
    Ok(p)
}
