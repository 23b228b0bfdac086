use crate::{Error, Result, RngStream, Scalar};

use super::RateBound;

/// Nondecreasing integrated event rate with a generalized inverse.
pub trait CumulativeHazard<F: Scalar> {
    /// Integrated rate over `[0, s]`; must satisfy `cumulative(0) = 0`.
    fn cumulative(&self, s: F) -> F;

    /// Smallest `s` with `cumulative(s) = target`, or `None` when the total
    /// mass never reaches `target`.
    fn invert(&self, target: F) -> Option<F>;
}

/// Constant rate; `cumulative(s) = rate * s`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantHazard<F> {
    pub rate: F,
}

impl<F: Scalar> CumulativeHazard<F> for ConstantHazard<F> {
    fn cumulative(&self, s: F) -> F {
        self.rate * s
    }

    fn invert(&self, target: F) -> Option<F> {
        if self.rate <= F::zero() {
            return None;
        }
        Some(target / self.rate)
    }
}

/// Linear rate `a + b s` (nonnegative coefficients).
#[derive(Debug, Clone, Copy)]
pub struct LinearHazard<F> {
    pub a: F,
    pub b: F,
}

impl<F: Scalar> CumulativeHazard<F> for LinearHazard<F> {
    fn cumulative(&self, s: F) -> F {
        (self.a + self.b * s / F::from_real(2.0)) * s
    }

    fn invert(&self, target: F) -> Option<F> {
        let zero = F::zero();
        if self.b == zero {
            return ConstantHazard { rate: self.a }.invert(target);
        }
        let disc = self.a * self.a + F::from_real(2.0) * self.b * target;
        if disc < zero {
            return None;
        }
        Some((disc.sqrt() - self.a) / self.b)
    }
}

impl<F: Scalar> CumulativeHazard<F> for RateBound<F> {
    fn cumulative(&self, s: F) -> F {
        RateBound::cumulative(self, s)
    }

    fn invert(&self, target: F) -> Option<F> {
        self.next_arrival(F::zero(), target)
    }
}

/// Time of the first event of a Poisson process with integrated rate
/// `hazard`, by inversion: the smallest `s` with `cumulative(s) = exp_draw`.
///
/// Returns `Ok(None)` when no event occurs before `horizon`. The supplied
/// hazard is spot-checked for the contract `cumulative(0) = 0`, monotonicity
/// and consistency of the inverse; violations surface as errors rather than
/// bogus event times.
pub fn first_event_inversion<F: Scalar, H: CumulativeHazard<F>>(
    hazard: &H,
    exp_draw: F,
    horizon: F,
) -> Result<Option<F>> {
    let tol = F::from_real(1e-9);
    let at_zero = hazard.cumulative(F::zero());
    if at_zero.abs() > tol {
        return Err(Error::Contract(format!(
            "cumulative rate must vanish at 0, got {}",
            at_zero.to_real()
        )));
    }
    let s = match hazard.invert(exp_draw) {
        Some(s) if s <= horizon => s,
        _ => {
            // Claimed no event (or event past horizon): cross-check the mass.
            if hazard.cumulative(horizon) > exp_draw + tol {
                return Err(Error::Contract(
                    "inverse claims no event but cumulative exceeds the draw".into(),
                ));
            }
            check_monotone(hazard, horizon, tol)?;
            return Ok(None);
        }
    };
    let achieved = hazard.cumulative(s);
    let scale = exp_draw.abs().max(F::one());
    if (achieved - exp_draw).abs() > tol * scale {
        return Err(Error::Contract(format!(
            "inverse inconsistent: cumulative({}) = {} but draw was {}",
            s.to_real(),
            achieved.to_real(),
            exp_draw.to_real()
        )));
    }
    check_monotone(hazard, s, tol)?;
    Ok(Some(s))
}

fn check_monotone<F: Scalar, H: CumulativeHazard<F>>(hazard: &H, upto: F, tol: F) -> Result<()> {
    let probes = 8;
    let mut prev = F::zero();
    for k in 1..=probes {
        let s = upto * F::from_real(k as f64 / probes as f64);
        let c = hazard.cumulative(s);
        if c < prev - tol * prev.abs().max(F::one()) {
            return Err(Error::Contract(format!(
                "cumulative rate decreases near s = {}",
                s.to_real()
            )));
        }
        prev = c;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct ThinningOutcome<F> {
    /// Time of the first accepted proposal, `None` if none before horizon.
    pub event: Option<F>,
    /// Proposals consumed, accepted or not (the iteration-cost metric).
    pub n_proposals: u64,
}

/// First event of a Poisson process with rate `true_rate`, by thinning
/// against the piecewise-linear envelope `bound`.
///
/// Proposal times come from per-segment closed-form inversion of the
/// envelope; each is accepted with probability `true_rate(u) / bound(u)`.
/// A proposal where the true rate exceeds the envelope is a broken
/// precondition and fails loudly with [`Error::InvalidBound`].
pub fn first_event_thinning<F: Scalar>(
    bound: &RateBound<F>,
    mut true_rate: impl FnMut(F) -> F,
    rng: &mut RngStream,
) -> Result<ThinningOutcome<F>> {
    let mut cursor = F::zero();
    let mut n_proposals = 0u64;
    loop {
        let budget = rng.exp1::<F>();
        let u = match bound.next_arrival(cursor, budget) {
            Some(u) => u,
            None => return Ok(ThinningOutcome { event: None, n_proposals }),
        };
        n_proposals += 1;
        let rate = true_rate(u);
        let cap = bound.value(u);
        // Slack absorbs harmless last-ulp differences when the envelope is
        // exactly the rate computed through another expression.
        let slack = F::from_real(1e-9) * cap.abs().max(F::from_real(1e-12));
        if rate > cap + slack {
            return Err(Error::InvalidBound {
                at: u.to_real(),
                rate: rate.to_real(),
                bound: cap.to_real(),
            });
        }
        let accept_p = if cap > F::zero() { (rate / cap).min(F::one()) } else { F::zero() };
        if rate > F::zero() && rng.open01::<F>() < accept_p {
            return Ok(ThinningOutcome { event: Some(u), n_proposals });
        }
        cursor = u;
    }
}
