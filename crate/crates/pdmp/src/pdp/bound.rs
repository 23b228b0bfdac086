use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// One piece of a piecewise-linear envelope: `bound(u) = a + b (u - start)`
/// on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<F> {
    pub start: F,
    pub end: F,
    pub a: F,
    pub b: F,
}

impl<F: Scalar> Segment<F> {
    fn len(&self) -> F {
        self.end - self.start
    }

    fn value_at(&self, u: F) -> F {
        self.a + self.b * (u - self.start)
    }

    /// Integrated rate over `[start + from, start + to]` (local offsets).
    fn mass_between(&self, from: F, to: F) -> F {
        let two = F::from_real(2.0);
        (self.a + self.b * (from + to) / two) * (to - from)
    }
}

/// Piecewise-linear upper envelope for an event rate, used for thinning.
///
/// Segments are contiguous, cover `[0, horizon)` and the envelope is
/// nonnegative everywhere. Constant and single-line envelopes are the
/// one-segment degenerate cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBound<F> {
    segments: Vec<Segment<F>>,
}

impl<F: Scalar> RateBound<F> {
    /// Build from `(start, end, a, b)` tuples, validating contiguity,
    /// coverage of `[0, horizon)` and nonnegativity.
    pub fn from_segments(segments: Vec<Segment<F>>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Contract("rate bound needs at least one segment".into()));
        }
        if segments[0].start != F::zero() {
            return Err(Error::Contract("first segment must start at 0".into()));
        }
        let mut prev_end = F::zero();
        for seg in &segments {
            if !(seg.start.is_finite() && seg.end.is_finite() && seg.a.is_finite() && seg.b.is_finite())
            {
                return Err(Error::Contract("non-finite rate bound segment".into()));
            }
            if seg.start != prev_end {
                return Err(Error::Contract(format!(
                    "segments not contiguous at u = {}",
                    seg.start.to_real()
                )));
            }
            if seg.end <= seg.start {
                return Err(Error::Contract("empty or reversed segment".into()));
            }
            // Linear on the segment, so endpoint checks imply nonnegativity.
            if seg.a < F::zero() || seg.a + seg.b * seg.len() < -F::from_real(1e-12) {
                return Err(Error::Contract(format!(
                    "rate bound negative on [{}, {})",
                    seg.start.to_real(),
                    seg.end.to_real()
                )));
            }
            prev_end = seg.end;
        }
        Ok(RateBound { segments })
    }

    pub fn constant(rate: F, horizon: F) -> Result<Self> {
        RateBound::from_segments(vec![Segment {
            start: F::zero(),
            end: horizon,
            a: rate,
            b: F::zero(),
        }])
    }

    /// Envelope `max(0, a + b u)` on `[0, horizon)`, split at the zero
    /// crossing when the line changes sign inside the window.
    pub fn linear_clipped(a: F, b: F, horizon: F) -> Result<Self> {
        let zero = F::zero();
        let at_start = a;
        let at_end = a + b * horizon;
        if at_start >= zero && at_end >= zero {
            return RateBound::from_segments(vec![Segment { start: zero, end: horizon, a, b }]);
        }
        if at_start <= zero && at_end <= zero {
            return RateBound::from_segments(vec![Segment {
                start: zero,
                end: horizon,
                a: zero,
                b: zero,
            }]);
        }
        let cross = (-a / b).max(zero).min(horizon);
        if b > zero {
            // Negative then positive: flat zero, then the line.
            RateBound::from_segments(vec![
                Segment { start: zero, end: cross, a: zero, b: zero },
                Segment { start: cross, end: horizon, a: zero, b },
            ])
        } else {
            // Positive then negative: the line, then flat zero.
            RateBound::from_segments(vec![
                Segment { start: zero, end: cross, a, b },
                Segment { start: cross, end: horizon, a: zero, b: zero },
            ])
        }
    }

    pub fn segments(&self) -> &[Segment<F>] {
        &self.segments
    }

    pub fn horizon(&self) -> F {
        self.segments.last().unwrap().end
    }

    pub fn value(&self, u: F) -> F {
        let seg = match self
            .segments
            .iter()
            .find(|s| u >= s.start && u < s.end)
        {
            Some(s) => s,
            // Right endpoint: use the final segment's closure value.
            None => self.segments.last().unwrap(),
        };
        seg.value_at(u).max(F::zero())
    }

    /// Integrated envelope over `[0, s]`.
    pub fn cumulative(&self, s: F) -> F {
        let mut total = F::zero();
        for seg in &self.segments {
            if s <= seg.start {
                break;
            }
            let to = (s.min(seg.end)) - seg.start;
            total += seg.mass_between(F::zero(), to);
        }
        total
    }

    pub fn total_mass(&self) -> F {
        self.cumulative(self.horizon())
    }

    /// First arrival of a Poisson process with this intensity strictly after
    /// `after`, given a fresh Exp(1) budget. Segments whose mass is consumed
    /// carry the residual budget to the next segment; returns `None` when
    /// the budget outlives the horizon.
    pub fn next_arrival(&self, after: F, exp_budget: F) -> Option<F> {
        let zero = F::zero();
        let two = F::from_real(2.0);
        let mut budget = exp_budget;
        for seg in &self.segments {
            if after >= seg.end {
                continue;
            }
            let from = (after - seg.start).max(zero);
            let len = seg.len();
            let r0 = (seg.a + seg.b * from).max(zero);
            let mass = seg.mass_between(from, len).max(zero);
            if budget > mass {
                budget -= mass;
                continue;
            }
            // Solve r0 d + b d^2 / 2 = budget on this segment; the
            // rationalized root 2e / (r0 + sqrt(disc)) is stable for every
            // sign of b.
            let disc = (r0 * r0 + two * seg.b * budget).max(zero);
            let denom = r0 + disc.sqrt();
            if denom <= zero {
                // Zero-rate stretch holds no mass; checked above.
                continue;
            }
            let d = two * budget / denom;
            let arrival = seg.start + from + d;
            if arrival < seg.end {
                return Some(arrival);
            }
            // Rounding pushed us over the edge; hand the sliver on.
            budget = (budget - mass).max(zero);
        }
        None
    }

    /// Shift the whole envelope up by a nonnegative constant.
    pub fn plus_constant(&self, c: F) -> RateBound<F> {
        assert!(c >= F::zero());
        RateBound {
            segments: self
                .segments
                .iter()
                .map(|s| Segment { a: s.a + c, ..*s })
                .collect(),
        }
    }

    /// Sum of several envelopes over the common horizon (superposition of
    /// independent proposal streams). Breakpoints are merged.
    pub fn superpose(bounds: &[RateBound<F>]) -> Result<RateBound<F>> {
        if bounds.is_empty() {
            return Err(Error::Contract("cannot superpose zero bounds".into()));
        }
        let horizon = bounds[0].horizon();
        for b in bounds {
            if (b.horizon() - horizon).abs() > F::from_real(1e-9) * horizon.max(F::one()) {
                return Err(Error::Contract("superposed bounds must share a horizon".into()));
            }
        }
        let mut cuts: Vec<F> = bounds
            .iter()
            .flat_map(|b| b.segments.iter().map(|s| s.start))
            .chain(std::iter::once(horizon))
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| *a == *b);
        let mut segments = Vec::with_capacity(cuts.len() - 1);
        for w in cuts.windows(2) {
            let (start, end) = (w[0], w[1]);
            if end <= start {
                continue;
            }
            let mut a = F::zero();
            let mut slope = F::zero();
            for b in bounds {
                let seg = b
                    .segments
                    .iter()
                    .find(|s| start >= s.start && start < s.end)
                    .expect("cut inside coverage");
                a += seg.value_at(start).max(F::zero());
                slope += seg.b;
            }
            segments.push(Segment { start, end, a, b: slope });
        }
        RateBound::from_segments(segments)
    }
}
