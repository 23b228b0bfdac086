//! Piecewise-deterministic-process machinery: constant-velocity flow,
//! event-time simulation by inversion and thinning, skeleton recording and
//! path reconstruction.

mod bound;
mod events;
mod simulate;
mod skeleton;

pub use bound::{RateBound, Segment};
pub use events::{
    first_event_inversion, first_event_thinning, ConstantHazard, CumulativeHazard, LinearHazard,
    ThinningOutcome,
};
pub use simulate::{simulate_pdp, SimulationCost, Transition};
pub use skeleton::{EventKind, Skeleton, SkeletonHeader, SkeletonPoint};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Point in the d-dimensional parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position<F>(pub Vec<F>);

/// Velocity of the deterministic flow, in parameter units per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Velocity<F>(pub Vec<F>);

impl<F: Scalar> Position<F> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[F] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// 1-d convenience accessor.
    pub fn scalar(&self) -> F {
        self.0[0]
    }
}

impl<F: Scalar> Velocity<F> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[F] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn scalar(&self) -> F {
        self.0[0]
    }

    pub fn speed(&self) -> F {
        self.0.iter().map(|&c| c * c).sum::<F>().sqrt()
    }

    pub fn negated(&self) -> Velocity<F> {
        Velocity(self.0.iter().map(|&c| -c).collect())
    }

    /// Flip a single coordinate (zig-zag event of type `i`).
    pub fn with_flipped(&self, i: usize) -> Velocity<F> {
        let mut v = self.0.clone();
        v[i] = -v[i];
        Velocity(v)
    }

    /// True when every coordinate is exactly -1 or +1.
    pub fn is_sign_vector(&self) -> bool {
        self.0.iter().all(|&c| c == F::one() || c == -F::one())
    }
}

/// Solution of the constant-velocity dynamics: `x + s v`, componentwise.
pub fn deterministic_flow<F: Scalar>(x: &Position<F>, v: &Velocity<F>, s: F) -> Position<F> {
    assert!(s >= F::zero(), "flow duration must be nonnegative");
    assert_eq!(x.dim(), v.dim(), "position/velocity dimension mismatch");
    Position(
        x.0.iter()
            .zip(&v.0)
            .map(|(&xi, &vi)| xi + s * vi)
            .collect(),
    )
}

pub(crate) fn check_finite<F: Scalar>(x: &Position<F>, v: &Velocity<F>, t: F) -> Result<()> {
    if !x.is_finite() || !v.is_finite() {
        return Err(Error::NonFiniteState {
            t: t.to_real(),
            detail: format!(
                "x = {:?}, v = {:?}",
                x.0.iter().map(|c| c.to_real()).collect::<Vec<_>>(),
                v.0.iter().map(|c| c.to_real()).collect::<Vec<_>>()
            ),
        });
    }
    Ok(())
}
