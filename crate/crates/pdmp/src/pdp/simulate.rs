use crate::{Result, RngStream, Scalar};

use super::{
    check_finite, deterministic_flow, first_event_thinning, EventKind, Position, RateBound,
    Skeleton, SkeletonPoint, Velocity,
};

/// Outcome of applying a jump kernel at an accepted event.
#[derive(Debug, Clone)]
pub struct Transition<F> {
    pub x: Position<F>,
    pub v: Velocity<F>,
    pub kind: EventKind,
}

/// Cost counters for one simulated path. Proposals are the iteration-cost
/// metric; accepted events are a subset of them.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationCost {
    pub proposals: u64,
    pub events: u64,
}

/// Simulate a PDP with constant-velocity flow over `[0, horizon]`.
///
/// Iterates: draw the next event by thinning `rate` against the envelope
/// from `bound_factory` (built fresh after every state change, valid along
/// the current ray), flow deterministically to the event, then apply
/// `transition`. Every accepted event is recorded as a skeleton point and a
/// terminal point is appended at the horizon.
///
/// `rate(x, v, u)` is the event rate at elapsed time `u` along the ray from
/// `(x, v)`; it must be dominated by the factory's envelope, which is
/// checked at every proposal. Non-finite states abort with a diagnostic
/// rather than being clamped.
pub fn simulate_pdp<F, RateFn, BoundFn, TransFn>(
    x0: Position<F>,
    v0: Velocity<F>,
    mut rate: RateFn,
    mut bound_factory: BoundFn,
    mut transition: TransFn,
    horizon: F,
    rng: &mut RngStream,
) -> Result<(Skeleton<F>, SimulationCost)>
where
    F: Scalar,
    RateFn: FnMut(&Position<F>, &Velocity<F>, F) -> F,
    BoundFn: FnMut(&Position<F>, &Velocity<F>, F) -> Result<RateBound<F>>,
    TransFn: FnMut(&Position<F>, &Velocity<F>, &mut RngStream) -> Transition<F>,
{
    assert!(horizon > F::zero(), "horizon must be positive");
    check_finite(&x0, &v0, F::zero())?;
    let mut points = vec![SkeletonPoint {
        t: F::zero(),
        x: x0.clone(),
        v: v0.clone(),
        kind: EventKind::Initial,
    }];
    let mut cost = SimulationCost::default();
    let mut t = F::zero();
    let mut x = x0;
    let mut v = v0;
    loop {
        let remaining = horizon - t;
        if remaining <= F::zero() {
            break;
        }
        let bound = bound_factory(&x, &v, remaining)?;
        let (xr, vr) = (x.clone(), v.clone());
        let outcome = first_event_thinning(&bound, |u| rate(&xr, &vr, u), rng)?;
        cost.proposals += outcome.n_proposals;
        let s = match outcome.event {
            Some(s) => s,
            None => break,
        };
        let at_event = deterministic_flow(&x, &v, s);
        t += s;
        check_finite(&at_event, &v, t)?;
        let next = transition(&at_event, &v, rng);
        check_finite(&next.x, &next.v, t)?;
        cost.events += 1;
        points.push(SkeletonPoint {
            t,
            x: next.x.clone(),
            v: next.v.clone(),
            kind: next.kind,
        });
        x = next.x;
        v = next.v;
    }
    let terminal_x = deterministic_flow(&x, &v, horizon - t);
    check_finite(&terminal_x, &v, horizon)?;
    points.push(SkeletonPoint {
        t: horizon,
        x: terminal_x,
        v,
        kind: EventKind::Terminal,
    });
    Ok((Skeleton::new(points, horizon)?, cost))
}
