use std::sync::Arc;

use crate::pdp::{
    deterministic_flow, EventKind, Position, RateBound, Skeleton, SkeletonPoint, Velocity,
};
use crate::targets::{cv_rate_envelope, ControlVariateCache, FactorBoundTable, FactorizedTarget};
use crate::{Error, Real, Result, RngStream};

use super::estimator::{estimate_gradient, RateEstimator};
use super::rates::{bps_flip, random_rate};

/// Which continuous-time MCMC process to simulate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerKind {
    /// Full velocity negation at events, optional constant-rate refresh.
    /// Without refresh this is reducible for d > 1.
    PureReflection { refresh_rate: Real },
    /// Bouncy particle sampler: reflect in the (estimated) gradient, with
    /// the mandatory constant-rate refresh.
    Bps { refresh_rate: Real },
    /// Zig-zag: one flip channel per coordinate, velocities in {-1, +1}^d.
    ZigZag,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::PureReflection { .. } => "reflect",
            SamplerKind::Bps { .. } => "bps",
            SamplerKind::ZigZag => "zigzag",
        }
    }

    fn refresh_rate(&self) -> Real {
        match self {
            SamplerKind::PureReflection { refresh_rate } | SamplerKind::Bps { refresh_rate } => {
                *refresh_rate
            }
            SamplerKind::ZigZag => 0.0,
        }
    }

    fn validate(&self, dim: usize, v0: &Velocity<Real>) -> Result<()> {
        match self {
            SamplerKind::PureReflection { refresh_rate } => {
                if *refresh_rate < 0.0 {
                    return Err(Error::Config("refresh rate must be nonnegative".into()));
                }
                if dim > 1 && *refresh_rate == 0.0 {
                    return Err(Error::Config(
                        "pure reflection without refresh explores a single line for d > 1; \
                         this process would be reducible"
                            .into(),
                    ));
                }
                check_unit_speed(v0)
            }
            SamplerKind::Bps { refresh_rate } => {
                if *refresh_rate <= 0.0 {
                    return Err(Error::Config(
                        "the bouncy particle sampler needs a strictly positive refresh rate".into(),
                    ));
                }
                check_unit_speed(v0)
            }
            SamplerKind::ZigZag => {
                if !v0.is_sign_vector() {
                    return Err(Error::Config("zig-zag velocities live in {-1,+1}^d".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_unit_speed(v: &Velocity<Real>) -> Result<()> {
    if (v.speed() - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "fixed-speed samplers need |v| = 1, got {}",
            v.speed()
        )));
    }
    Ok(())
}

/// Thinning envelope supplier for the switching-rate channel(s).
#[derive(Clone)]
pub enum BoundPolicy {
    /// Constant global envelope (an n-max, per-factor-sum or true-max
    /// value). When derived from a bound table the table's search interval
    /// is enforced at every proposal.
    Constant { rate: Real, interval: Option<(Real, Real)> },
    /// Exact linear envelope for an isotropic Gaussian target with the
    /// canonical (exact) rates.
    GaussianCanonical { variance: Real },
    /// Anchored state-dependent envelope for the control-variate
    /// estimator (1-d).
    ControlVariate { cache: Arc<ControlVariateCache>, table: Arc<FactorBoundTable> },
    /// Control-variate envelope inside `|x - x_hat| <= threshold`, constant
    /// `global` outside; pairs with the hybrid estimator.
    Hybrid {
        cache: Arc<ControlVariateCache>,
        table: Arc<FactorBoundTable>,
        threshold: Real,
        global: Real,
    },
}

impl BoundPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BoundPolicy::Constant { .. } => "constant",
            BoundPolicy::GaussianCanonical { .. } => "gaussian",
            BoundPolicy::ControlVariate { .. } => "cv",
            BoundPolicy::Hybrid { .. } => "hybrid",
        }
    }

    fn check_inside(&self, x: &[Real]) -> Result<()> {
        match self {
            BoundPolicy::Constant { interval: Some((lo, hi)), .. } => {
                if x[0] < *lo || x[0] > *hi {
                    Err(Error::OutsideBoundInterval { x: x[0], lo: *lo, hi: *hi })
                } else {
                    Ok(())
                }
            }
            BoundPolicy::ControlVariate { table, .. } | BoundPolicy::Hybrid { table, .. } => {
                table.check_inside(x[0])
            }
            _ => Ok(()),
        }
    }

    /// Envelope for the whole-gradient switching channel along the ray from
    /// `(x, v)` over `[0, horizon)`.
    fn envelope(&self, x: &[Real], v: &[Real], horizon: Real) -> Result<RateBound<Real>> {
        match self {
            BoundPolicy::Constant { rate, .. } => RateBound::constant(*rate, horizon),
            BoundPolicy::GaussianCanonical { variance } => {
                // max{0, v.(x + s v)} / var = max{0, (v.x + |v|^2 s) / var}.
                let vx: Real = v.iter().zip(x).map(|(a, b)| a * b).sum();
                let vv: Real = v.iter().map(|a| a * a).sum();
                RateBound::linear_clipped(vx / variance, vv / variance, horizon)
            }
            BoundPolicy::ControlVariate { cache, table } => {
                cv_rate_envelope(cache, table, x[0], v[0], horizon)
            }
            BoundPolicy::Hybrid { cache, table, threshold, global } => {
                hybrid_envelope(cache, table, *threshold, *global, x[0], v[0], horizon)
            }
        }
    }

    /// Envelope for zig-zag coordinate channel `i`.
    fn coord_envelope(&self, i: usize, x: &[Real], v: &[Real], horizon: Real) -> Result<RateBound<Real>> {
        match self {
            // A constant that dominates the full estimated gradient also
            // dominates each coordinate rate.
            BoundPolicy::Constant { rate, .. } => RateBound::constant(*rate, horizon),
            BoundPolicy::GaussianCanonical { variance } => {
                // max{0, theta_i (x_i + theta_i s)} / var, theta_i^2 = 1.
                RateBound::linear_clipped(v[i] * x[i] / variance, v[i] * v[i] / variance, horizon)
            }
            // 1-d targets only, where the coordinate channel is the whole
            // gradient channel.
            BoundPolicy::ControlVariate { .. } | BoundPolicy::Hybrid { .. } => {
                if i != 0 {
                    return Err(Error::Config(
                        "control-variate envelopes are one-dimensional".into(),
                    ));
                }
                self.envelope(x, v, horizon)
            }
        }
    }
}

/// Piecewise envelope for the hybrid estimator: the anchored V-shape while the
/// ray is within `threshold` of the anchor, the global constant outside.
fn hybrid_envelope(
    cache: &ControlVariateCache,
    table: &FactorBoundTable,
    threshold: Real,
    global: Real,
    x: Real,
    v: Real,
    horizon: Real,
) -> Result<RateBound<Real>> {
    table.check_inside(x)?;
    let x_hat = cache.x_hat[0];
    let nc = cache.n_factors() as Real * table.c_second;
    let ghat = cache.grad_at_hat[0].abs();
    // Breakpoints: crossings of |x + v s - x_hat| = threshold, plus the
    // anchor passage, restricted to (0, horizon).
    let mut cuts = vec![0.0, horizon];
    if v != 0.0 {
        for target_x in [x_hat - threshold, x_hat + threshold, x_hat] {
            let s = (target_x - x) / v;
            if s > 0.0 && s < horizon {
                cuts.push(s);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| *a == *b);
    let mut segments = Vec::with_capacity(cuts.len() - 1);
    for w in cuts.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let mid = 0.5 * (s0 + s1);
        let pos_mid = x + v * mid;
        if (pos_mid - x_hat).abs() <= threshold {
            let pos0 = x + v * s0;
            let dist0 = (pos0 - x_hat).abs();
            // Direction from the midpoint: the segment start may sit exactly
            // on the anchor crossing, where rounding flips its side.
            let approaching = (x_hat - pos_mid) * v > 0.0;
            let slope = if approaching { -nc * v.abs() } else { nc * v.abs() };
            segments.push(crate::pdp::Segment {
                start: s0,
                end: s1,
                a: ghat + nc * dist0,
                b: slope,
            });
        } else {
            segments.push(crate::pdp::Segment { start: s0, end: s1, a: global, b: 0.0 });
        }
    }
    RateBound::from_segments(segments)
}

/// Fresh velocity draw: uniform on the unit sphere (the refresh kernel).
pub fn refresh_velocity(dim: usize, rng: &mut RngStream) -> Velocity<Real> {
    if dim == 1 {
        return Velocity(vec![if rng.bernoulli(0.5) { 1.0 } else { -1.0 }]);
    }
    loop {
        let z: Vec<Real> = (0..dim).map(|_| rng.std_normal()).collect();
        let norm = z.iter().map(|c| c * c).sum::<Real>().sqrt();
        if norm > 1e-12 {
            return Velocity(z.iter().map(|c| c / norm).collect());
        }
    }
}

#[derive(Clone)]
pub struct CtmcmcConfig {
    pub kind: SamplerKind,
    pub estimator: RateEstimator,
    pub bound: BoundPolicy,
    /// Constant excess switching rate added to the canonical/estimated
    /// rates (the ergodicity epsilon); 0 keeps the minimal rates.
    pub extra_rate: Real,
    pub horizon: Real,
}

impl CtmcmcConfig {
    pub fn new(kind: SamplerKind, estimator: RateEstimator, bound: BoundPolicy, horizon: Real) -> Self {
        CtmcmcConfig { kind, estimator, bound, extra_rate: 0.0, horizon }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CostCounters {
    /// Thinning proposals: the per-iteration cost unit.
    pub proposals: u64,
    pub switch_events: u64,
    pub refresh_events: u64,
    /// Per-factor gradient evaluations consumed by rate estimates.
    pub factor_evals: u64,
}

/// Simulate the configured continuous-time MCMC process over
/// `[0, horizon]`, recording every accepted event in the skeleton.
///
/// At each thinning proposal a gradient estimate is drawn (for subsampled
/// estimators), the event fires with probability `rate / envelope`, and on
/// acceptance the sampler's flip is applied; the bouncy flip reuses the same
/// estimate realization that accepted the event. Refresh events come from
/// an independent constant-rate Poisson stream and draw a fresh velocity
/// uniformly on the unit sphere.
pub fn run_ctmcmc(
    cfg: &CtmcmcConfig,
    target: &dyn FactorizedTarget,
    x0: Position<Real>,
    v0: Velocity<Real>,
    rng: &mut RngStream,
) -> Result<(Skeleton<Real>, CostCounters)> {
    let d = target.dim();
    if x0.dim() != d || v0.dim() != d {
        return Err(Error::Config("state dimension does not match the target".into()));
    }
    cfg.kind.validate(d, &v0)?;
    if cfg.extra_rate < 0.0 {
        return Err(Error::Config("extra switching rate must be nonnegative".into()));
    }
    if cfg.horizon <= 0.0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    if matches!(cfg.bound, BoundPolicy::GaussianCanonical { .. })
        && !matches!(cfg.estimator, RateEstimator::Exact)
    {
        return Err(Error::Config(
            "the Gaussian envelope only dominates the exact canonical rates".into(),
        ));
    }

    let is_zigzag = matches!(cfg.kind, SamplerKind::ZigZag);
    let n_factors = target.n_factors();
    let mut points = vec![SkeletonPoint {
        t: 0.0,
        x: x0.clone(),
        v: v0.clone(),
        kind: EventKind::Initial,
    }];
    let mut counters = CostCounters::default();
    let mut x = x0;
    let mut v = v0;
    let mut t = 0.0;

    'epoch: while t < cfg.horizon {
        let rem = cfg.horizon - t;
        let refresh_rate = cfg.kind.refresh_rate();
        let refresh_gap = if refresh_rate > 0.0 {
            rng.exp1::<Real>() / refresh_rate
        } else {
            Real::INFINITY
        };
        let channels: Vec<RateBound<Real>> = if is_zigzag {
            (0..d)
                .map(|i| {
                    cfg.bound
                        .coord_envelope(i, x.coords(), v.coords(), rem)
                        .map(|b| b.plus_constant(cfg.extra_rate))
                })
                .collect::<Result<_>>()?
        } else {
            vec![cfg
                .bound
                .envelope(x.coords(), v.coords(), rem)?
                .plus_constant(cfg.extra_rate)]
        };
        let merged = if channels.len() == 1 {
            channels[0].clone()
        } else {
            RateBound::superpose(&channels)?
        };

        let mut cursor = 0.0;
        loop {
            let budget = rng.exp1::<Real>();
            let proposal = merged.next_arrival(cursor, budget);
            if refresh_gap < rem && proposal.is_none_or(|u| refresh_gap < u) {
                x = deterministic_flow(&x, &v, refresh_gap);
                t += refresh_gap;
                crate::pdp::check_finite(&x, &v, t)?;
                v = refresh_velocity(d, rng);
                counters.refresh_events += 1;
                points.push(SkeletonPoint { t, x: x.clone(), v: v.clone(), kind: EventKind::Refresh });
                continue 'epoch;
            }
            let u = match proposal {
                Some(u) => u,
                None => break 'epoch,
            };
            counters.proposals += 1;
            let x_prop = deterministic_flow(&x, &v, u);
            crate::pdp::check_finite(&x_prop, &v, t + u)?;
            cfg.bound.check_inside(x_prop.coords())?;
            let est = estimate_gradient(&cfg.estimator, target, x_prop.coords(), rng)?;
            est.check_finite(x_prop.coords())?;
            counters.factor_evals += cfg.estimator.factor_evals_per_draw(n_factors);

            let (rate_hat, cap, channel) = if is_zigzag {
                let total = merged.value(u);
                let mut pick = rng.open01::<Real>() * total;
                let mut chosen = d - 1;
                for (i, ch) in channels.iter().enumerate() {
                    pick -= ch.value(u);
                    if pick <= 0.0 {
                        chosen = i;
                        break;
                    }
                }
                let li = (v.coords()[chosen] * est.u[chosen]).max(0.0) + cfg.extra_rate;
                (li, channels[chosen].value(u), Some(chosen))
            } else {
                (
                    random_rate(&est.u, v.coords()) + cfg.extra_rate,
                    merged.value(u),
                    None,
                )
            };
            let slack = 1e-9 * cap.abs().max(1e-12);
            if rate_hat > cap + slack {
                return Err(Error::InvalidBound { at: t + u, rate: rate_hat, bound: cap });
            }
            let accept = cap > 0.0 && rng.open01::<Real>() < (rate_hat / cap).min(1.0);
            if !accept {
                cursor = u;
                continue;
            }

            x = x_prop;
            t += u;
            let (new_v, kind) = match (&cfg.kind, channel) {
                (SamplerKind::ZigZag, Some(i)) => (v.with_flipped(i), EventKind::Flip(i)),
                (SamplerKind::PureReflection { .. }, _) => (v.negated(), EventKind::Reflection),
                (SamplerKind::Bps { .. }, _) => {
                    // Same realization in the acceptance and the flip; a
                    // zero estimate can only fire through the epsilon rate,
                    // where the full negation is the valid involution.
                    let flipped = match bps_flip(&est.u, v.coords()) {
                        Ok(w) => Velocity(w),
                        Err(Error::UndefinedFlip) => v.negated(),
                        Err(e) => return Err(e),
                    };
                    (flipped, EventKind::Reflection)
                }
                _ => unreachable!(),
            };
            v = new_v;
            counters.switch_events += 1;
            points.push(SkeletonPoint { t, x: x.clone(), v: v.clone(), kind });
            continue 'epoch;
        }
    }

    let terminal_x = deterministic_flow(&x, &v, cfg.horizon - t);
    crate::pdp::check_finite(&terminal_x, &v, cfg.horizon)?;
    points.push(SkeletonPoint {
        t: cfg.horizon,
        x: terminal_x,
        v,
        kind: EventKind::Terminal,
    });
    Ok((Skeleton::new(points, cfg.horizon)?, counters))
}
