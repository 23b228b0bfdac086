use std::sync::Arc;

use crate::diagnostics::weighted_ess;
use crate::targets::PosteriorQuadrature;
use crate::{Error, Real, Result, RngStream};

use super::proposal::Proposal;
use super::rho::IncrementalRho;
use super::step::{propagate, CisParticle, CisStepStats, EventRatePolicy};

/// Population of CIS particles between resampling barriers.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub particles: Vec<CisParticle>,
}

impl ParticleSystem {
    pub fn weights(&self) -> Vec<Real> {
        self.particles.iter().map(|p| p.w).collect()
    }
}

/// Multinomial resampling proportional to `|w|`, sign-preserving: particle
/// `i` copies ancestor `k_i` and receives weight
/// `sign(w_{k_i}) * mean |w|`, which keeps the resampling unbiased for
/// signed weights and leaves `E|W|` unchanged.
pub fn resample(system: &ParticleSystem, rng: &mut RngStream) -> Result<ParticleSystem> {
    let n = system.particles.len();
    let abs: Vec<Real> = system.particles.iter().map(|p| p.w.abs()).collect();
    let total: Real = abs.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSystem("all particle weights are zero".into()));
    }
    let mean_abs = total / n as Real;
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for a in &abs {
        acc += a;
        cum.push(acc);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.open01::<Real>() * total;
        let k = cum.partition_point(|&c| c < u).min(n - 1);
        let ancestor = &system.particles[k];
        out.push(CisParticle {
            y: ancestor.y.clone(),
            w: ancestor.w.signum() * mean_abs,
            s: ancestor.s,
            t: ancestor.t,
        });
    }
    Ok(ParticleSystem { particles: out })
}

/// Where particles start.
#[derive(Clone)]
pub enum InitialDist {
    /// Zero-mean Gaussian with the given standard deviation (the prior).
    GaussianPrior { sd: Real },
    Uniform { lo: Real, hi: Real },
    /// Draws from a quadrature-tabulated posterior.
    Quadrature(Arc<PosteriorQuadrature>),
    Point(Vec<Real>),
}

impl InitialDist {
    pub fn sample(&self, dim: usize, rng: &mut RngStream) -> Vec<Real> {
        match self {
            InitialDist::GaussianPrior { sd } => {
                (0..dim).map(|_| sd * rng.std_normal::<Real>()).collect()
            }
            InitialDist::Uniform { lo, hi } => {
                (0..dim).map(|_| lo + (hi - lo) * rng.open01::<Real>()).collect()
            }
            InitialDist::Quadrature(q) => vec![q.sample(rng)],
            InitialDist::Point(x) => x.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmcConfig {
    pub n_particles: usize,
    /// Resampling-schedule spacing.
    pub h: Real,
    /// Number of schedule steps; the run covers `[0, k_steps * h]`.
    pub k_steps: usize,
    /// Resample when the weight ESS drops below this.
    pub ess_threshold: Real,
}

/// Weighted population snapshot at one schedule time (before resampling).
#[derive(Debug, Clone)]
pub struct SmcSnapshot {
    pub t: Real,
    pub xs: Vec<Vec<Real>>,
    pub ws: Vec<Real>,
}

#[derive(Debug, Clone)]
pub struct SmcOutput {
    pub snapshots: Vec<SmcSnapshot>,
    pub resampled_at: Vec<Real>,
    pub stats: CisStepStats,
    /// Fraction of weight updates that flipped the sign.
    pub negative_update_fraction: Real,
}

impl SmcOutput {
    /// Weighted draws pooled over snapshots with `t >= from`.
    pub fn pooled_weighted(&self, from: Real) -> (Vec<Real>, Vec<Real>) {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for snap in &self.snapshots {
            if snap.t >= from {
                for (x, w) in snap.xs.iter().zip(&snap.ws) {
                    xs.push(x[0]);
                    ws.push(*w);
                }
            }
        }
        (xs, ws)
    }
}

/// Continuous-time SMC: propagate every particle by CIS over each schedule
/// interval, then resample (sign-preserving multinomial) whenever the
/// weight ESS falls below the threshold.
///
/// Each particle-interval pair draws from its own derived stream, so the
/// result does not depend on traversal order; the run owns stream ids
/// `base+1 ..= base+1 + (k_steps+1) * n_particles` where `base` is the
/// stream of `rng`.
pub fn run_smc(
    proposal: &Proposal,
    rho: &dyn IncrementalRho,
    policy: &EventRatePolicy,
    init: &InitialDist,
    dim: usize,
    cfg: &SmcConfig,
    rng: &mut RngStream,
) -> Result<SmcOutput> {
    if cfg.n_particles < 2 {
        return Err(Error::Config("particle systems need at least two particles".into()));
    }
    if cfg.h <= 0.0 || cfg.k_steps == 0 {
        return Err(Error::Config("schedule must cover a positive interval".into()));
    }
    let n = cfg.n_particles;
    let base = rng.stream();
    let mut system = ParticleSystem {
        particles: (0..n).map(|_| CisParticle::new(init.sample(dim, rng))).collect(),
    };
    let mut stats = CisStepStats::default();
    let mut snapshots = Vec::with_capacity(cfg.k_steps);
    let mut resampled_at = Vec::new();
    for step in 1..=cfg.k_steps {
        let until = cfg.h * step as Real;
        for (i, particle) in system.particles.iter_mut().enumerate() {
            let mut prng = rng.with_stream(base + 1 + ((step - 1) * n + i) as u64);
            *particle = propagate(particle, proposal, rho, policy, until, &mut prng, &mut stats)?;
        }
        snapshots.push(SmcSnapshot {
            t: until,
            xs: system.particles.iter().map(|p| p.y.clone()).collect(),
            ws: system.particles.iter().map(|p| p.w).collect(),
        });
        let ess = weighted_ess(&system.weights());
        if ess < cfg.ess_threshold {
            let mut rrng = rng.with_stream(base + 1 + (cfg.k_steps * n + step) as u64);
            system = resample(&system, &mut rrng)?;
            resampled_at.push(until);
        }
    }
    let negative_update_fraction = if stats.events == 0 {
        0.0
    } else {
        stats.sign_flips as Real / stats.events as Real
    };
    Ok(SmcOutput { snapshots, resampled_at, stats, negative_update_fraction })
}

/// Single-particle CIS run with snapshots every `spacing` units: the plain
/// (resampling-free) importance sampler.
#[derive(Debug, Clone)]
pub struct CisRunOutput {
    /// `(t, materialized draw, weight)` at each snapshot time.
    pub snapshots: Vec<(Real, Vec<Real>, Real)>,
    pub stats: CisStepStats,
}

impl CisRunOutput {
    /// Self-normalized weighted mean of the first coordinate over
    /// snapshots with `t >= from`.
    pub fn weighted_mean(&self, from: Real) -> Real {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, x, w) in &self.snapshots {
            if *t >= from {
                num += w * x[0];
                den += w;
            }
        }
        num / den
    }
}

pub fn run_cis(
    proposal: &Proposal,
    rho: &dyn IncrementalRho,
    policy: &EventRatePolicy,
    y0: Vec<Real>,
    horizon: Real,
    spacing: Real,
    rng: &mut RngStream,
) -> Result<CisRunOutput> {
    if spacing <= 0.0 || horizon <= 0.0 {
        return Err(Error::Config("horizon and spacing must be positive".into()));
    }
    let mut particle = CisParticle::new(y0);
    let mut stats = CisStepStats::default();
    let mut snapshots = Vec::new();
    let mut t = spacing;
    while t <= horizon + 1e-12 {
        particle = propagate(&particle, proposal, rho, policy, t.min(horizon), rng, &mut stats)?;
        snapshots.push((particle.t, particle.y.clone(), particle.w));
        t += spacing;
    }
    Ok(CisRunOutput { snapshots, stats })
}
