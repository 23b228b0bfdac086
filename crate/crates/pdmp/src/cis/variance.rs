use std::sync::Arc;

use crate::targets::{build_cv_cache, simulate_mixture_data, MixtureTarget, PosteriorQuadrature};
use crate::{Real, Result, RngStream};

use super::proposal::Proposal;
use super::rho::{IncrementalRho, RhoEstimator, ScaleRho};
use super::step::{propagate, CisParticle, CisStepStats, EventRatePolicy};

/// Estimator/rate pairings compared by the subsampling cost study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariancePolicy {
    /// Exact rho (all n points per event), constant event rate n/2.
    NoSubsampling,
    /// Anchored single-index rho, event rate `2n + 4 n^2 (y - x_hat)^2`.
    ControlVariate,
}

impl VariancePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            VariancePolicy::NoSubsampling => "nosub",
            VariancePolicy::ControlVariate => "cv",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarianceStudyConfig {
    pub ns: Vec<usize>,
    /// Anchor offsets in posterior standard deviations (control-variate
    /// rows only; 0 puts the anchor at the mode).
    pub xhat_offsets_sd: Vec<Real>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct VarianceStudyRow {
    pub n: usize,
    pub policy: String,
    pub xhat_offset: Real,
    pub var_wh: Real,
    /// Mean data-point accesses per replicate.
    pub data_accesses: Real,
    pub replicates: usize,
    /// Mean of the rho estimate at the initial anchor: a stationarity
    /// diagnostic (near 0 when the start distribution is the posterior).
    pub mean_rho_init: Real,
}

/// One replicate: a particle drawn from the posterior propagated for time
/// `h = 1/n`. Returns `(W_h, events, data accesses, rho at init)`.
/// The initial-anchor rho evaluation is part of the per-replicate cost, so
/// a no-subsampling replicate accesses exactly `n * (events + 1)` points.
pub fn variance_replicate(
    rho: &dyn IncrementalRho,
    policy: &EventRatePolicy,
    quad: &PosteriorQuadrature,
    h: Real,
    rng: &mut RngStream,
) -> Result<(Real, u64, u64, Real)> {
    let x0 = vec![quad.sample(rng)];
    let mut stats = CisStepStats::default();
    let rho_init = rho.eval(&x0, &x0, h, rng)?;
    let mut accesses = rho.data_accesses();
    let particle = propagate(
        &CisParticle::new(x0),
        &Proposal::Brownian,
        rho,
        policy,
        h,
        rng,
        &mut stats,
    )?;
    accesses += stats.data_accesses;
    Ok((particle.w, stats.events, accesses, rho_init))
}

/// The weight-variance / data-access study: for each `n`, datasets of size
/// `n` from the mixture model, `h = 1/n`, comparing no-subsampling against
/// control-variate subsampling with the anchor at the mode (plus requested
/// offsets). Reports `Var(W_h)` and the mean number of data points
/// accessed per weight estimate.
pub fn variance_study(cfg: &VarianceStudyConfig) -> Result<Vec<VarianceStudyRow>> {
    let mut rows = Vec::new();
    for (ni, &n) in cfg.ns.iter().enumerate() {
        let mut data_rng = RngStream::new(cfg.seed, 1000 + ni as u64);
        let ys = simulate_mixture_data(n, 4.0, 0.95, &mut data_rng);
        let target = MixtureTarget::new(ys, 0.95);
        let quad = PosteriorQuadrature::build(&target, -30.0, 30.0)?;
        let h = 1.0 / n as Real;
        let nf = n as Real;

        {
            let rho = ScaleRho { target: &target, estimator: RhoEstimator::Exact };
            let policy = EventRatePolicy::Constant(nf / 2.0);
            rows.push(run_cell(
                &rho,
                &policy,
                &quad,
                h,
                n,
                VariancePolicy::NoSubsampling.name(),
                0.0,
                cfg,
                (ni * 1000) as u64,
            )?);
        }

        for (oi, &offset) in cfg.xhat_offsets_sd.iter().enumerate() {
            let x_hat = quad.mode() + offset * quad.sd();
            let cache = Arc::new(build_cv_cache(&target, &[x_hat])?);
            let rho = ScaleRho {
                target: &target,
                estimator: RhoEstimator::SubsampleCv { cache },
            };
            let policy = EventRatePolicy::AnchorQuadratic {
                base: 2.0 * nf,
                quad: 4.0 * nf * nf,
                x_hat,
            };
            rows.push(run_cell(
                &rho,
                &policy,
                &quad,
                h,
                n,
                VariancePolicy::ControlVariate.name(),
                offset,
                cfg,
                (ni * 1000 + 100 + oi * 10) as u64,
            )?);
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    rho: &dyn IncrementalRho,
    policy: &EventRatePolicy,
    quad: &PosteriorQuadrature,
    h: Real,
    n: usize,
    policy_name: &str,
    offset: Real,
    cfg: &VarianceStudyConfig,
    stream_base: u64,
) -> Result<VarianceStudyRow> {
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_acc = 0.0;
    let mut sum_rho0 = 0.0;
    for rep in 0..cfg.replicates {
        let mut rng = RngStream::new(cfg.seed, (stream_base as usize * cfg.replicates + rep) as u64);
        let (w, _events, accesses, rho0) = variance_replicate(rho, policy, quad, h, &mut rng)?;
        sum_w += w;
        sum_w2 += w * w;
        sum_acc += accesses as Real;
        sum_rho0 += rho0;
    }
    let r = cfg.replicates as Real;
    let mean_w = sum_w / r;
    Ok(VarianceStudyRow {
        n,
        policy: policy_name.into(),
        xhat_offset: offset,
        var_wh: (sum_w2 / r - mean_w * mean_w).max(0.0) * r / (r - 1.0),
        data_accesses: sum_acc / r,
        replicates: cfg.replicates,
        mean_rho_init: sum_rho0 / r,
    })
}
