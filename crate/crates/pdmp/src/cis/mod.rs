//! Continuous-time importance sampling: a weighted particle whose anchor
//! jumps at Poisson event times, with the weight multiplied by
//! `1 + rho / lambda(s)` at each event, plus the resampling particle-system
//! driver and the subsampling cost/variance study.

mod process;
mod proposal;
mod rho;
mod smc;
mod step;
mod variance;

pub use process::{incremental_rho_generic, rho_via_generator, TargetProcess};
pub use proposal::Proposal;
pub use rho::{
    langevin_rho, langevin_rho_subsample_at, scale_rho, scale_rho_cv, scale_rho_cv_at,
    scale_rho_subsample, scale_rho_subsample_at, GenericRho, IncrementalRho, LangevinRho,
    RhoEstimator, ScaleRho,
};
pub use smc::{resample, run_cis, run_smc, CisRunOutput, InitialDist, ParticleSystem, SmcConfig, SmcOutput, SmcSnapshot};
pub use step::{cis_step, propagate, CisParticle, CisStepStats, EventRatePolicy};
pub use variance::{variance_study, VariancePolicy, VarianceStudyConfig, VarianceStudyRow};

pub use crate::diagnostics::weighted_ess;
