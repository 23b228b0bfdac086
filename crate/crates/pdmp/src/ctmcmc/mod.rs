//! Continuous-time MCMC: pure reflection with refresh, the bouncy particle
//! sampler and the zig-zag sampler, with exact or subsampled event rates.

mod estimator;
mod output;
mod rates;
mod sampler;

pub use estimator::{
    enumerate_gradient_estimates, estimate_gradient, expected_random_rate, GradientEstimate,
    RateEstimator,
};
pub use output::{discretized_estimate, path_integral_estimate, path_integral_quadratic, sample_coordinate};
pub use rates::{bps_flip, canonical_rate, random_rate, zigzag_coordinate_rates};
pub use sampler::{refresh_velocity, run_ctmcmc, BoundPolicy, CostCounters, CtmcmcConfig, SamplerKind};

pub use crate::diagnostics::ess;
