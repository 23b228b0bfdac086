//! Continuous-time Monte Carlo built on piecewise deterministic Markov
//! processes (PDPs).
//!
//! A PDP moves deterministically between random event times and jumps at
//! events. Two families of samplers are built on that machinery:
//!
//! * **Continuous-time MCMC** ([`ctmcmc`]): pure reflection with refresh,
//!   the bouncy particle sampler and the zig-zag sampler, all targeting a
//!   distribution `pi(x)` through its log-density gradient. Event rates may
//!   be evaluated exactly or estimated from data subsamples (optionally
//!   with control variates) without changing the invariant distribution.
//! * **Continuous-time importance sampling / SMC** ([`cis`]): a weighted
//!   particle whose anchor jumps at Poisson event times and whose weight is
//!   multiplied by `1 + rho/lambda` at each event, targeting a process
//!   specified through its Fokker-Planck operator (the killed-Brownian
//!   posterior process and a Langevin variant are built in), plus a
//!   resampling particle-system driver.
//!
//! The geometric core ([`pdp`]) is generic over the floating-point scalar
//! via [`Scalar`]; the statistical drivers use the concrete [`Real`] alias.

pub mod cis;
pub mod ctmcmc;
pub mod diagnostics;
mod error;
pub mod pdp;
mod rng;
mod scalar;
pub mod targets;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::{Real, Scalar};
