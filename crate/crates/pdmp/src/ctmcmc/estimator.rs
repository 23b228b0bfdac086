use std::sync::Arc;

use crate::targets::{grad_log_pi, ControlVariateCache, FactorBoundTable, FactorizedTarget};
use crate::{Error, Real, Result, RngStream};

use super::rates::random_rate;

/// How the switching rates see the gradient of the log-target.
#[derive(Clone)]
pub enum RateEstimator {
    /// Full factor sum: the canonical sampler.
    Exact,
    /// `-n grad log pi_I(x)` with `I` uniform; pairs with the
    /// `n max_i bound_i` global envelope.
    SubsampleSimple,
    /// `I` drawn proportional to the per-factor bounds; the realized rate is
    /// capped by `sum_i bound_i`.
    SubsampleNonUniform { table: Arc<FactorBoundTable> },
    /// Control-variate estimator anchored at `x_hat`:
    /// `-grad log pi(x_hat) + n (grad log pi_I(x_hat) - grad log pi_I(x))`.
    SubsampleCv { cache: Arc<ControlVariateCache> },
    /// Control variates inside `|x - x_hat| <= threshold`, simple
    /// subsampling outside.
    Hybrid { cache: Arc<ControlVariateCache>, threshold: Real },
}

impl RateEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            RateEstimator::Exact => "exact",
            RateEstimator::SubsampleSimple => "simple",
            RateEstimator::SubsampleNonUniform { .. } => "nonuniform",
            RateEstimator::SubsampleCv { .. } => "cv",
            RateEstimator::Hybrid { .. } => "hybrid",
        }
    }

    /// Factor evaluations consumed by one draw.
    pub fn factor_evals_per_draw(&self, n_factors: usize) -> u64 {
        match self {
            RateEstimator::Exact => n_factors as u64,
            _ => 1,
        }
    }
}

/// One realization of `U(x)`, an unbiased estimator of `-grad log pi(x)`,
/// together with the factor index that produced it (if any).
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub u: Vec<Real>,
    pub factor: Option<usize>,
}

pub fn estimate_gradient(
    est: &RateEstimator,
    target: &dyn FactorizedTarget,
    x: &[Real],
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    let n = target.n_factors();
    match est {
        RateEstimator::Exact => {
            let g = grad_log_pi(target, x)?;
            Ok(GradientEstimate { u: g.iter().map(|v| -v).collect(), factor: None })
        }
        RateEstimator::SubsampleSimple => {
            let i = rng.index(n);
            Ok(simple_at(target, x, i))
        }
        RateEstimator::SubsampleNonUniform { table } => {
            let i = sample_by_bounds(table, rng);
            Ok(nonuniform_at(target, table, x, i))
        }
        RateEstimator::SubsampleCv { cache } => {
            let i = rng.index(n);
            Ok(cv_at(target, cache, x, i))
        }
        RateEstimator::Hybrid { cache, threshold } => {
            let i = rng.index(n);
            if cache.dist1(x[0]) <= *threshold {
                Ok(cv_at(target, cache, x, i))
            } else {
                Ok(simple_at(target, x, i))
            }
        }
    }
}

fn simple_at(target: &dyn FactorizedTarget, x: &[Real], i: usize) -> GradientEstimate {
    let n = target.n_factors() as Real;
    let mut g = vec![0.0; target.dim()];
    target.grad_log_factor(i, x, &mut g);
    GradientEstimate { u: g.iter().map(|v| -n * v).collect(), factor: Some(i) }
}

fn cv_at(
    target: &dyn FactorizedTarget,
    cache: &ControlVariateCache,
    x: &[Real],
    i: usize,
) -> GradientEstimate {
    let n = target.n_factors() as Real;
    let mut g = vec![0.0; target.dim()];
    target.grad_log_factor(i, x, &mut g);
    let u = cache
        .grad_at_hat
        .iter()
        .zip(&cache.per_factor_grad_at_hat[i])
        .zip(&g)
        .map(|((ghat, gi_hat), gi)| -ghat + n * (gi_hat - gi))
        .collect();
    GradientEstimate { u, factor: Some(i) }
}

fn nonuniform_at(
    target: &dyn FactorizedTarget,
    table: &FactorBoundTable,
    x: &[Real],
    i: usize,
) -> GradientEstimate {
    let total: Real = table.per_factor_max_abs_grad.iter().sum();
    let mut g = vec![0.0; target.dim()];
    target.grad_log_factor(i, x, &mut g);
    let scale = total / table.per_factor_max_abs_grad[i];
    GradientEstimate { u: g.iter().map(|v| -scale * v).collect(), factor: Some(i) }
}

fn sample_by_bounds(table: &FactorBoundTable, rng: &mut RngStream) -> usize {
    let total: Real = table.per_factor_max_abs_grad.iter().sum();
    let mut u = rng.open01::<Real>() * total;
    for (i, b) in table.per_factor_max_abs_grad.iter().enumerate() {
        u -= b;
        if u <= 0.0 {
            return i;
        }
    }
    table.per_factor_max_abs_grad.len() - 1
}

/// All possible realizations with their probabilities, for exhaustive
/// unbiasedness checks and expected-rate curves.
pub fn enumerate_gradient_estimates(
    est: &RateEstimator,
    target: &dyn FactorizedTarget,
    x: &[Real],
) -> Result<Vec<(Real, GradientEstimate)>> {
    let n = target.n_factors();
    match est {
        RateEstimator::Exact => {
            let g = grad_log_pi(target, x)?;
            Ok(vec![(1.0, GradientEstimate { u: g.iter().map(|v| -v).collect(), factor: None })])
        }
        RateEstimator::SubsampleSimple => Ok((0..n)
            .map(|i| (1.0 / n as Real, simple_at(target, x, i)))
            .collect()),
        RateEstimator::SubsampleNonUniform { table } => {
            let total: Real = table.per_factor_max_abs_grad.iter().sum();
            Ok((0..n)
                .map(|i| {
                    (table.per_factor_max_abs_grad[i] / total, nonuniform_at(target, table, x, i))
                })
                .collect())
        }
        RateEstimator::SubsampleCv { cache } => Ok((0..n)
            .map(|i| (1.0 / n as Real, cv_at(target, cache, x, i)))
            .collect()),
        RateEstimator::Hybrid { cache, threshold } => {
            if cache.dist1(x[0]) <= *threshold {
                Ok((0..n)
                    .map(|i| (1.0 / n as Real, cv_at(target, cache, x, i)))
                    .collect())
            } else {
                Ok((0..n)
                    .map(|i| (1.0 / n as Real, simple_at(target, x, i)))
                    .collect())
            }
        }
    }
}

/// Exhaustive-expectation of the randomized rate `E max{0, v . U(x)}`.
pub fn expected_random_rate(
    est: &RateEstimator,
    target: &dyn FactorizedTarget,
    x: &[Real],
    v: &[Real],
) -> Result<Real> {
    Ok(enumerate_gradient_estimates(est, target, x)?
        .iter()
        .map(|(p, e)| p * random_rate(&e.u, v))
        .sum())
}

impl GradientEstimate {
    /// Sanity check used by the error paths: a non-finite realization names
    /// the factor it came from.
    pub fn check_finite(&self, x: &[Real]) -> Result<()> {
        if self.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFactor {
                factor: self.factor.unwrap_or(0),
                at: x.to_vec(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{
        build_cv_cache, factor_bound_table, simulate_mixture_data, MixtureTarget,
    };
    use crate::RngStream;

    struct TwoFactor;

    impl FactorizedTarget for TwoFactor {
        fn dim(&self) -> usize {
            1
        }
        fn n_factors(&self) -> usize {
            2
        }
        fn log_factor(&self, i: usize, x: &[Real]) -> Real {
            [1.0, 3.0][i] * x[0]
        }
        fn grad_log_factor(&self, i: usize, _x: &[Real], out: &mut [Real]) {
            out[0] = [1.0, 3.0][i];
        }
    }

    #[test]
    fn simple_two_factor_values_and_mean() {
        let t = TwoFactor;
        let all = enumerate_gradient_estimates(&RateEstimator::SubsampleSimple, &t, &[0.0]).unwrap();
        let mut vals: Vec<f64> = all.iter().map(|(_, e)| e.u[0]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals, vec![-6.0, -2.0]);
        let mean: f64 = all.iter().map(|(p, e)| p * e.u[0]).sum();
        assert_eq!(mean, -4.0);
    }

    fn mixture_setup(n: usize) -> (MixtureTarget, Arc<FactorBoundTable>, Arc<ControlVariateCache>) {
        let mut rng = RngStream::new(60, 0);
        let ys = simulate_mixture_data(n, 4.0, 0.95, &mut rng);
        let target = MixtureTarget::new(ys, 0.95);
        let table = Arc::new(factor_bound_table(&target, target.bound_search_interval()).unwrap());
        let cache = Arc::new(build_cv_cache(&target, &[3.9]).unwrap());
        (target, table, cache)
    }

    #[test]
    fn every_estimator_is_unbiased_by_enumeration() {
        let (target, table, cache) = mixture_setup(50);
        let exact = grad_log_pi(&target, &[2.2]).unwrap();
        for est in [
            RateEstimator::SubsampleSimple,
            RateEstimator::SubsampleNonUniform { table: table.clone() },
            RateEstimator::SubsampleCv { cache: cache.clone() },
            RateEstimator::Hybrid { cache: cache.clone(), threshold: 5.0 },
        ] {
            let all = enumerate_gradient_estimates(&est, &target, &[2.2]).unwrap();
            let psum: f64 = all.iter().map(|(p, _)| p).sum();
            assert!((psum - 1.0).abs() < 1e-12, "{}", est.name());
            let mean: f64 = all.iter().map(|(p, e)| p * e.u[0]).sum();
            let expect = -exact[0];
            assert!(
                (mean - expect).abs() <= 1e-10 * expect.abs().max(1.0),
                "{}: mean {mean} vs exact {expect}",
                est.name()
            );
        }
    }

    #[test]
    fn cv_estimator_is_exact_at_the_anchor() {
        let (target, _, cache) = mixture_setup(40);
        let x = cache.x_hat.clone();
        let all = enumerate_gradient_estimates(
            &RateEstimator::SubsampleCv { cache: cache.clone() },
            &target,
            &x,
        )
        .unwrap();
        for (_, e) in &all {
            assert!(
                (e.u[0] - (-cache.grad_at_hat[0])).abs() < 1e-12,
                "zero variance at the anchor"
            );
        }
    }

    #[test]
    fn rate_identity_and_jensen_hold_exhaustively() {
        let (target, table, cache) = mixture_setup(60);
        let ests = [
            RateEstimator::SubsampleSimple,
            RateEstimator::SubsampleNonUniform { table },
            RateEstimator::SubsampleCv { cache },
        ];
        let exact = RateEstimator::Exact;
        let mut rng = RngStream::new(61, 0);
        for _ in 0..50 {
            let x = [rng.std_normal::<f64>() * 2.0 + 2.0];
            let v = [if rng.bernoulli(0.5) { 1.0 } else { -1.0 }];
            let g = grad_log_pi(&target, &x).unwrap();
            let canon = expected_random_rate(&exact, &target, &x, &v).unwrap();
            for est in &ests {
                let fwd = expected_random_rate(est, &target, &x, &v).unwrap();
                let bwd = expected_random_rate(est, &target, &x, &[-v[0]]).unwrap();
                // E lambda(x,v) - E lambda(x,-v) = -v . grad log pi.
                let expect = -v[0] * g[0];
                assert!(
                    (fwd - bwd - expect).abs() <= 1e-10 * expect.abs().max(1.0),
                    "{}",
                    est.name()
                );
                // Jensen: expected randomized rate dominates the canonical one.
                assert!(fwd >= canon - 1e-10 * canon.max(1.0), "{}", est.name());
            }
        }
    }

    #[test]
    fn cv_variance_smaller_near_anchor_larger_far_away() {
        let (target, _, cache) = mixture_setup(150);
        let var_of = |est: &RateEstimator, x: &[Real]| -> f64 {
            let all = enumerate_gradient_estimates(est, &target, x).unwrap();
            let mean: f64 = all.iter().map(|(p, e)| p * e.u[0]).sum();
            all.iter().map(|(p, e)| p * (e.u[0] - mean) * (e.u[0] - mean)).sum()
        };
        let cv = RateEstimator::SubsampleCv { cache: cache.clone() };
        let near = [cache.x_hat[0] + 0.1];
        assert!(var_of(&cv, &near) < var_of(&RateEstimator::SubsampleSimple, &near));
        let far = [cache.x_hat[0] + 20.0];
        assert!(var_of(&cv, &far) > var_of(&RateEstimator::SubsampleSimple, &far));
    }
}
