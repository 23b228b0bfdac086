//! Target-distribution abstraction for factorized posteriors
//! `pi(x) = prod_i pi_i(x)`, the Gaussian-mixture example and the event-rate
//! bound tables used for thinning.

mod bounds;
mod cache;
mod gaussian;
mod mixture;
mod quadrature;

pub use bounds::{
    factor_bound_table, global_rate_bound_simple, global_rate_bound_sum, true_max_grad_bound,
    FactorBoundTable,
};
pub use cache::{build_cv_cache, cv_rate_bound, cv_rate_envelope, ControlVariateCache};
pub use gaussian::IsoGaussian;
pub use mixture::{dataset_hash, load_data_csv, save_data_csv, simulate_mixture_data, MixtureTarget};
pub use quadrature::PosteriorQuadrature;

use crate::{Error, Real, Result};

/// A posterior `pi(x) = prod_{i=1}^n pi_i(x)` exposed through per-factor
/// log-densities and their derivatives.
///
/// Factors are indexed `0..n_factors()`. Log-densities may omit additive
/// constants; everything downstream depends only on derivatives or on
/// differences of log-densities.
pub trait FactorizedTarget: Send + Sync {
    fn dim(&self) -> usize;

    fn n_factors(&self) -> usize;

    /// `log pi_i(x)` up to a constant.
    fn log_factor(&self, i: usize, x: &[Real]) -> Real;

    /// Gradient of `log pi_i` written into `out`.
    fn grad_log_factor(&self, i: usize, x: &[Real], out: &mut [Real]);

    /// Whether diagonal second derivatives are available.
    fn has_second_derivs(&self) -> bool {
        false
    }

    /// Diagonal of the Hessian of `log pi_i`, written into `out`.
    fn second_deriv_diag_factor(&self, _i: usize, _x: &[Real], _out: &mut [Real]) {
        panic!("target does not expose second derivatives");
    }
}

/// `grad log pi(x)` as the exact factor sum. Fails with the factor index if
/// any factor produces a non-finite value.
pub fn grad_log_pi(target: &dyn FactorizedTarget, x: &[Real]) -> Result<Vec<Real>> {
    let d = target.dim();
    let mut sum = vec![0.0; d];
    let mut g = vec![0.0; d];
    for i in 0..target.n_factors() {
        target.grad_log_factor(i, x, &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFactor { factor: i, at: x.to_vec() });
        }
        for (s, gi) in sum.iter_mut().zip(&g) {
            *s += gi;
        }
    }
    Ok(sum)
}

/// Diagonal second derivatives of `log pi(x)` as the factor sum.
pub fn second_deriv_diag(target: &dyn FactorizedTarget, x: &[Real]) -> Result<Vec<Real>> {
    if !target.has_second_derivs() {
        return Err(Error::Domain("second derivatives unavailable for this target".into()));
    }
    let d = target.dim();
    let mut sum = vec![0.0; d];
    let mut h = vec![0.0; d];
    for i in 0..target.n_factors() {
        target.second_deriv_diag_factor(i, x, &mut h);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFactor { factor: i, at: x.to_vec() });
        }
        for (s, hi) in sum.iter_mut().zip(&h) {
            *s += hi;
        }
    }
    Ok(sum)
}

/// Unnormalized `log pi(x)`.
pub fn log_pi_unnorm(target: &dyn FactorizedTarget, x: &[Real]) -> Real {
    (0..target.n_factors()).map(|i| target.log_factor(i, x)).sum()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Central finite difference of `log pi` (step 1e-5), the generic oracle
    /// for analytic gradients.
    pub fn fd_grad(target: &dyn FactorizedTarget, x: &[Real]) -> Vec<Real> {
        let h = 1e-5;
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (log_pi_unnorm(target, &xp) - log_pi_unnorm(target, &xm)) / (2.0 * h)
            })
            .collect()
    }

    /// Five-point central second difference: fourth-order truncation lets a
    /// larger step beat the cancellation noise in log-density sums.
    pub fn fd_second_diag(target: &dyn FactorizedTarget, x: &[Real]) -> Vec<Real> {
        let h = 1e-3;
        (0..x.len())
            .map(|j| {
                let at = |delta: Real| {
                    let mut xx = x.to_vec();
                    xx[j] += delta;
                    log_pi_unnorm(target, &xx)
                };
                (-at(2.0 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2.0 * h))
                    / (12.0 * h * h)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    #[test]
    fn std_normal_gradient() {
        let t = IsoGaussian::standard(1);
        assert_eq!(grad_log_pi(&t, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(grad_log_pi(&t, &[2.0]).unwrap(), vec![-2.0]);
    }

    #[test]
    fn mixture_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(21, 0);
        let ys = simulate_mixture_data(40, 4.0, 0.95, &mut rng);
        let target = MixtureTarget::new(ys, 0.95);
        for _ in 0..100 {
            let x = [rng.std_normal::<f64>() * 4.0];
            let g = grad_log_pi(&target, &x).unwrap();
            let fd = testutil::fd_grad(&target, &x);
            let scale = fd[0].abs().max(1.0);
            assert!(
                (g[0] - fd[0]).abs() / scale < 1e-5,
                "x={} analytic={} fd={}",
                x[0],
                g[0],
                fd[0]
            );
        }
    }

    #[test]
    fn mixture_second_derivs_match_finite_differences() {
        let mut rng = RngStream::new(22, 0);
        let ys = simulate_mixture_data(30, 4.0, 0.95, &mut rng);
        let target = MixtureTarget::new(ys, 0.95);
        for _ in 0..100 {
            let x = [rng.std_normal::<f64>() * 3.0];
            let h = second_deriv_diag(&target, &x).unwrap();
            let fd = testutil::fd_second_diag(&target, &x);
            let scale = fd[0].abs().max(1.0);
            assert!(
                (h[0] - fd[0]).abs() / scale < 1e-5,
                "x={} analytic={} fd={}",
                x[0],
                h[0],
                fd[0]
            );
        }
    }

    #[test]
    fn gradient_sum_is_exact_factor_sum() {
        let mut rng = RngStream::new(23, 0);
        let ys = simulate_mixture_data(25, 4.0, 0.95, &mut rng);
        let target = MixtureTarget::new(ys, 0.95);
        let x = [1.3];
        let g = grad_log_pi(&target, &x).unwrap();
        let mut manual = 0.0;
        let mut buf = [0.0];
        for i in 0..target.n_factors() {
            target.grad_log_factor(i, &x, &mut buf);
            manual += buf[0];
        }
        // Same summation order: bitwise identical.
        assert_eq!(g[0], manual);
    }
}
