use crate::Real;

use super::FactorizedTarget;

/// Isotropic Gaussian `N(0, variance * I_d)` as a single-factor target.
/// Closed-form stationarity oracle for the sampler tests.
#[derive(Debug, Clone)]
pub struct IsoGaussian {
    dim: usize,
    variance: Real,
}

impl IsoGaussian {
    pub fn new(dim: usize, variance: Real) -> Self {
        assert!(dim >= 1 && variance > 0.0);
        IsoGaussian { dim, variance }
    }

    pub fn standard(dim: usize) -> Self {
        IsoGaussian::new(dim, 1.0)
    }

    pub fn variance(&self) -> Real {
        self.variance
    }
}

impl FactorizedTarget for IsoGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_factors(&self) -> usize {
        1
    }

    fn log_factor(&self, _i: usize, x: &[Real]) -> Real {
        -x.iter().map(|&c| c * c).sum::<Real>() / (2.0 * self.variance)
    }

    fn grad_log_factor(&self, _i: usize, x: &[Real], out: &mut [Real]) {
        for (o, &c) in out.iter_mut().zip(x) {
            *o = -c / self.variance;
        }
    }

    fn has_second_derivs(&self) -> bool {
        true
    }

    fn second_deriv_diag_factor(&self, _i: usize, _x: &[Real], out: &mut [Real]) {
        for o in out.iter_mut() {
            *o = -1.0 / self.variance;
        }
    }
}
