use std::sync::Arc;

use crate::targets::{grad_log_pi, second_deriv_diag, ControlVariateCache, FactorizedTarget};
use crate::{Error, Real, Result, RngStream};

use super::process::{rho_via_generator, TargetProcess};
use super::proposal::Proposal;

/// Exact SCALE increment
/// `rho(x) = -(1/2) sum_i [d^2 log pi / dx_i^2 + (d log pi / dx_i)^2]`;
/// independent of the previous anchor and the elapsed time.
pub fn scale_rho(target: &dyn FactorizedTarget, x: &[Real]) -> Result<Real> {
    let g = grad_log_pi(target, x)?;
    let h = second_deriv_diag(target, x)?;
    Ok(-0.5 * g.iter().zip(&h).map(|(gi, hi)| hi + gi * gi).sum::<Real>())
}

/// Two-index subsampled SCALE increment for fixed `(j, k)`:
/// `-(1/2) sum_i [n h_j + n^2 g_j g_k]` per dimension.
pub fn scale_rho_subsample_at(
    target: &dyn FactorizedTarget,
    x: &[Real],
    j: usize,
    k: usize,
) -> Result<Real> {
    if !target.has_second_derivs() {
        return Err(Error::Domain("subsampled rho needs second derivatives".into()));
    }
    let n = target.n_factors() as Real;
    let d = target.dim();
    let mut gj = vec![0.0; d];
    let mut gk = vec![0.0; d];
    let mut hj = vec![0.0; d];
    target.grad_log_factor(j, x, &mut gj);
    target.grad_log_factor(k, x, &mut gk);
    target.second_deriv_diag_factor(j, x, &mut hj);
    let acc: Real = (0..d).map(|i| n * hj[i] + n * n * gj[i] * gk[i]).sum();
    Ok(-0.5 * acc)
}

/// Two independent uniform indices, then [`scale_rho_subsample_at`].
pub fn scale_rho_subsample(
    target: &dyn FactorizedTarget,
    x: &[Real],
    rng: &mut RngStream,
) -> Result<Real> {
    let n = target.n_factors();
    let j = rng.index(n);
    let k = rng.index(n);
    scale_rho_subsample_at(target, x, j, k)
}

/// Control-variate SCALE increment for fixed `(j, k)`: the anchored
/// second-derivative difference for factor `j` plus the product of the
/// independent anchored gradient differences for `j` and `k` (with the
/// `2 (1/n) d log pi(x_hat)` cross term), plus `rho_hat`. Independence of
/// the two gradient factors is what makes the square term unbiased.
pub fn scale_rho_cv_at(
    target: &dyn FactorizedTarget,
    cache: &ControlVariateCache,
    x: &[Real],
    j: usize,
    k: usize,
) -> Result<Real> {
    if !target.has_second_derivs() {
        return Err(Error::Domain("subsampled rho needs second derivatives".into()));
    }
    let n = target.n_factors() as Real;
    let d = target.dim();
    let mut gj = vec![0.0; d];
    let mut gk = vec![0.0; d];
    let mut hj = vec![0.0; d];
    target.grad_log_factor(j, x, &mut gj);
    target.grad_log_factor(k, x, &mut gk);
    target.second_deriv_diag_factor(j, x, &mut hj);
    let mut acc = 0.0;
    for i in 0..d {
        let dh = hj[i] - cache.per_factor_second_at_hat[j][i];
        let dgj = gj[i] - cache.per_factor_grad_at_hat[j][i];
        let dgk = gk[i] - cache.per_factor_grad_at_hat[k][i];
        acc += dh + n * dgj * (dgk + 2.0 / n * cache.grad_at_hat[i]);
    }
    Ok(-0.5 * n * acc + cache.rho_hat)
}

pub fn scale_rho_cv(
    target: &dyn FactorizedTarget,
    cache: &ControlVariateCache,
    x: &[Real],
    rng: &mut RngStream,
) -> Result<Real> {
    let n = target.n_factors();
    let j = rng.index(n);
    let k = rng.index(n);
    scale_rho_cv_at(target, cache, x, j, k)
}

/// Langevin-target increment
/// `rho(x,y,s) = -(1/2) sum_i [((y_i - x_i)/s) d log pi / dx_i + d^2 log pi / dx_i^2]`.
pub fn langevin_rho(target: &dyn FactorizedTarget, x: &[Real], y: &[Real], s: Real) -> Result<Real> {
    if s <= 0.0 {
        return Err(Error::Domain("elapsed time must be positive".into()));
    }
    let g = grad_log_pi(target, x)?;
    let h = second_deriv_diag(target, x)?;
    let acc: Real = (0..x.len()).map(|i| (y[i] - x[i]) / s * g[i] + h[i]).sum();
    Ok(-0.5 * acc)
}

/// Single-index subsampled Langevin increment for fixed `j`.
pub fn langevin_rho_subsample_at(
    target: &dyn FactorizedTarget,
    x: &[Real],
    y: &[Real],
    s: Real,
    j: usize,
) -> Result<Real> {
    if s <= 0.0 {
        return Err(Error::Domain("elapsed time must be positive".into()));
    }
    if !target.has_second_derivs() {
        return Err(Error::Domain("subsampled rho needs second derivatives".into()));
    }
    let n = target.n_factors() as Real;
    let d = target.dim();
    let mut gj = vec![0.0; d];
    let mut hj = vec![0.0; d];
    target.grad_log_factor(j, x, &mut gj);
    target.second_deriv_diag_factor(j, x, &mut hj);
    let acc: Real = (0..d).map(|i| (y[i] - x[i]) / s * gj[i] + hj[i]).sum();
    Ok(-0.5 * n * acc)
}

/// The incremental-weight evaluator a CIS run plugs in: maps the new
/// anchor, the previous anchor and the elapsed time to a (possibly random)
/// increment, and reports how many data points one evaluation touches.
pub trait IncrementalRho: Send + Sync {
    fn eval(&self, x: &[Real], y: &[Real], s: Real, rng: &mut RngStream) -> Result<Real>;

    /// Data points accessed per evaluation (the cost-accounting unit).
    fn data_accesses(&self) -> u64;
}

/// Estimator variants for the SCALE increment.
#[derive(Clone)]
pub enum RhoEstimator {
    Exact,
    /// Two-index subsample: one factor for the curvature term, two
    /// independent factors for the squared-gradient term.
    Subsample,
    /// Anchored subsample: differences against the precomputed anchor
    /// derivatives, centred on rho_hat.
    SubsampleCv { cache: Arc<ControlVariateCache> },
}

impl RhoEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            RhoEstimator::Exact => "exact",
            RhoEstimator::Subsample => "subsample",
            RhoEstimator::SubsampleCv { .. } => "cv",
        }
    }
}

/// SCALE increment with a chosen estimator.
pub struct ScaleRho<'a> {
    pub target: &'a dyn FactorizedTarget,
    pub estimator: RhoEstimator,
}

impl IncrementalRho for ScaleRho<'_> {
    fn eval(&self, x: &[Real], _y: &[Real], _s: Real, rng: &mut RngStream) -> Result<Real> {
        match &self.estimator {
            RhoEstimator::Exact => scale_rho(self.target, x),
            RhoEstimator::Subsample => scale_rho_subsample(self.target, x, rng),
            RhoEstimator::SubsampleCv { cache } => scale_rho_cv(self.target, cache, x, rng),
        }
    }

    fn data_accesses(&self) -> u64 {
        match &self.estimator {
            RhoEstimator::Exact => self.target.n_factors() as u64,
            RhoEstimator::Subsample | RhoEstimator::SubsampleCv { .. } => 2,
        }
    }
}

/// Langevin-target increment, exact or single-index subsampled.
pub struct LangevinRho<'a> {
    pub target: &'a dyn FactorizedTarget,
    pub subsample: bool,
}

impl IncrementalRho for LangevinRho<'_> {
    fn eval(&self, x: &[Real], y: &[Real], s: Real, rng: &mut RngStream) -> Result<Real> {
        if self.subsample {
            let j = rng.index(self.target.n_factors());
            langevin_rho_subsample_at(self.target, x, y, s, j)
        } else {
            langevin_rho(self.target, x, y, s)
        }
    }

    fn data_accesses(&self) -> u64 {
        if self.subsample {
            1
        } else {
            self.target.n_factors() as u64
        }
    }
}

/// Increment evaluated through the Fokker-Planck operator route; the
/// validation oracle for the closed forms and the extension point for new
/// processes.
pub struct GenericRho<'a> {
    pub process: TargetProcess<'a>,
    pub proposal: Proposal,
    /// Cost attributed to one evaluation (the operator route touches the
    /// full factor set whenever the process depends on the target).
    pub accesses: u64,
}

impl IncrementalRho for GenericRho<'_> {
    fn eval(&self, x: &[Real], y: &[Real], s: Real, _rng: &mut RngStream) -> Result<Real> {
        rho_via_generator(&self.process, &self.proposal, x, y, s)
    }

    fn data_accesses(&self) -> u64 {
        self.accesses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{build_cv_cache, simulate_mixture_data, IsoGaussian, MixtureTarget};

    #[test]
    fn gaussian_scale_rho_closed_form() {
        let t = IsoGaussian::standard(1);
        assert!((scale_rho(&t, &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((scale_rho(&t, &[1.0]).unwrap() - 0.0).abs() < 1e-15);
        for k in 0..100 {
            let x = -3.0 + 6.0 * k as f64 / 99.0;
            let rho = scale_rho(&t, &[x]).unwrap();
            assert!((rho - (1.0 - x * x) / 2.0).abs() <= 1e-12);
        }
    }

    fn mixture(n: usize, seed: u64) -> MixtureTarget {
        let mut rng = RngStream::new(seed, 0);
        MixtureTarget::new(simulate_mixture_data(n, 4.0, 0.95, &mut rng), 0.95)
    }

    #[test]
    fn single_factor_subsample_is_exact() {
        let t = IsoGaussian::standard(1);
        for x in [-1.0, 0.0, 2.5] {
            let exact = scale_rho(&t, &[x]).unwrap();
            let sub = scale_rho_subsample_at(&t, &[x], 0, 0).unwrap();
            assert!((exact - sub).abs() < 1e-14);
        }
    }

    #[test]
    fn subsample_mean_over_all_pairs_is_exact() {
        let t = mixture(30, 71);
        let n = t.n_factors();
        for x in [-2.0, 0.5, 4.1] {
            let exact = scale_rho(&t, &[x]).unwrap();
            let mut mean = 0.0;
            for j in 0..n {
                for k in 0..n {
                    mean += scale_rho_subsample_at(&t, &[x], j, k).unwrap();
                }
            }
            mean /= (n * n) as f64;
            assert!(
                (mean - exact).abs() <= 1e-9 * exact.abs().max(1.0),
                "x={x}: {mean} vs {exact}"
            );
        }
    }

    #[test]
    fn cv_mean_over_all_index_pairs_is_exact_and_anchored() {
        let t = mixture(30, 72);
        let n = t.n_factors();
        let cache = build_cv_cache(&t, &[3.8]).unwrap();
        for x in [3.0, 3.8, 4.5] {
            let exact = scale_rho(&t, &[x]).unwrap();
            let mut mean = 0.0;
            for j in 0..n {
                for k in 0..n {
                    mean += scale_rho_cv_at(&t, &cache, &[x], j, k).unwrap();
                }
            }
            mean /= (n * n) as f64;
            assert!(
                (mean - exact).abs() <= 1e-9 * exact.abs().max(1.0),
                "x={x}: {mean} vs {exact}"
            );
        }
        // At the anchor every index pair reproduces rho_hat exactly.
        for j in 0..n {
            for k in 0..n {
                let v = scale_rho_cv_at(&t, &cache, &cache.x_hat.clone(), j, k).unwrap();
                assert!((v - cache.rho_hat).abs() <= 1e-9 * cache.rho_hat.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cv_variance_beats_plain_subsampling_near_anchor() {
        let t = mixture(150, 73);
        let n = t.n_factors();
        let cache = build_cv_cache(&t, &[4.0]).unwrap();
        let x = [4.1];
        let var_pairs = {
            let exact = scale_rho(&t, &[x[0]]).unwrap();
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let v = scale_rho_subsample_at(&t, &x, j, k).unwrap();
                    acc += (v - exact) * (v - exact);
                }
            }
            acc / (n * n) as f64
        };
        let var_cv = {
            let exact = scale_rho(&t, &[x[0]]).unwrap();
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let v = scale_rho_cv_at(&t, &cache, &x, j, k).unwrap();
                    acc += (v - exact) * (v - exact);
                }
            }
            acc / (n * n) as f64
        };
        assert!(var_cv < var_pairs, "cv {var_cv} vs pairs {var_pairs}");
    }

    #[test]
    fn langevin_rho_first_term_vanishes_at_x_equals_y() {
        let t = IsoGaussian::standard(1);
        for s in [0.1, 1.0, 7.0] {
            let rho = langevin_rho(&t, &[0.7], &[0.7], s).unwrap();
            assert!((rho - 0.5).abs() < 1e-14);
        }
        assert!(langevin_rho(&t, &[0.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn langevin_subsample_mean_is_exact() {
        let t = mixture(25, 74);
        let n = t.n_factors();
        let (x, y, s) = ([3.1], [2.9], 0.3);
        let exact = langevin_rho(&t, &x, &y, s).unwrap();
        let mut mean = 0.0;
        for j in 0..n {
            mean += langevin_rho_subsample_at(&t, &x, &y, s, j).unwrap();
        }
        mean /= n as f64;
        assert!((mean - exact).abs() <= 1e-9 * exact.abs().max(1.0));
    }

    #[test]
    fn generator_route_matches_closed_forms() {
        let t = mixture(20, 75);
        let proposal = Proposal::Brownian;
        let scale = TargetProcess::Scale { target: &t };
        let langevin = TargetProcess::Langevin { target: &t };
        for (x, y, s) in [(3.0, 2.0, 0.5), (-1.0, 0.0, 1.5), (4.2, 4.0, 0.01)] {
            let via_gen = rho_via_generator(&scale, &proposal, &[x], &[y], s).unwrap();
            let direct = scale_rho(&t, &[x]).unwrap();
            assert!(
                (via_gen - direct).abs() <= 1e-9 * direct.abs().max(1.0),
                "scale x={x}: {via_gen} vs {direct}"
            );
            let via_gen = rho_via_generator(&langevin, &proposal, &[x], &[y], s).unwrap();
            let direct = langevin_rho(&t, &[x], &[y], s).unwrap();
            assert!(
                (via_gen - direct).abs() <= 1e-9 * direct.abs().max(1.0),
                "langevin x={x}: {via_gen} vs {direct}"
            );
        }
    }

    /// Synthetic factorized target with constant heterogeneous gradients:
    /// log pi_j(x) = a_j x, so the two-index estimator is exactly
    /// -(n^2/2) a_j a_k and its spread scales like n^2.
    struct LinearFactors(Vec<Real>);

    impl FactorizedTarget for LinearFactors {
        fn dim(&self) -> usize {
            1
        }
        fn n_factors(&self) -> usize {
            self.0.len()
        }
        fn log_factor(&self, i: usize, x: &[Real]) -> Real {
            self.0[i] * x[0]
        }
        fn grad_log_factor(&self, i: usize, _x: &[Real], out: &mut [Real]) {
            out[0] = self.0[i];
        }
        fn has_second_derivs(&self) -> bool {
            true
        }
        fn second_deriv_diag_factor(&self, _i: usize, _x: &[Real], out: &mut [Real]) {
            out[0] = 0.0;
        }
    }

    #[test]
    fn subsample_spread_grows_like_n_squared() {
        // sd of the two-index estimator over all (j,k), log-log slope 2.
        let mut points = Vec::new();
        for &n in &[10usize, 100, 1000] {
            let mut rng = RngStream::new(76, n as u64);
            let t = LinearFactors((0..n).map(|_| rng.std_normal::<f64>()).collect());
            let x = [3.5];
            let exact = scale_rho(&t, &[x[0]]).unwrap();
            let mut var = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let v = scale_rho_subsample_at(&t, &x, j, k).unwrap();
                    var += (v - exact) * (v - exact);
                }
            }
            var /= (n * n) as f64;
            points.push(((n as f64).ln(), var.sqrt().ln()));
        }
        let slope = (points[2].1 - points[0].1) / (points[2].0 - points[0].0);
        assert!((slope - 2.0).abs() < 0.3, "log-log slope {slope}");
    }
}
