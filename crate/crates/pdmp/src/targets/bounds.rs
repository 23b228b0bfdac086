use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

use super::quadrature::golden_max;
use super::FactorizedTarget;

/// Per-factor envelopes `max_x |d log pi_i / dx|` over the search interval,
/// plus the uniform second-derivative bound `C`. One-dimensional targets
/// only; these drive the global thinning bounds and the control-variate
/// envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorBoundTable {
    pub per_factor_max_abs_grad: Vec<Real>,
    /// Bound on `max_i max_x |d^2 log pi_i / dx^2|`.
    pub c_second: Real,
    pub interval: (Real, Real),
}

impl FactorBoundTable {
    pub fn n(&self) -> usize {
        self.per_factor_max_abs_grad.len()
    }

    pub fn check_inside(&self, x: Real) -> Result<()> {
        let (lo, hi) = self.interval;
        if x < lo || x > hi {
            return Err(Error::OutsideBoundInterval { x, lo, hi });
        }
        Ok(())
    }
}

/// Inflation applied after refinement to absorb grid and optimizer slack.
const INFLATE: Real = 1.01;

/// Dense grid search over `interval` for each factor's max |gradient|,
/// refined by golden section around the grid argmax, then inflated by 1%.
/// `C` is computed the same way for second derivatives.
pub fn factor_bound_table(
    target: &dyn FactorizedTarget,
    interval: (Real, Real),
) -> Result<FactorBoundTable> {
    if target.dim() != 1 {
        return Err(Error::Domain("bound tables require a 1-d target".into()));
    }
    let (lo, hi) = interval;
    if hi <= lo {
        return Err(Error::Domain("empty bound search interval".into()));
    }
    // Derivatives of the mixture factors vary on the unit scale of the
    // narrow component, so cap the grid step well below that.
    let cells = (((hi - lo) / 0.05).ceil() as usize).clamp(4096, 65_536);
    let n = target.n_factors();
    let mut per_factor = Vec::with_capacity(n);
    let mut c_second: Real = 0.0;
    let mut g = [0.0];
    let mut h = [0.0];
    let has_second = target.has_second_derivs();
    for i in 0..n {
        let mut best_g = (0.0, lo);
        let mut best_h = (0.0, lo);
        for k in 0..=cells {
            let x = lo + (hi - lo) * k as Real / cells as Real;
            target.grad_log_factor(i, &[x], &mut g);
            if g[0].abs() > best_g.0 {
                best_g = (g[0].abs(), x);
            }
            if has_second {
                target.second_deriv_diag_factor(i, &[x], &mut h);
                if h[0].abs() > best_h.0 {
                    best_h = (h[0].abs(), x);
                }
            }
        }
        let step = (hi - lo) / cells as Real;
        let refined_g = refine_abs_max(
            |x| {
                let mut buf = [0.0];
                target.grad_log_factor(i, &[x], &mut buf);
                buf[0]
            },
            best_g.1,
            step,
            lo,
            hi,
        );
        per_factor.push(refined_g.max(best_g.0) * INFLATE);
        if has_second {
            let refined_h = refine_abs_max(
                |x| {
                    let mut buf = [0.0];
                    target.second_deriv_diag_factor(i, &[x], &mut buf);
                    buf[0]
                },
                best_h.1,
                step,
                lo,
                hi,
            );
            c_second = c_second.max(refined_h.max(best_h.0) * INFLATE);
        }
    }
    Ok(FactorBoundTable { per_factor_max_abs_grad: per_factor, c_second, interval })
}

fn refine_abs_max(f: impl Fn(Real) -> Real, around: Real, step: Real, lo: Real, hi: Real) -> Real {
    let a = (around - step).max(lo);
    let b = (around + step).min(hi);
    let x = golden_max(|x| f(x).abs(), a, b, 1e-10);
    f(x).abs()
}

/// Simplest global bound: `n * max_i bound_i`. Valid for the uniform
/// single-factor rate estimate and everything it dominates.
pub fn global_rate_bound_simple(table: &FactorBoundTable) -> Real {
    table.n() as Real
        * table
            .per_factor_max_abs_grad
            .iter()
            .cloned()
            .fold(0.0, Real::max)
}

/// Tighter global bound: `sum_i bound_i`. Needs the per-factor
/// preprocessing, pairs with non-uniform subsampling.
pub fn global_rate_bound_sum(table: &FactorBoundTable) -> Real {
    table.per_factor_max_abs_grad.iter().sum()
}

/// Tightest constant bound for the canonical rates: `max_x |grad log pi(x)|`
/// over the search interval. Not valid with subsampling.
pub fn true_max_grad_bound(target: &dyn FactorizedTarget, interval: (Real, Real)) -> Result<Real> {
    if target.dim() != 1 {
        return Err(Error::Domain("bound search requires a 1-d target".into()));
    }
    let (lo, hi) = interval;
    let cells = (((hi - lo) / 0.05).ceil() as usize).clamp(4096, 65_536);
    let grad = |x: Real| super::grad_log_pi(target, &[x]).map(|g| g[0]).unwrap_or(Real::NAN);
    let mut best = (0.0, lo);
    for k in 0..=cells {
        let x = lo + (hi - lo) * k as Real / cells as Real;
        let v = grad(x).abs();
        if v > best.0 {
            best = (v, x);
        }
    }
    let step = (hi - lo) / cells as Real;
    let refined = refine_abs_max(grad, best.1, step, lo, hi);
    Ok(refined.max(best.0) * INFLATE)
}
