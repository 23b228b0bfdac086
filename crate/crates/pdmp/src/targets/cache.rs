use serde::{Deserialize, Serialize};

use crate::pdp::{RateBound, Segment};
use crate::{Error, Real, Result};

use super::{FactorBoundTable, FactorizedTarget};

/// Preprocessed derivatives at an anchor `x_hat` near the posterior mode.
/// Backs the control-variate gradient and rho estimators: everything at the
/// anchor is exact and paid for once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlVariateCache {
    pub x_hat: Vec<Real>,
    /// `grad log pi(x_hat)` (exact factor sum).
    pub grad_at_hat: Vec<Real>,
    /// `grad log pi_i(x_hat)`, one d-vector per factor.
    pub per_factor_grad_at_hat: Vec<Vec<Real>>,
    /// Diagonal second derivatives per factor at the anchor.
    pub per_factor_second_at_hat: Vec<Vec<Real>>,
    /// `sum_i d^2 log pi_i / dx_j^2` at the anchor.
    pub second_deriv_at_hat: Vec<Real>,
    /// Exact SCALE increment `rho(x_hat)`.
    pub rho_hat: Real,
}

impl ControlVariateCache {
    pub fn n_factors(&self) -> usize {
        self.per_factor_grad_at_hat.len()
    }

    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }

    /// Distance from the anchor (1-d convenience).
    pub fn dist1(&self, x: Real) -> Real {
        (x - self.x_hat[0]).abs()
    }
}

pub fn build_cv_cache(target: &dyn FactorizedTarget, x_hat: &[Real]) -> Result<ControlVariateCache> {
    if !target.has_second_derivs() {
        return Err(Error::Domain("control variates need second derivatives".into()));
    }
    let d = target.dim();
    let n = target.n_factors();
    let mut per_grad = Vec::with_capacity(n);
    let mut per_second = Vec::with_capacity(n);
    let mut grad_sum = vec![0.0; d];
    let mut second_sum = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for i in 0..n {
        target.grad_log_factor(i, x_hat, &mut buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFactor { factor: i, at: x_hat.to_vec() });
        }
        for (s, b) in grad_sum.iter_mut().zip(&buf) {
            *s += b;
        }
        per_grad.push(buf.clone());
        target.second_deriv_diag_factor(i, x_hat, &mut buf);
        for (s, b) in second_sum.iter_mut().zip(&buf) {
            *s += b;
        }
        per_second.push(buf.clone());
    }
    let rho_hat = -0.5
        * grad_sum
            .iter()
            .zip(&second_sum)
            .map(|(g, h)| h + g * g)
            .sum::<Real>();
    Ok(ControlVariateCache {
        x_hat: x_hat.to_vec(),
        grad_at_hat: grad_sum,
        per_factor_grad_at_hat: per_grad,
        per_factor_second_at_hat: per_second,
        second_deriv_at_hat: second_sum,
        rho_hat,
    })
}

/// State-dependent bound `|grad log pi(x_hat)| + n C |x - x_hat|` for the
/// control-variate rate estimate (1-d).
pub fn cv_rate_bound(cache: &ControlVariateCache, table: &FactorBoundTable, x: Real) -> Real {
    let ghat = cache.grad_at_hat[0].abs();
    ghat + cache.n_factors() as Real * table.c_second * (x - cache.x_hat[0]).abs()
}

/// The same bound along the ray `x + v s` as a piecewise-linear envelope:
/// V-shaped in `s`, split where the ray passes the anchor.
pub fn cv_rate_envelope(
    cache: &ControlVariateCache,
    table: &FactorBoundTable,
    x: Real,
    v: Real,
    horizon: Real,
) -> Result<RateBound<Real>> {
    table.check_inside(x)?;
    let ghat = cache.grad_at_hat[0].abs();
    let nc = cache.n_factors() as Real * table.c_second;
    let x_hat = cache.x_hat[0];
    let speed = v.abs();
    let dist0 = (x - x_hat).abs();
    if speed == 0.0 || nc == 0.0 {
        return RateBound::constant(ghat + nc * dist0, horizon);
    }
    let approaching = (x_hat - x) * v > 0.0;
    let s_star = if approaching { (x_hat - x) / v } else { 0.0 };
    if !approaching || s_star >= horizon {
        let slope = if approaching { -nc * speed } else { nc * speed };
        return RateBound::from_segments(vec![Segment {
            start: 0.0,
            end: horizon,
            a: ghat + nc * dist0,
            b: slope,
        }]);
    }
    RateBound::from_segments(vec![
        Segment { start: 0.0, end: s_star, a: ghat + nc * dist0, b: -nc * speed },
        Segment { start: s_star, end: horizon, a: ghat, b: nc * speed },
    ])
}
