use crate::{Error, Result, Scalar};

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Canonical switching rate `max{0, -v . grad log pi(x)}`: the smallest
/// rate satisfying the stationarity identity for flip-based transitions.
pub fn canonical_rate<F: Scalar>(grad: &[F], v: &[F]) -> F {
    (-dot(v, grad)).max(F::zero())
}

/// Randomized switching rate `max{0, v . u}` where `u` realizes an unbiased
/// estimator of `-grad log pi(x)`. Degenerates to [`canonical_rate`] for the
/// exact estimator.
pub fn random_rate<F: Scalar>(u: &[F], v: &[F]) -> F {
    dot(v, u).max(F::zero())
}

/// Bouncy-particle reflection: flips the component of `v` along `g`, leaves
/// the orthogonal components untouched. `g` may be the gradient or any
/// (sign-irrelevant) nonzero realization of its estimator.
pub fn bps_flip<F: Scalar>(g: &[F], v: &[F]) -> Result<Vec<F>> {
    let gg = dot(g, g);
    if gg == F::zero() {
        return Err(Error::UndefinedFlip);
    }
    let scale = F::from_real(2.0) * dot(v, g) / gg;
    Ok(v.iter().zip(g).map(|(&vi, &gi)| vi - scale * gi).collect())
}

/// Per-coordinate zig-zag rates `lambda_i = max{0, -theta_i d_i log pi}`;
/// event type `i` flips `theta_i` only.
pub fn zigzag_coordinate_rates<F: Scalar>(grad: &[F], theta: &[F]) -> Vec<F> {
    grad.iter()
        .zip(theta)
        .map(|(&gi, &ti)| (-ti * gi).max(F::zero()))
        .collect()
}
