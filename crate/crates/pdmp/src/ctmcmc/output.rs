use crate::pdp::Skeleton;
use crate::{Error, Result, Scalar};

/// Time-average of `g` along the continuous path after `burn_in`:
/// `(1 / (T - burn_in)) sum_i int_0^{dt_i} g(x_i + s v_i) ds`,
/// each segment integrated by adaptive Gauss-Legendre.
pub fn path_integral_estimate<F: Scalar>(
    skel: &Skeleton<F>,
    g: impl Fn(&[F]) -> F,
    burn_in: F,
) -> Result<F> {
    let horizon = skel.horizon();
    if burn_in >= horizon {
        return Err(Error::Domain("burn-in must be shorter than the horizon".into()));
    }
    let mut total = F::zero();
    let mut buf = vec![F::zero(); skel.dim()];
    for (t0, t1, x, v) in skel.segments_from(burn_in) {
        let len = t1 - t0;
        let f = |s: F, buf: &mut [F]| {
            for ((b, &xi), &vi) in buf.iter_mut().zip(x.coords()).zip(v.coords()) {
                *b = xi + s * vi;
            }
        };
        total += adaptive_gl(&g, &f, &mut buf, F::zero(), len, 0);
    }
    Ok(total / (horizon - burn_in))
}

/// Same average for a quadratic integrand
/// `g(x) = c + sum_j lin_j x_j + sum_j quad_j x_j^2`, in closed form.
pub fn path_integral_quadratic<F: Scalar>(
    skel: &Skeleton<F>,
    c: F,
    lin: &[F],
    quad: &[F],
    burn_in: F,
) -> Result<F> {
    let horizon = skel.horizon();
    if burn_in >= horizon {
        return Err(Error::Domain("burn-in must be shorter than the horizon".into()));
    }
    let half = F::from_real(0.5);
    let third = F::from_real(1.0 / 3.0);
    let mut total = F::zero();
    for (t0, t1, x, v) in skel.segments_from(burn_in) {
        let dt = t1 - t0;
        let dt2 = dt * dt;
        let dt3 = dt2 * dt;
        let mut seg = c * dt;
        for j in 0..skel.dim() {
            let (xj, vj) = (x.coords()[j], v.coords()[j]);
            seg += lin[j] * (xj * dt + vj * dt2 * half);
            seg += quad[j] * (xj * xj * dt + xj * vj * dt2 + vj * vj * dt3 * third);
        }
        total += seg;
    }
    Ok(total / (horizon - burn_in))
}

fn adaptive_gl<F: Scalar>(
    g: &impl Fn(&[F]) -> F,
    pos: &impl Fn(F, &mut [F]),
    buf: &mut [F],
    a: F,
    b: F,
    depth: usize,
) -> F {
    let whole = gl7(g, pos, buf, a, b);
    let mid = (a + b) * F::from_real(0.5);
    let split = gl7(g, pos, buf, a, mid) + gl7(g, pos, buf, mid, b);
    let tol = F::from_real(1e-12) * (F::one() + split.abs());
    if (whole - split).abs() <= tol || depth >= 24 {
        split
    } else {
        adaptive_gl(g, pos, buf, a, mid, depth + 1) + adaptive_gl(g, pos, buf, mid, b, depth + 1)
    }
}

// 7-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL_WEIGHTS: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

fn gl7<F: Scalar>(
    g: &impl Fn(&[F]) -> F,
    pos: &impl Fn(F, &mut [F]),
    buf: &mut [F],
    a: F,
    b: F,
) -> F {
    let half = F::from_real(0.5);
    let c = (a + b) * half;
    let h = (b - a) * half;
    let mut acc = F::zero();
    for (node, weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
        let s = c + h * F::from_real(*node);
        pos(s, buf);
        acc += F::from_real(*weight) * g(buf);
    }
    acc * h
}

/// Monte Carlo estimator on an equally-spaced grid: evaluates `g` at the
/// `m` times `burn_in + j h`, `h = (T - burn_in) / m`, `j = 1..m`.
pub fn discretized_estimate<F: Scalar>(
    skel: &Skeleton<F>,
    g: impl Fn(&[F]) -> F,
    m: usize,
    burn_in: F,
) -> Result<F> {
    let horizon = skel.horizon();
    if burn_in >= horizon {
        return Err(Error::Domain("burn-in must be shorter than the horizon".into()));
    }
    if m == 0 {
        return Err(Error::Domain("discretized estimate needs m >= 1".into()));
    }
    let h = (horizon - burn_in) / F::from_real(m as f64);
    let mut acc = F::zero();
    for j in 1..=m {
        let t = burn_in + h * F::from_real(j as f64);
        let (x, _) = skel.state_at_time(t.min(horizon))?;
        acc += g(x.coords());
    }
    Ok(acc / F::from_real(m as f64))
}

/// One coordinate of the path sampled every `spacing` time units after
/// `burn_in` (the series the ESS diagnostics run on).
pub fn sample_coordinate<F: Scalar>(
    skel: &Skeleton<F>,
    coord: usize,
    spacing: F,
    burn_in: F,
) -> Result<Vec<F>> {
    let horizon = skel.horizon();
    if burn_in >= horizon {
        return Err(Error::Domain("burn-in must be shorter than the horizon".into()));
    }
    let mut out = Vec::new();
    let mut t = burn_in + spacing;
    while t <= horizon {
        let (x, _) = skel.state_at_time(t)?;
        out.push(x.coords()[coord]);
        t += spacing;
    }
    Ok(out)
}
