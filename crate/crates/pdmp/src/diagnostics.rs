//! Sample-quality diagnostics: effective sample size for equally-spaced
//! series and for signed importance weights, plus Kolmogorov-Smirnov
//! distances used by the distribution-level checks.

use crate::{Error, Real, Result};

/// Effective sample size `N / (1 + 2 sum_k rho_k)` of an equally-spaced
/// series, with autocovariances from direct sums and Geyer
/// initial-positive-sequence truncation: autocorrelations are summed in
/// consecutive pairs until a pair sum goes nonpositive.
///
/// A zero-variance series has ESS = N by convention. Strongly antithetic
/// series can report ESS above N.
pub fn ess(series: &[Real]) -> Result<Real> {
    let n = series.len();
    if n < 10 {
        return Err(Error::Contract(format!("ess needs at least 10 samples, got {n}")));
    }
    let nf = n as Real;
    let mean = series.iter().sum::<Real>() / nf;
    let centered: Vec<Real> = series.iter().map(|x| x - mean).collect();
    let var: Real = centered.iter().map(|x| x * x).sum::<Real>() / nf;
    if var <= 1e-28 * (mean * mean + 1.0) {
        return Ok(nf);
    }
    let autocorr = |k: usize| -> Real {
        let mut acc = 0.0;
        for t in 0..(n - k) {
            acc += centered[t] * centered[t + k];
        }
        acc / (nf * var)
    };
    let mut tau = 1.0; // rho_0
    let mut k = 1;
    while k + 1 < n {
        let pair = autocorr(k) + autocorr(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    Ok(nf / tau.max(1e-12))
}

/// Effective sample size of signed importance weights:
/// `(sum |w|)^2 / sum w^2`.
pub fn weighted_ess(weights: &[Real]) -> Real {
    let abs_sum: Real = weights.iter().map(|w| w.abs()).sum();
    let sq_sum: Real = weights.iter().map(|w| w * w).sum();
    if sq_sum == 0.0 {
        0.0
    } else {
        abs_sum * abs_sum / sq_sum
    }
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[Real], b: &[Real]) -> Real {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as Real, ys.len() as Real);
    let mut i = 0;
    let mut j = 0;
    let mut ks = 0.0f64;
    while i < xs.len() && j < ys.len() {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        ks = ks.max((i as Real / na - j as Real / nb).abs());
    }
    ks
}

/// One-sample Kolmogorov-Smirnov distance against a reference CDF.
pub fn ks_vs_cdf(samples: &[Real], cdf: impl Fn(Real) -> Real) -> Real {
    let mut xs = samples.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = xs.len() as Real;
    let mut ks = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let c = cdf(*x);
        ks = ks.max((c - i as Real / n).abs());
        ks = ks.max((c - (i + 1) as Real / n).abs());
    }
    ks
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: Real) -> Real {
    0.5 * erfc_approx(-x / std::f64::consts::SQRT_2)
}

// Rational approximation of erfc, |err| < 1.2e-7 everywhere. Plenty for
// KS-style distribution checks.
fn erfc_approx(x: Real) -> Real {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        poly
    } else {
        2.0 - poly
    }
}

pub fn mean_and_var(series: &[Real]) -> (Real, Real) {
    let n = series.len() as Real;
    let mean = series.iter().sum::<Real>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<Real>() / (n - 1.0);
    (mean, var)
}
