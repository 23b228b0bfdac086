use crate::{Error, Real, Result, RngStream};

use super::{log_pi_unnorm, FactorizedTarget};

/// Deterministic quadrature of a one-dimensional posterior: normalizing
/// constant, moments and CDF on a point-doubling trapezoid grid, converged
/// to 1e-6 relative. Serves as the closed-form-free oracle for stationarity
/// checks, total-variation comparisons and posterior-sd-based tunings.
#[derive(Debug, Clone)]
pub struct PosteriorQuadrature {
    lo: Real,
    hi: Real,
    /// Normalized density on the uniform grid.
    pdf: Vec<Real>,
    /// CDF at the grid points, cdf[0] = 0, cdf[last] = 1.
    cdf: Vec<Real>,
    mode: Real,
    mean: Real,
    sd: Real,
}

const REL_TOL: Real = 1e-6;

impl PosteriorQuadrature {
    /// Integrate `exp(log pi)` over `[lo, hi]`, doubling the grid until the
    /// normalizer, mean and variance are all stable to 1e-6 relative.
    pub fn build(target: &dyn FactorizedTarget, lo: Real, hi: Real) -> Result<Self> {
        if target.dim() != 1 {
            return Err(Error::Domain("quadrature requires a 1-d target".into()));
        }
        if hi <= lo {
            return Err(Error::Domain("empty quadrature interval".into()));
        }
        let mode = golden_max(|x| log_pi_unnorm(target, &[x]), lo, hi, 1e-8);
        let log_at_mode = log_pi_unnorm(target, &[mode]);

        // The stored pdf/cdf tables are linearly interpolated, so the grid
        // stays fine even after the integrals have converged.
        let mut m = 1 << 15;
        let mut prev: Option<(Real, Real, Real)> = None;
        loop {
            let step = (hi - lo) / m as Real;
            let values: Vec<Real> = (0..=m)
                .map(|k| {
                    let x = lo + step * k as Real;
                    (log_pi_unnorm(target, &[x]) - log_at_mode).exp()
                })
                .collect();
            let weight = |k: usize| if k == 0 || k == m { 0.5 } else { 1.0 };
            let mut z = 0.0;
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for (k, &f) in values.iter().enumerate() {
                let x = lo + step * k as Real;
                let w = weight(k) * f;
                z += w;
                m1 += w * x;
                m2 += w * x * x;
            }
            z *= step;
            m1 *= step;
            m2 *= step;
            let mean = m1 / z;
            let var = (m2 / z - mean * mean).max(0.0);
            if let Some((pz, pm, pv)) = prev {
                let ok = |a: Real, b: Real, scale: Real| (a - b).abs() <= REL_TOL * scale.abs().max(1e-300);
                if ok(z, pz, z) && ok(mean, pm, mean.abs().max(var.sqrt())) && ok(var, pv, var) {
                    let pdf: Vec<Real> = values.iter().map(|f| f / z).collect();
                    let mut cdf = vec![0.0; pdf.len()];
                    for k in 1..pdf.len() {
                        cdf[k] = cdf[k - 1] + 0.5 * (pdf[k - 1] + pdf[k]) * step;
                    }
                    let total = cdf[pdf.len() - 1];
                    for c in cdf.iter_mut() {
                        *c /= total;
                    }
                    return Ok(PosteriorQuadrature {
                        lo,
                        hi,
                        pdf,
                        cdf,
                        mode,
                        mean,
                        sd: var.sqrt(),
                    });
                }
            }
            prev = Some((z, mean, var));
            m *= 2;
            if m > (1 << 24) {
                return Err(Error::Domain("quadrature failed to converge".into()));
            }
        }
    }

    pub fn mode(&self) -> Real {
        self.mode
    }

    pub fn mean(&self) -> Real {
        self.mean
    }

    pub fn sd(&self) -> Real {
        self.sd
    }

    pub fn support(&self) -> (Real, Real) {
        (self.lo, self.hi)
    }

    fn step(&self) -> Real {
        (self.hi - self.lo) / (self.pdf.len() - 1) as Real
    }

    pub fn pdf(&self, x: Real) -> Real {
        self.interp(&self.pdf, x)
    }

    pub fn cdf(&self, x: Real) -> Real {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        self.interp(&self.cdf, x)
    }

    fn interp(&self, table: &[Real], x: Real) -> Real {
        let step = self.step();
        let pos = (x - self.lo) / step;
        let k = (pos.floor() as usize).min(table.len() - 2);
        let frac = pos - k as Real;
        table[k] * (1.0 - frac) + table[k + 1] * frac
    }

    /// Posterior mass of the interval `[a, b]`.
    pub fn interval_mass(&self, a: Real, b: Real) -> Real {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut RngStream) -> Real {
        let u: Real = rng.open01();
        let k = self.cdf.partition_point(|&c| c < u);
        if k == 0 {
            return self.lo;
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.lo + self.step() * ((k - 1) as Real + frac)
    }

    /// One-sample Kolmogorov-Smirnov distance of `samples` against this CDF.
    pub fn ks_distance(&self, samples: &[Real]) -> Real {
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len() as Real;
        let mut ks = 0.0f64;
        for (i, x) in sorted.iter().enumerate() {
            let c = self.cdf(*x);
            ks = ks.max((c - i as Real / n).abs()).max((c - (i + 1) as Real / n).abs());
        }
        ks
    }
}

/// Golden-section maximizer on `[lo, hi]`, seeded by a coarse grid scan so
/// multimodal integrands still land on the global mode.
pub(crate) fn golden_max(f: impl Fn(Real) -> Real, lo: Real, hi: Real, tol: Real) -> Real {
    let grid = 1024;
    let step = (hi - lo) / grid as Real;
    let mut best_k = 0usize;
    let mut best = Real::NEG_INFINITY;
    for k in 0..=grid {
        let v = f(lo + step * k as Real);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut a = lo + step * (best_k.saturating_sub(1)) as Real;
    let mut b = (lo + step * (best_k + 1) as Real).min(hi);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
