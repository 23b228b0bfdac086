use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Real, Result, RngStream};

use super::FactorizedTarget;

/// Posterior for the location parameter of the contaminated-normal mixture
///
/// ```text
/// Y_j ~ N(0, 10^2)  with probability p,
///       N(x, 1)     otherwise,
/// ```
///
/// with an `N(0, 4)` prior on `x`. Each factor is the likelihood of one
/// observation times the `1/n`-th power of the prior, so the prior
/// contributes `-x^2 / (8 n)` per factor.
#[derive(Debug, Clone)]
pub struct MixtureTarget {
    ys: Vec<Real>,
    p: Real,
    /// Precomputed contamination mass `(p/10) exp(-y_i^2 / 200)` per factor;
    /// constant in `x`, so each factor evaluation costs one `exp`.
    wide: Vec<Real>,
    narrow_weight: Real,
}

impl MixtureTarget {
    pub fn new(ys: Vec<Real>, p: Real) -> Self {
        assert!(!ys.is_empty());
        assert!((0.0..=1.0).contains(&p));
        let wide = ys.iter().map(|y| (p / 10.0) * (-y * y / 200.0).exp()).collect();
        MixtureTarget { ys, p, wide, narrow_weight: 1.0 - p }
    }

    pub fn data(&self) -> &[Real] {
        &self.ys
    }

    pub fn mixture_weight(&self) -> Real {
        self.p
    }

    /// Interval the bound search runs over: data range padded by ten wide
    /// component standard deviations, united with [-20, 20]. The prior
    /// factor's derivative is unbounded on all of R, so bounds only hold
    /// here; samplers abort if they leave it.
    pub fn bound_search_interval(&self) -> (Real, Real) {
        let lo = self.ys.iter().cloned().fold(Real::INFINITY, Real::min) - 100.0;
        let hi = self.ys.iter().cloned().fold(Real::NEG_INFINITY, Real::max) + 100.0;
        (lo.min(-20.0), hi.max(20.0))
    }

    /// Likelihood share of factor `i`: returns `(r, x - y_i)` where
    /// `r = (1-p) e_i / (a_i + (1-p) e_i)` is the narrow-component
    /// responsibility at `x`.
    fn responsibility(&self, i: usize, x: Real) -> (Real, Real) {
        let dxy = x - self.ys[i];
        let e = (-dxy * dxy / 2.0).exp();
        let num = self.narrow_weight * e;
        (num / (self.wide[i] + num), dxy)
    }
}

impl FactorizedTarget for MixtureTarget {
    fn dim(&self) -> usize {
        1
    }

    fn n_factors(&self) -> usize {
        self.ys.len()
    }

    fn log_factor(&self, i: usize, x: &[Real]) -> Real {
        let x = x[0];
        let dxy = x - self.ys[i];
        let dens = self.wide[i] + self.narrow_weight * (-dxy * dxy / 2.0).exp();
        dens.ln() - x * x / (8.0 * self.ys.len() as Real)
    }

    fn grad_log_factor(&self, i: usize, x: &[Real], out: &mut [Real]) {
        let x = x[0];
        let (r, dxy) = self.responsibility(i, x);
        out[0] = -r * dxy - x / (4.0 * self.ys.len() as Real);
    }

    fn has_second_derivs(&self) -> bool {
        true
    }

    fn second_deriv_diag_factor(&self, i: usize, x: &[Real], out: &mut [Real]) {
        let x = x[0];
        let (r, dxy) = self.responsibility(i, x);
        out[0] = dxy * dxy * r * (1.0 - r) - r - 1.0 / (4.0 * self.ys.len() as Real);
    }
}

/// Draw a dataset from the mixture: each observation is `N(0, 10^2)` with
/// probability `p` and `N(x_true, 1)` otherwise.
pub fn simulate_mixture_data(n: usize, x_true: Real, p: Real, rng: &mut RngStream) -> Vec<Real> {
    assert!(n >= 1);
    (0..n)
        .map(|_| {
            if rng.bernoulli(p) {
                10.0 * rng.std_normal::<Real>()
            } else {
                x_true + rng.std_normal::<Real>()
            }
        })
        .collect()
}

/// One observation per line.
pub fn load_data_csv(path: &Path) -> Result<Vec<Real>> {
    let file = std::fs::File::open(path)?;
    let mut ys = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let y: Real = trimmed.parse().map_err(|_| {
            Error::Config(format!("bad observation on line {}: {trimmed:?}", lineno + 1))
        })?;
        ys.push(y);
    }
    if ys.is_empty() {
        return Err(Error::Config(format!("no observations in {}", path.display())));
    }
    Ok(ys)
}

pub fn save_data_csv(path: &Path, ys: &[Real]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for y in ys {
        writeln!(f, "{y:.17}")?;
    }
    Ok(())
}

/// FNV-1a over the raw bit patterns; keys the bound-table cache.
pub fn dataset_hash(ys: &[Real]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for y in ys {
        for b in y.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
