use rand_distr::{ChiSquared, Distribution};

use crate::{Error, Real, Result, RngStream};

/// Transition-density family `q_s(x | y)` used to propagate CIS anchors.
///
/// Beyond sampling and density evaluation, proposals expose the closed-form
/// derivatives (`d/ds`, gradient and Laplacian in `x`) that the
/// Fokker-Planck incremental-weight evaluator consumes.
#[derive(Debug, Clone)]
pub enum Proposal {
    /// Brownian motion: product of `N(y_i, s)` kernels.
    Brownian,
    /// Heavy-tailed alternative with t-distributed transitions.
    StudentT(StudentTKernel),
}

impl Proposal {
    pub fn student_t(nu: Real, dim: usize) -> Result<Proposal> {
        Ok(Proposal::StudentT(StudentTKernel::new(nu, dim)?))
    }

    pub fn sample(&self, y: &[Real], s: Real, rng: &mut RngStream) -> Result<Vec<Real>> {
        check_s(s)?;
        match self {
            Proposal::Brownian => Ok(y
                .iter()
                .map(|&yi| yi + s.sqrt() * rng.std_normal::<Real>())
                .collect()),
            Proposal::StudentT(k) => Ok(k.sample(y, s, rng)),
        }
    }

    /// `q_s(x | y)`.
    pub fn density(&self, x: &[Real], y: &[Real], s: Real) -> Result<Real> {
        check_s(s)?;
        match self {
            Proposal::Brownian => {
                let d = x.len() as Real;
                let r2 = sq_dist(x, y);
                Ok((2.0 * std::f64::consts::PI * s).powf(-d / 2.0) * (-r2 / (2.0 * s)).exp())
            }
            Proposal::StudentT(k) => Ok(k.density(x, y, s)),
        }
    }

    /// `d q_s(x|y) / ds`.
    pub fn d_density_ds(&self, x: &[Real], y: &[Real], s: Real) -> Result<Real> {
        check_s(s)?;
        match self {
            // The heat kernel solves its own Fokker-Planck equation; using
            // the identical expression keeps the Brownian-target increment
            // exactly zero.
            Proposal::Brownian => self.laplacian_x(x, y, s).map(|l| 0.5 * l),
            Proposal::StudentT(k) => Ok(k.d_density_ds(x, y, s)),
        }
    }

    /// `grad_x q_s(x|y)`.
    pub fn grad_x(&self, x: &[Real], y: &[Real], s: Real) -> Result<Vec<Real>> {
        check_s(s)?;
        match self {
            Proposal::Brownian => {
                let q = self.density(x, y, s)?;
                Ok(x.iter().zip(y).map(|(&xi, &yi)| -q * (xi - yi) / s).collect())
            }
            Proposal::StudentT(k) => Ok(k.grad_x(x, y, s)),
        }
    }

    /// `sum_i d^2 q_s(x|y) / dx_i^2`.
    pub fn laplacian_x(&self, x: &[Real], y: &[Real], s: Real) -> Result<Real> {
        check_s(s)?;
        match self {
            Proposal::Brownian => {
                let d = x.len() as Real;
                let q = self.density(x, y, s)?;
                let r2 = sq_dist(x, y);
                Ok(q * (r2 / (s * s) - d / s))
            }
            Proposal::StudentT(k) => Ok(k.laplacian_x(x, y, s)),
        }
    }
}

fn check_s(s: Real) -> Result<()> {
    if s <= 0.0 || !s.is_finite() {
        return Err(Error::Domain(format!("transition time must be positive, got {s}")));
    }
    Ok(())
}

fn sq_dist(x: &[Real], y: &[Real]) -> Real {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Kernel `q_s(x|y) = C s^{-d/2} (1 + r^2 / (nu s))^{-(nu + d)/2}`.
///
/// The normalizing constant is fixed at construction: in closed form for
/// d = 1, by radial quadrature for d > 1 (cross-checked in tests against
/// the gamma-function expression).
#[derive(Debug, Clone)]
pub struct StudentTKernel {
    nu: Real,
    dim: usize,
    norm: Real,
}

impl StudentTKernel {
    pub fn new(nu: Real, dim: usize) -> Result<Self> {
        if nu <= 0.0 {
            return Err(Error::Domain("degrees of freedom must be positive".into()));
        }
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let norm = if dim == 1 {
            // 1 / integral (1 + x^2/nu)^{-(nu+1)/2} dx = Gamma((nu+1)/2) /
            // (sqrt(nu pi) Gamma(nu/2)).
            (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln())
                .exp()
        } else {
            1.0 / radial_mass(nu, dim)
        };
        Ok(StudentTKernel { nu, dim, norm })
    }

    pub fn nu(&self) -> Real {
        self.nu
    }

    fn sample(&self, y: &[Real], s: Real, rng: &mut RngStream) -> Vec<Real> {
        // X = y + sqrt(s nu / W) Z with W ~ chi^2_nu shared across
        // coordinates: the standard multivariate-t construction.
        let chi2 = ChiSquared::new(self.nu).expect("nu validated");
        let w: Real = chi2.sample(rng);
        let scale = (s * self.nu / w).sqrt();
        y.iter().map(|&yi| yi + scale * rng.std_normal::<Real>()).collect()
    }

    fn u_term(&self, x: &[Real], y: &[Real], s: Real) -> Real {
        1.0 + sq_dist(x, y) / (self.nu * s)
    }

    fn alpha(&self) -> Real {
        (self.nu + self.dim as Real) / 2.0
    }

    fn density(&self, x: &[Real], y: &[Real], s: Real) -> Real {
        let u = self.u_term(x, y, s);
        self.norm * s.powf(-(self.dim as Real) / 2.0) * u.powf(-self.alpha())
    }

    fn d_density_ds(&self, x: &[Real], y: &[Real], s: Real) -> Real {
        let q = self.density(x, y, s);
        let u = self.u_term(x, y, s);
        let r2 = sq_dist(x, y);
        q * (-(self.dim as Real) / (2.0 * s) + self.alpha() * r2 / (self.nu * s * s * u))
    }

    fn grad_x(&self, x: &[Real], y: &[Real], s: Real) -> Vec<Real> {
        let q = self.density(x, y, s);
        let u = self.u_term(x, y, s);
        let coef = -2.0 * self.alpha() / (self.nu * s * u) * q;
        x.iter().zip(y).map(|(&xi, &yi)| coef * (xi - yi)).collect()
    }

    fn laplacian_x(&self, x: &[Real], y: &[Real], s: Real) -> Real {
        let q = self.density(x, y, s);
        let u = self.u_term(x, y, s);
        let r2 = sq_dist(x, y);
        let a = self.alpha();
        let c = 2.0 * a / (self.nu * s);
        -c * q * (self.dim as Real / u - (a + 1.0) * (2.0 * r2 / (self.nu * s)) / (u * u))
    }
}

/// Mass of the unnormalized kernel at s = 1:
/// `S_{d-1} int_0^inf r^{d-1} (1 + r^2/nu)^{-(nu+d)/2} dr`. Substituting
/// `r = sqrt(nu) tan(u)` turns the integrand into the bounded, compactly
/// supported `nu^{d/2} sin^{d-1}(u) cos^{nu-1}(u)` on `[0, pi/2]`, which a
/// point-doubling trapezoid grid handles exactly.
fn radial_mass(nu: Real, dim: usize) -> Real {
    let d = dim as Real;
    // Surface area of the unit (d-1)-sphere; Gamma at half-integers.
    let surface = 2.0 * std::f64::consts::PI.powf(d / 2.0) / gamma_half_integer(dim);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let f = |u: Real| nu.powf(d / 2.0) * u.sin().powf(d - 1.0) * u.cos().powf(nu - 1.0);
    // cos^(nu-1) at pi/2: 0 for nu > 1, nu^(d/2) for nu = 1, and an
    // integrable singularity below that we clip just inside the endpoint.
    let at_end = if nu > 1.0 {
        0.0
    } else if nu == 1.0 {
        nu.powf(d / 2.0)
    } else {
        f(half_pi * (1.0 - 1e-12))
    };
    let mut m = 1 << 10;
    let mut prev = Real::NAN;
    loop {
        let h = half_pi / m as Real;
        let mut acc = 0.5 * (f(0.0) + at_end);
        for k in 1..m {
            acc += f(h * k as Real);
        }
        let integral = acc * h;
        if prev.is_finite() && (integral - prev).abs() <= 1e-11 * integral {
            return surface * integral;
        }
        prev = integral;
        m *= 2;
        assert!(m <= (1 << 24), "radial quadrature failed to converge");
    }
}

/// Gamma(d/2) for integer d, exact recurrences.
fn gamma_half_integer(d: usize) -> Real {
    if d.is_multiple_of(2) {
        // Gamma(k) = (k-1)! for k = d/2.
        (1..d / 2).map(|k| k as Real).product()
    } else {
        // Gamma(1/2 + k) = sqrt(pi) (2k-1)!! / 2^k for k = (d-1)/2.
        let k = (d - 1) / 2;
        let mut acc = std::f64::consts::PI.sqrt();
        for j in 1..=k {
            acc *= j as Real - 0.5;
        }
        acc
    }
}

/// Lanczos approximation of ln Gamma, g = 7, accurate to ~1e-13 for
/// positive arguments.
pub(crate) fn ln_gamma(x: Real) -> Real {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as Real);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
