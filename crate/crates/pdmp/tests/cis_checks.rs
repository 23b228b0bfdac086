//! CIS/SCALE behaviour beyond single functions: the Fokker-Planck fixed
//! point, the shape of rho for the mixture posterior, weighted-sample
//! correctness on a closed-form target, and the documented initialization
//! failure mode.

use pdmp::cis::{
    langevin_rho, run_smc, scale_rho, EventRatePolicy, InitialDist, Proposal, RhoEstimator,
    ScaleRho, SmcConfig,
};
use pdmp::targets::{
    log_pi_unnorm, simulate_mixture_data, FactorizedTarget, IsoGaussian, MixtureTarget,
    PosteriorQuadrature,
};
use pdmp::{Real, RngStream};

fn mixture(n: usize, seed: u64) -> MixtureTarget {
    let mut rng = RngStream::new(seed, 0);
    MixtureTarget::new(simulate_mixture_data(n, 4.0, 0.95, &mut rng), 0.95)
}

/// Substituting pi into the SCALE Fokker-Planck right-hand side:
/// (1/2) pi'' - kill(x) pi must vanish. pi'' comes from a five-point
/// finite-difference of exp(log pi) and the kill term from the analytic
/// log-derivatives, so the residual is a genuine two-route check.
#[test]
fn scale_fokker_planck_fixed_point() {
    let target = mixture(80, 41);
    let quad = PosteriorQuadrature::build(&target, -30.0, 30.0).unwrap();
    let center = quad.mode();
    let l0 = log_pi_unnorm(&target, &[center]);
    let pi = |x: Real| (log_pi_unnorm(&target, &[x]) - l0).exp();
    let h = 1e-3;
    let mut worst_residual: Real = 0.0;
    let mut equation_scale: Real = 0.0;
    for k in 0..=50 {
        let x = center - 3.0 * quad.sd() + 6.0 * quad.sd() * k as Real / 50.0;
        let second = (-pi(x + 2.0 * h) + 16.0 * pi(x + h) - 30.0 * pi(x) + 16.0 * pi(x - h)
            - pi(x - 2.0 * h))
            / (12.0 * h * h);
        // kill(x) = -rho(x) for the SCALE process.
        let kill = -scale_rho(&target, &[x]).unwrap();
        let residual = 0.5 * second - kill * pi(x);
        worst_residual = worst_residual.max(residual.abs());
        equation_scale = equation_scale.max(0.5 * second.abs()).max(kill.abs() * pi(x));
    }
    let relative = worst_residual / equation_scale;
    assert!(relative < 1e-6, "worst residual {relative} of the equation scale");
}

#[test]
fn mean_rho_under_the_posterior_is_zero() {
    let target = mixture(150, 42);
    let quad = PosteriorQuadrature::build(&target, -30.0, 30.0).unwrap();
    let (lo, hi) = (quad.mode() - 12.0 * quad.sd(), quad.mode() + 12.0 * quad.sd());
    let m = 20_000;
    let step = (hi - lo) / m as Real;
    let mut integral = 0.0;
    let mut rho_scale: Real = 0.0;
    for k in 0..=m {
        let x = lo + step * k as Real;
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        let rho = scale_rho(&target, &[x]).unwrap();
        rho_scale = rho_scale.max(rho.abs());
        integral += w * quad.pdf(x) * rho * step;
    }
    assert!(
        integral.abs() / rho_scale < 1e-3,
        "E[rho] = {integral}, scale {rho_scale}"
    );
}

#[test]
fn mixture_rho_is_multimodal_and_matches_density_route() {
    let target = mixture(150, 43);
    let quad = PosteriorQuadrature::build(&target, -30.0, 30.0).unwrap();
    // Evaluate rho on a grid spanning the data-driven modes.
    let (lo, hi) = (-10.0, 10.0);
    let m = 400;
    let rho: Vec<Real> = (0..=m)
        .map(|k| scale_rho(&target, &[lo + (hi - lo) * k as Real / m as Real]).unwrap())
        .collect();
    let mut maxima = 0;
    for k in 1..m {
        if rho[k] > rho[k - 1] && rho[k] > rho[k + 1] && rho[k] > 0.0 {
            maxima += 1;
        }
    }
    assert!(maxima >= 2, "rho should have multiple pronounced modes, found {maxima}");

    // Cross-check the log-derivative form against -pi''/(2 pi) computed by
    // finite differences of the unnormalized density.
    let l0 = log_pi_unnorm(&target, &[quad.mode()]);
    let h = 1e-3;
    for k in 0..=40 {
        let x = quad.mode() - 2.0 + 4.0 * k as Real / 40.0;
        let pi = |z: Real| (log_pi_unnorm(&target, &[z]) - l0).exp();
        let second = (-pi(x + 2.0 * h) + 16.0 * pi(x + h) - 30.0 * pi(x) + 16.0 * pi(x - h)
            - pi(x - 2.0 * h))
            / (12.0 * h * h);
        let via_density = -second / (2.0 * pi(x));
        let direct = scale_rho(&target, &[x]).unwrap();
        assert!(
            (via_density - direct).abs() / direct.abs().max(1.0) < 1e-5,
            "x={x}: density route {via_density} vs {direct}"
        );
    }
}

#[test]
fn gaussian_scale_smc_recovers_the_mean() {
    // Weighted mean over replicate SMC runs within 3 standard errors of the
    // true mean (0). The killed-Brownian target for N(0,1) has rho
    // unbounded below, so resampling keeps the weights alive.
    let target = IsoGaussian::standard(1);
    let proposal = Proposal::Brownian;
    let policy = EventRatePolicy::Constant(12.0);
    let cfg = SmcConfig { n_particles: 100, h: 1.0, k_steps: 20, ess_threshold: 50.0 };
    let reps = 24;
    let mut means = Vec::with_capacity(reps);
    for rep in 0..reps {
        let rho = ScaleRho { target: &target, estimator: RhoEstimator::Exact };
        let mut rng = RngStream::new(500 + rep as u64, 0);
        let out = run_smc(
            &proposal,
            &rho,
            &policy,
            &InitialDist::GaussianPrior { sd: 1.0 },
            1,
            &cfg,
            &mut rng,
        )
        .unwrap();
        let (xs, ws) = out.pooled_weighted(5.0);
        let num: Real = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        let den: Real = ws.iter().sum();
        means.push(num / den);
    }
    let mean: Real = means.iter().sum::<Real>() / reps as Real;
    let var: Real =
        means.iter().map(|m| (m - mean) * (m - mean)).sum::<Real>() / (reps as Real - 1.0);
    let se = (var / reps as Real).sqrt();
    assert!(
        mean.abs() < 3.0 * se.max(0.02),
        "weighted mean {mean} (se {se})"
    );
}

#[test]
fn langevin_drift_term_variance_scales_like_one_over_s() {
    // Under the Brownian proposal, (y - x)/s for x ~ q_s(.|y) has variance
    // exactly 1/s.
    let proposal = Proposal::Brownian;
    let mut points = Vec::new();
    for (idx, s) in [0.01, 0.1, 1.0].into_iter().enumerate() {
        let mut rng = RngStream::new(60 + idx as u64, 0);
        let y = [0.7];
        let reps = 40_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..reps {
            let x = proposal.sample(&y, s, &mut rng).unwrap();
            let term = (y[0] - x[0]) / s;
            acc += term;
            acc2 += term * term;
        }
        let var = acc2 / reps as Real - (acc / reps as Real).powi(2);
        points.push((s as Real, var));
    }
    let slope = ((points[2].1 / points[0].1) as Real).ln() / ((points[2].0 / points[0].0) as Real).ln();
    assert!((slope + 1.0).abs() < 0.2, "log-log slope {slope}");

    // And the subsampled Langevin increment stays centred on the exact one.
    let target = mixture(30, 61);
    let (x, y, s) = ([3.9], [4.0], 0.05);
    let exact = langevin_rho(&target, &x, &y, s).unwrap();
    let mut mean = 0.0;
    for j in 0..target.n_factors() {
        mean += pdmp::cis::langevin_rho_subsample_at(&target, &x, &y, s, j).unwrap();
    }
    mean /= target.n_factors() as Real;
    assert!((mean - exact).abs() <= 1e-9 * exact.abs().max(1.0));
}

#[test]
fn badly_initialized_smc_sticks_to_the_local_mode() {
    // Particles started on [-10, -5] get stuck near the local mode of rho
    // and put almost no weighted mass near the posterior mode at 4.
    let target = mixture(150, 44);
    let proposal = Proposal::Brownian;
    let policy = EventRatePolicy::Constant(12.0);
    let cfg = SmcConfig { n_particles: 100, h: 1.0, k_steps: 100, ess_threshold: 50.0 };
    let rho = ScaleRho { target: &target, estimator: RhoEstimator::Exact };
    let mut rng = RngStream::new(70, 0);
    let out = run_smc(
        &proposal,
        &rho,
        &policy,
        &InitialDist::Uniform { lo: -10.0, hi: -5.0 },
        1,
        &cfg,
        &mut rng,
    )
    .unwrap();
    let (xs, ws) = out.pooled_weighted(25.0);
    let total: Real = ws.iter().map(|w| w.abs()).sum();
    let near_mode: Real = xs
        .iter()
        .zip(&ws)
        .filter(|(x, _)| (**x - 4.0).abs() < 1.5)
        .map(|(_, w)| w.abs())
        .sum();
    assert!(
        near_mode / total < 0.10,
        "stuck-mode fraction near 4: {}",
        near_mode / total
    );
}
