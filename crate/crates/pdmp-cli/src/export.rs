use anyhow::{bail, Result};

use pdmp::cis::{scale_rho_cv_at, scale_rho_subsample_at, scale_rho};
use pdmp::ctmcmc::{enumerate_gradient_estimates, random_rate, RateEstimator};
use pdmp::targets::grad_log_pi;

use crate::config::ExperimentConfig;
use crate::dataset::{build_workbench, Workbench};
use crate::experiment::{run_smc_experiment, write_atomic};

/// Grid of x values spanning `grid_halfwidth_sd` posterior sds around the
/// anchor.
fn grid(cfg: &ExperimentConfig, wb: &Workbench) -> Vec<f64> {
    let half = cfg.grid_halfwidth_sd * wb.quad.sd();
    let (lo, hi) = (wb.x_hat - half, wb.x_hat + half);
    (0..cfg.grid_points)
        .map(|k| lo + (hi - lo) * k as f64 / (cfg.grid_points - 1) as f64)
        .collect()
}

/// Rate curves at `v = -1` (the switch from negative to positive velocity):
/// gradient, canonical rate and the exhaustive-expectation switching rates
/// of the subsampled estimators.
pub fn rates_curves_rows(cfg: &ExperimentConfig, wb: &Workbench) -> Result<Vec<RatesRow>> {
    let v = [-1.0];
    let simple = RateEstimator::SubsampleSimple;
    let cv = RateEstimator::SubsampleCv { cache: wb.cache.clone() };
    let mut rows = Vec::new();
    for x in grid(cfg, wb) {
        let point = [x];
        let g = grad_log_pi(&wb.target, &point)?;
        let canonical = random_rate(&[-g[0]], &v);
        let expected = |est: &RateEstimator| -> Result<f64> {
            Ok(enumerate_gradient_estimates(est, &wb.target, &point)?
                .iter()
                .map(|(p, e)| p * random_rate(&e.u, &v))
                .sum())
        };
        rows.push(RatesRow {
            x,
            grad_log_pi: g[0],
            canonical,
            subsample: expected(&simple)?,
            cv: expected(&cv)?,
        });
    }
    Ok(rows)
}

pub struct RatesRow {
    pub x: f64,
    pub grad_log_pi: f64,
    pub canonical: f64,
    pub subsample: f64,
    pub cv: f64,
}

/// Exhaustive variances of the subsampled rho estimators on the grid.
pub fn variance_curves_rows(cfg: &ExperimentConfig, wb: &Workbench) -> Result<Vec<VarianceRow>> {
    let n = wb.target.data().len();
    let mut rows = Vec::new();
    for x in grid(cfg, wb) {
        let point = [x];
        let exact = scale_rho(&wb.target, &point)?;
        let mut var_sub = 0.0;
        let mut var_cv = 0.0;
        for j in 0..n {
            for k in 0..n {
                let s = scale_rho_subsample_at(&wb.target, &point, j, k)?;
                var_sub += (s - exact) * (s - exact);
                let c = scale_rho_cv_at(&wb.target, &wb.cache, &point, j, k)?;
                var_cv += (c - exact) * (c - exact);
            }
        }
        let pairs = (n * n) as f64;
        rows.push(VarianceRow { x, var_rho_subsample: var_sub / pairs, var_rho_cv: var_cv / pairs });
    }
    Ok(rows)
}

pub struct VarianceRow {
    pub x: f64,
    pub var_rho_subsample: f64,
    pub var_rho_cv: f64,
}

pub fn export_command(cfg: &ExperimentConfig, kind: &str) -> Result<std::path::PathBuf> {
    cfg.validate()?;
    let wb = build_workbench(cfg)?;
    let path = cfg.artifact_path(&format!("{kind}.csv"));
    let csv = match kind {
        "rates_curves" => {
            let mut out = String::from("x,grad_log_pi,rate_canonical,rate_subsample,rate_cv\n");
            for r in rates_curves_rows(cfg, &wb)? {
                out.push_str(&format!(
                    "{:.8},{:.8},{:.8},{:.8},{:.8}\n",
                    r.x, r.grad_log_pi, r.canonical, r.subsample, r.cv
                ));
            }
            out
        }
        "variance_curves" => {
            let mut out = String::from("x,var_rho_subsample,var_rho_cv\n");
            for r in variance_curves_rows(cfg, &wb)? {
                out.push_str(&format!(
                    "{:.8},{:.8e},{:.8e}\n",
                    r.x, r.var_rho_subsample, r.var_rho_cv
                ));
            }
            out
        }
        "posterior_hist" => {
            let run = run_smc_experiment(cfg)?;
            let horizon = cfg.h * cfg.steps as f64;
            let (xs, ws) = run.output.pooled_weighted(horizon / 4.0);
            let bins = 25;
            let lo = wb.quad.mode() - 6.0 * wb.quad.sd();
            let hi = wb.quad.mode() + 6.0 * wb.quad.sd();
            let width = (hi - lo) / bins as f64;
            let total: f64 = ws.iter().sum();
            let mut weighted = vec![0.0f64; bins];
            for (x, w) in xs.iter().zip(&ws) {
                if *x >= lo && *x < hi {
                    let b = (((x - lo) / width) as usize).min(bins - 1);
                    weighted[b] += w;
                }
            }
            let mut out = String::from("bin_lo,bin_hi,weighted_mass,quadrature_mass\n");
            for (b, mass) in weighted.iter().enumerate() {
                let a = lo + width * b as f64;
                out.push_str(&format!(
                    "{:.6},{:.6},{:.8},{:.8}\n",
                    a,
                    a + width,
                    mass / total,
                    wb.quad.interval_mass(a, a + width)
                ));
            }
            out
        }
        other => bail!("unknown export kind {other:?} (rates_curves|variance_curves|posterior_hist)"),
    };
    write_atomic(&path, csv.as_bytes())?;
    let manifest_path = cfg.artifact_path(&format!("{kind}.manifest.txt"));
    write_atomic(
        &manifest_path,
        cfg.manifest(&format!("export {kind}"), wb.hash, std::slice::from_ref(&path))
            .as_bytes(),
    )?;
    Ok(path)
}
