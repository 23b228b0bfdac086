use anyhow::Result;

use pdmp::ctmcmc::{ess, run_ctmcmc, sample_coordinate, CtmcmcConfig, SamplerKind};
use pdmp::pdp::{Position, Velocity};
use pdmp::RngStream;

use crate::config::ExperimentConfig;
use crate::dataset::build_workbench;
use crate::experiment::{bound_policy, rate_estimator, write_atomic};
use crate::summary::SummaryStats;

/// The method columns of the sample-size comparison: the canonical sampler
/// under the per-factor-sum and true-max envelopes, plain and non-uniform
/// subsampling, and subsampling with control variates.
pub const METHODS: [(&str, &str, &str); 5] = [
    ("canonical-sum", "exact", "sum"),
    ("canonical-max", "exact", "max"),
    ("subsample-simple", "simple", "simple"),
    ("subsample-nonuniform", "nonuniform", "sum"),
    ("subsample-cv", "cv", "cv"),
];

#[derive(Debug, Clone)]
pub struct Table1Cell {
    pub n: usize,
    pub method: String,
    pub estimator: String,
    pub bound: String,
    pub horizon: f64,
    pub chains: usize,
    pub pooled_ess: f64,
    pub t_per_ess: f64,
    pub iters_per_unit_time: f64,
    pub iters_per_ess: f64,
    pub factor_evals: u64,
    pub error: Option<String>,
}

/// One pooled cell: `chains` independent runs of the configured sampler,
/// ESS summed across chains (each truncated at its sample count).
fn run_cell(
    base: &ExperimentConfig,
    wb: &crate::dataset::Workbench,
    n: usize,
    method: (&str, &str, &str),
    horizon: f64,
    chains: usize,
) -> Table1Cell {
    let (name, estimator, bound) = method;
    let mut cell = Table1Cell {
        n,
        method: name.into(),
        estimator: estimator.into(),
        bound: bound.into(),
        horizon,
        chains,
        pooled_ess: 0.0,
        t_per_ess: f64::NAN,
        iters_per_unit_time: f64::NAN,
        iters_per_ess: f64::NAN,
        factor_evals: 0,
        error: None,
    };
    let run = || -> Result<(f64, f64, f64, u64)> {
        let mut cfg = base.clone();
        cfg.n = n;
        cfg.estimator = estimator.into();
        cfg.bound = bound.into();
        cfg.horizon = horizon;
        cfg.validate()?;
        let est = rate_estimator(&cfg, wb)?;
        let policy = bound_policy(&cfg, wb)?;
        let spacing = (wb.quad.sd() / 2.0).min(1.0);
        let burn = cfg.burn_in();
        let mut pooled_ess = 0.0;
        let mut proposals = 0u64;
        let mut factor_evals = 0u64;
        for chain in 0..chains {
            let ctcfg = CtmcmcConfig {
                kind: SamplerKind::ZigZag,
                estimator: est.clone(),
                bound: policy.clone(),
                extra_rate: 0.0,
                horizon,
            };
            let mut rng = RngStream::new(cfg.seed, cfg.stream + 1 + chain as u64);
            let x0 = Position(vec![wb.quad.sample(&mut rng)]);
            let (skel, counters) =
                run_ctmcmc(&ctcfg, &wb.target, x0, Velocity(vec![1.0]), &mut rng)?;
            let series = sample_coordinate(&skel, 0, spacing, burn)?;
            pooled_ess += ess(&series)?.min(series.len() as f64);
            proposals += counters.proposals;
            factor_evals += counters.factor_evals;
        }
        let t_per_ess = chains as f64 * (horizon - burn) / pooled_ess;
        let ipu = proposals as f64 / (chains as f64 * horizon);
        Ok((t_per_ess, ipu, pooled_ess, factor_evals))
    };
    match run() {
        Ok((t_per_ess, ipu, pooled_ess, factor_evals)) => {
            cell.t_per_ess = t_per_ess;
            cell.iters_per_unit_time = ipu;
            cell.iters_per_ess = t_per_ess * ipu;
            cell.pooled_ess = pooled_ess;
            cell.factor_evals = factor_evals;
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Sweep every method over the configured sample sizes. Cell failures are
/// recorded in the cell and the sweep continues. Cells are independent
/// given their streams, so they could equally run concurrently.
pub fn table1_sweep(base: &ExperimentConfig) -> Vec<Table1Cell> {
    let mut cells = Vec::new();
    for (i, &n) in base.t1_ns.iter().enumerate() {
        let horizon = base.t1_horizons[i];
        let chains = base.t1_chains[i];
        let mut cfg = base.clone();
        cfg.n = n;
        let wb = match build_workbench(&cfg) {
            Ok(wb) => wb,
            Err(e) => {
                for method in METHODS {
                    cells.push(Table1Cell {
                        n,
                        method: method.0.into(),
                        estimator: method.1.into(),
                        bound: method.2.into(),
                        horizon,
                        chains,
                        pooled_ess: 0.0,
                        t_per_ess: f64::NAN,
                        iters_per_unit_time: f64::NAN,
                        iters_per_ess: f64::NAN,
                        factor_evals: 0,
                        error: Some(e.to_string()),
                    });
                }
                continue;
            }
        };
        for method in METHODS {
            // The exact estimator pays n factor evaluations per proposal;
            // trim its chain count (and horizon under the expensive
            // sum-envelope at the largest n) to keep the sweep desk-scale.
            let (mut cell_chains, mut cell_horizon) = (chains, horizon);
            if method.1 == "exact" {
                cell_chains = if n >= 15_000 {
                    1
                } else if n >= 1500 {
                    chains.min(2)
                } else {
                    chains
                };
                if method.2 == "sum" && n >= 15_000 {
                    cell_horizon = horizon * 0.4;
                }
            }
            cells.push(run_cell(base, &wb, n, method, cell_horizon, cell_chains));
        }
    }
    cells
}

pub fn cells_to_csv(cells: &[Table1Cell]) -> String {
    let mut out = String::from(
        "n,method,estimator,bound,horizon,chains,t_per_ess,iters_per_unit_time,iters_per_ess,factor_evals,error\n",
    );
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{}\n",
            c.n,
            c.method,
            c.estimator,
            c.bound,
            c.horizon,
            c.chains,
            c.t_per_ess,
            c.iters_per_unit_time,
            c.iters_per_ess,
            c.factor_evals,
            c.error.as_deref().unwrap_or("")
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrendReport {
    /// t per ESS decreases monotonically in n for both canonical columns.
    pub canonical_t_monotone: bool,
    /// ... and for the control-variate column.
    pub cv_t_monotone: bool,
    /// max/min of iterations-per-ESS for the CV column across n.
    pub cv_flatness_ratio: f64,
    /// Growth of iterations-per-ESS for plain subsampling from the first to
    /// the second n.
    pub simple_growth: f64,
    pub lines: Vec<String>,
}

pub fn method_column<'a>(cells: &'a [Table1Cell], method: &str) -> Vec<&'a Table1Cell> {
    cells.iter().filter(|c| c.method == method && c.error.is_none()).collect()
}

fn monotone_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

pub fn check_trends(cells: &[Table1Cell]) -> TrendReport {
    let mut lines = Vec::new();
    let t_of = |method: &str| -> Vec<f64> {
        method_column(cells, method).iter().map(|c| c.t_per_ess).collect()
    };
    let ipe_of = |method: &str| -> Vec<f64> {
        method_column(cells, method).iter().map(|c| c.iters_per_ess).collect()
    };

    let canon_sum_t = t_of("canonical-sum");
    let canon_max_t = t_of("canonical-max");
    let cv_t = t_of("subsample-cv");
    let canonical_t_monotone = monotone_decreasing(&canon_sum_t) && monotone_decreasing(&canon_max_t);
    let cv_t_monotone = monotone_decreasing(&cv_t);
    lines.push(format!(
        "t_per_ess canonical-sum = {canon_sum_t:.3?}, canonical-max = {canon_max_t:.3?}, monotone = {canonical_t_monotone}"
    ));
    lines.push(format!("t_per_ess subsample-cv = {cv_t:.3?}, monotone = {cv_t_monotone}"));

    let cv_ipe = ipe_of("subsample-cv");
    let cv_flatness_ratio = if cv_ipe.is_empty() {
        f64::NAN
    } else {
        cv_ipe.iter().cloned().fold(0.0, f64::max) / cv_ipe.iter().cloned().fold(f64::MAX, f64::min)
    };
    lines.push(format!(
        "iters_per_ess subsample-cv = {cv_ipe:.0?}, max/min = {cv_flatness_ratio:.2}"
    ));

    let simple_ipe = ipe_of("subsample-simple");
    let simple_growth = if simple_ipe.len() >= 2 { simple_ipe[1] / simple_ipe[0] } else { f64::NAN };
    lines.push(format!(
        "iters_per_ess subsample-simple = {simple_ipe:.0?}, growth n0 -> n1 = {simple_growth:.2}"
    ));
    let nonuni_ipe = ipe_of("subsample-nonuniform");
    lines.push(format!("iters_per_ess subsample-nonuniform = {nonuni_ipe:.0?}"));

    TrendReport {
        canonical_t_monotone,
        cv_t_monotone,
        cv_flatness_ratio,
        simple_growth,
        lines,
    }
}

pub fn table1_command(cfg: &ExperimentConfig) -> Result<Vec<Table1Cell>> {
    cfg.validate()?;
    let cells = table1_sweep(cfg);
    let csv_path = cfg.artifact_path("table1.csv");
    write_atomic(&csv_path, cells_to_csv(&cells).as_bytes())?;
    let report = check_trends(&cells);
    let trends_path = cfg.artifact_path("trends.txt");
    write_atomic(&trends_path, (report.lines.join("\n") + "\n").as_bytes())?;
    let manifest_path = cfg.artifact_path("manifest.txt");
    write_atomic(
        &manifest_path,
        cfg.manifest("table1", 0, &[csv_path, trends_path]).as_bytes(),
    )?;
    Ok(cells)
}

/// Summary-stats view of a cell (keeps the product identity testable on
/// sweep output).
pub fn cell_summary(cell: &Table1Cell) -> SummaryStats {
    SummaryStats {
        t_per_ess: cell.t_per_ess,
        iters_per_unit_time: cell.iters_per_unit_time,
        iters_per_ess: cell.iters_per_ess,
        factor_evals_per_ess: cell.factor_evals as f64 / (cell.chains as f64 * cell.horizon)
            * cell.t_per_ess,
        negative_weight_fraction: 0.0,
        wall_time: 0.0,
    }
}
