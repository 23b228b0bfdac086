use std::fmt::Write as _;

/// Derived run diagnostics. `iters_per_ess` is the product of the first two
/// fields, matching how the sample-size table combines them.
#[derive(Debug, Clone)]
pub struct SummaryStats {
    pub t_per_ess: f64,
    pub iters_per_unit_time: f64,
    pub iters_per_ess: f64,
    pub factor_evals_per_ess: f64,
    pub negative_weight_fraction: f64,
    /// Seconds; diagnostic only, never written to artifact files so that
    /// identical configs produce byte-identical outputs.
    pub wall_time: f64,
}

impl SummaryStats {
    pub fn from_run(
        horizon: f64,
        burn_in: f64,
        ess: f64,
        proposals: u64,
        factor_evals: u64,
        negative_weight_fraction: f64,
        wall_time: f64,
    ) -> Self {
        let t_per_ess = (horizon - burn_in) / ess;
        let iters_per_unit_time = proposals as f64 / horizon;
        SummaryStats {
            t_per_ess,
            iters_per_unit_time,
            iters_per_ess: t_per_ess * iters_per_unit_time,
            factor_evals_per_ess: factor_evals as f64 / horizon * t_per_ess,
            negative_weight_fraction,
            wall_time,
        }
    }

    /// The product identity the summary must satisfy.
    pub fn identity_gap(&self) -> f64 {
        let expect = self.t_per_ess * self.iters_per_unit_time;
        if expect == 0.0 {
            self.iters_per_ess.abs()
        } else {
            (self.iters_per_ess - expect).abs() / expect.abs()
        }
    }
}

pub const SUMMARY_HEADER: &str =
    "n,algo,estimator,bound,t_per_ess,iters_per_unit_time,iters_per_ess,factor_evals";

/// One CSV row in the fixed column order.
pub fn summary_row(
    n: usize,
    algo: &str,
    estimator: &str,
    bound: &str,
    stats: &SummaryStats,
    factor_evals: u64,
) -> String {
    let mut row = String::new();
    write!(
        row,
        "{n},{algo},{estimator},{bound},{:.6},{:.6},{:.6},{factor_evals}",
        stats.t_per_ess, stats.iters_per_unit_time, stats.iters_per_ess
    )
    .unwrap();
    row
}
