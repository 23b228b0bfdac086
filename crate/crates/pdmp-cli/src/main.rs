use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pdmp_cli::config::ExperimentConfig;
use pdmp_cli::experiment::{
    cis_command, sample_command, smc_command, variance_study_command,
};
use pdmp_cli::export::export_command;
use pdmp_cli::table1::{check_trends, table1_command};

/// Continuous-time Monte Carlo experiment runner.
#[derive(Parser)]
#[command(name = "pdmp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a continuous-time MCMC sampler and write the skeleton.
    Sample(RunArgs),
    /// Run a single-particle continuous-time importance sampler.
    Cis(RunArgs),
    /// Run continuous-time SMC with sign-preserving resampling.
    Smc(RunArgs),
    /// Weight-variance / data-access study across sample sizes.
    VarianceStudy(RunArgs),
    /// Sample-size sweep over the sampler implementations.
    Table1(RunArgs),
    /// Export figure data (rates, variances, posterior histogram) as CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    bound: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Time horizon of the run.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sub-stream of the seed.
    #[arg(long)]
    stream: Option<u64>,
    /// Primary artifact path (other outputs derive from it).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// Extra key=value overrides for any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ExportArgs {
    /// rates_curves | variance_curves | posterior_hist
    #[arg(long)]
    kind: String,
    #[command(flatten)]
    run: RunArgs,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(v) = &args.algo {
        cfg.algo = v.clone();
    }
    if let Some(v) = &args.estimator {
        cfg.estimator = v.clone();
    }
    if let Some(v) = &args.bound {
        cfg.bound = v.clone();
    }
    if let Some(v) = &args.target {
        cfg.target = v.clone();
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.stream {
        cfg.stream = v;
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = &args.label {
        cfg.label = v.clone();
    }
    for kv in &args.set {
        let (key, value) = kv
            .split_once('=')
            .with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
        cfg.apply_kv(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sample(args) => {
            let cfg = build_config(&args)?;
            let artifacts = sample_command(&cfg)?;
            let s = &artifacts.summary;
            println!(
                "t_per_ess={:.4} iters_per_unit_time={:.3} iters_per_ess={:.1}",
                s.t_per_ess, s.iters_per_unit_time, s.iters_per_ess
            );
            for path in &artifacts.outputs {
                println!("wrote {}", path.display());
            }
            eprintln!("wall time: {:.2}s", s.wall_time);
        }
        Command::Cis(args) => {
            let cfg = build_config(&args)?;
            let artifacts = cis_command(&cfg)?;
            println!(
                "events_per_unit_time={:.3} negative_weight_fraction={:.2e}",
                artifacts.summary.iters_per_unit_time, artifacts.summary.negative_weight_fraction
            );
            for path in &artifacts.outputs {
                println!("wrote {}", path.display());
            }
            eprintln!("wall time: {:.2}s", artifacts.summary.wall_time);
        }
        Command::Smc(args) => {
            let cfg = build_config(&args)?;
            let artifacts = smc_command(&cfg)?;
            println!(
                "events_per_unit_time={:.3} negative_weight_fraction={:.2e}",
                artifacts.summary.iters_per_unit_time, artifacts.summary.negative_weight_fraction
            );
            for path in &artifacts.outputs {
                println!("wrote {}", path.display());
            }
            eprintln!("wall time: {:.2}s", artifacts.summary.wall_time);
        }
        Command::VarianceStudy(args) => {
            let cfg = build_config(&args)?;
            let artifacts = variance_study_command(&cfg)?;
            for path in &artifacts.outputs {
                println!("wrote {}", path.display());
            }
            eprintln!("wall time: {:.2}s", artifacts.summary.wall_time);
        }
        Command::Table1(args) => {
            let cfg = build_config(&args)?;
            let cells = table1_command(&cfg)?;
            for line in check_trends(&cells).lines {
                println!("{line}");
            }
            for cell in &cells {
                if let Some(err) = &cell.error {
                    eprintln!("cell n={} method={}: {err}", cell.n, cell.method);
                }
            }
        }
        Command::Export(args) => {
            let cfg = build_config(&args.run)?;
            let path = export_command(&cfg, &args.kind)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
