use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Result};

use pdmp::cis::{
    run_cis, run_smc, EventRatePolicy, GenericRho, IncrementalRho, InitialDist, Proposal,
    RhoEstimator, ScaleRho, SmcConfig, SmcOutput, TargetProcess,
};
use pdmp::ctmcmc::{
    ess, refresh_velocity, run_ctmcmc, sample_coordinate, BoundPolicy, CostCounters, CtmcmcConfig,
    RateEstimator, SamplerKind,
};
use pdmp::diagnostics::weighted_ess;
use pdmp::pdp::{Position, Skeleton, Velocity};
use pdmp::targets::{global_rate_bound_simple, global_rate_bound_sum, true_max_grad_bound, IsoGaussian};
use pdmp::{Real, RngStream};

use crate::config::ExperimentConfig;
use crate::dataset::{build_workbench, Workbench};
use crate::summary::{summary_row, SummaryStats, SUMMARY_HEADER};

pub struct RunArtifacts {
    pub summary: SummaryStats,
    pub outputs: Vec<PathBuf>,
}

/// Write-then-rename so partially written artifacts never appear.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sampler_kind(cfg: &ExperimentConfig) -> Result<SamplerKind> {
    Ok(match cfg.algo.as_str() {
        "reflect" => SamplerKind::PureReflection { refresh_rate: cfg.refresh_rate },
        "bps" => SamplerKind::Bps { refresh_rate: cfg.refresh_rate },
        "zigzag" => SamplerKind::ZigZag,
        other => bail!("unknown algo {other}"),
    })
}

pub fn rate_estimator(cfg: &ExperimentConfig, wb: &Workbench) -> Result<RateEstimator> {
    Ok(match cfg.estimator.as_str() {
        "exact" => RateEstimator::Exact,
        "simple" => RateEstimator::SubsampleSimple,
        "nonuniform" => RateEstimator::SubsampleNonUniform { table: wb.table.clone() },
        "cv" => RateEstimator::SubsampleCv { cache: wb.cache.clone() },
        "hybrid" => RateEstimator::Hybrid {
            cache: wb.cache.clone(),
            threshold: cfg.hybrid_k / (cfg.n as f64).sqrt(),
        },
        other => bail!("unknown estimator {other}"),
    })
}

pub fn bound_policy(cfg: &ExperimentConfig, wb: &Workbench) -> Result<BoundPolicy> {
    Ok(match cfg.bound_name().as_str() {
        "simple" => BoundPolicy::Constant {
            rate: global_rate_bound_simple(&wb.table),
            interval: Some(wb.table.interval),
        },
        "sum" => BoundPolicy::Constant {
            rate: global_rate_bound_sum(&wb.table),
            interval: Some(wb.table.interval),
        },
        "max" => BoundPolicy::Constant {
            rate: true_max_grad_bound(&wb.target, wb.target.bound_search_interval())?,
            interval: Some(wb.table.interval),
        },
        "cv" => BoundPolicy::ControlVariate { cache: wb.cache.clone(), table: wb.table.clone() },
        "hybrid" => BoundPolicy::Hybrid {
            cache: wb.cache.clone(),
            table: wb.table.clone(),
            threshold: cfg.hybrid_k / (cfg.n as f64).sqrt(),
            global: global_rate_bound_simple(&wb.table),
        },
        other => bail!("unknown bound {other}"),
    })
}

fn initial_velocity(cfg: &ExperimentConfig, dim: usize, rng: &mut RngStream) -> Velocity<Real> {
    if cfg.algo == "zigzag" {
        Velocity(vec![1.0; dim])
    } else {
        refresh_velocity(dim, rng)
    }
}

/// ESS-grid spacing: explicit config value, else min(1, posterior sd / 2).
fn ess_spacing(cfg: &ExperimentConfig, sd: f64) -> f64 {
    if cfg.ess_spacing > 0.0 {
        cfg.ess_spacing
    } else {
        (sd / 2.0).min(1.0)
    }
}

pub struct SampleRun {
    pub skeleton: Skeleton<Real>,
    pub counters: CostCounters,
    pub ess: f64,
    pub sd: f64,
    pub dataset_hash: u64,
}

/// Run the configured continuous-time MCMC sampler (no file output).
pub fn run_sample(cfg: &ExperimentConfig) -> Result<SampleRun> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed, cfg.stream);
    let (skeleton, counters, sd, hash) = if cfg.target == "gaussian" {
        let target = IsoGaussian::new(cfg.dim, cfg.variance);
        let ctcfg = CtmcmcConfig {
            kind: sampler_kind(cfg)?,
            estimator: RateEstimator::Exact,
            bound: BoundPolicy::GaussianCanonical { variance: cfg.variance },
            extra_rate: cfg.extra_rate,
            horizon: cfg.horizon,
        };
        let x0 = Position(
            (0..cfg.dim)
                .map(|_| cfg.variance.sqrt() * rng.std_normal::<Real>())
                .collect(),
        );
        let v0 = initial_velocity(cfg, cfg.dim, &mut rng);
        let (skel, counters) = run_ctmcmc(&ctcfg, &target, x0, v0, &mut rng)?;
        (skel, counters, cfg.variance.sqrt(), 0)
    } else {
        let wb = build_workbench(cfg)?;
        let ctcfg = CtmcmcConfig {
            kind: sampler_kind(cfg)?,
            estimator: rate_estimator(cfg, &wb)?,
            bound: bound_policy(cfg, &wb)?,
            extra_rate: cfg.extra_rate,
            horizon: cfg.horizon,
        };
        let x0 = Position(vec![wb.quad.sample(&mut rng)]);
        let v0 = initial_velocity(cfg, 1, &mut rng);
        let (skel, counters) = run_ctmcmc(&ctcfg, &wb.target, x0, v0, &mut rng)?;
        (skel, counters, wb.quad.sd(), wb.hash)
    };
    let spacing = ess_spacing(cfg, sd);
    let series = sample_coordinate(&skeleton, 0, spacing, cfg.burn_in())?;
    let ess_value = ess(&series)?.min(series.len() as f64);
    Ok(SampleRun { skeleton, counters, ess: ess_value, sd, dataset_hash: hash })
}

/// `sample` end-to-end: run, then write the skeleton JSON-lines, the
/// one-row summary CSV and the manifest.
pub fn sample_command(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let started = Instant::now();
    let run = run_sample(cfg)?;
    let stats = SummaryStats::from_run(
        cfg.horizon,
        cfg.burn_in(),
        run.ess,
        run.counters.proposals,
        run.counters.factor_evals,
        0.0,
        started.elapsed().as_secs_f64(),
    );

    let skel_path = cfg.artifact_path("skeleton.jsonl");
    let mut buf = Vec::new();
    run.skeleton.write_jsonl(&mut buf, cfg.seed, cfg.stream)?;
    write_atomic(&skel_path, &buf)?;

    let summary_path = cfg.artifact_path("summary.csv");
    let row = summary_row(
        cfg.n,
        &cfg.algo,
        &cfg.estimator,
        &cfg.bound_name(),
        &stats,
        run.counters.factor_evals,
    );
    write_atomic(&summary_path, format!("{SUMMARY_HEADER}\n{row}\n").as_bytes())?;

    let outputs = vec![skel_path, summary_path];
    let manifest_path = cfg.artifact_path("manifest.txt");
    write_atomic(
        &manifest_path,
        cfg.manifest("sample", run.dataset_hash, &outputs).as_bytes(),
    )?;
    let mut outputs = outputs;
    outputs.push(manifest_path);
    Ok(RunArtifacts { summary: stats, outputs })
}

pub fn rho_estimator(cfg: &ExperimentConfig, wb: &Workbench) -> Result<RhoEstimator> {
    Ok(match cfg.rho.as_str() {
        "exact" => RhoEstimator::Exact,
        "subsample" => RhoEstimator::Subsample,
        "cv" => RhoEstimator::SubsampleCv { cache: wb.cache.clone() },
        other => bail!("unknown rho {other}"),
    })
}

/// The incremental weight matching the configured proposal: closed-form
/// SCALE increments under Brownian transitions, the Fokker-Planck operator
/// route for anything else (the increment depends on the proposal kernel).
pub fn incremental_rho<'a>(
    cfg: &ExperimentConfig,
    wb: &'a Workbench,
) -> Result<Box<dyn IncrementalRho + 'a>> {
    if cfg.proposal == "brownian" {
        Ok(Box::new(ScaleRho { target: &wb.target, estimator: rho_estimator(cfg, wb)? }))
    } else {
        Ok(Box::new(GenericRho {
            process: TargetProcess::Scale { target: &wb.target },
            proposal: proposal(cfg)?,
            accesses: cfg.n as u64,
        }))
    }
}

pub fn event_rate_policy(cfg: &ExperimentConfig, wb: &Workbench) -> EventRatePolicy {
    match cfg.rate_policy.as_str() {
        "anchor" => {
            let n = cfg.n as f64;
            EventRatePolicy::AnchorQuadratic { base: 2.0 * n, quad: 4.0 * n * n, x_hat: wb.x_hat }
        }
        _ => EventRatePolicy::Constant(cfg.rate),
    }
}

pub fn proposal(cfg: &ExperimentConfig) -> Result<Proposal> {
    Ok(match cfg.proposal.as_str() {
        "brownian" => Proposal::Brownian,
        "studentt" => Proposal::student_t(cfg.nu, cfg.dim())?,
        other => bail!("unknown proposal {other}"),
    })
}

pub fn initial_dist(cfg: &ExperimentConfig, wb: &Workbench) -> InitialDist {
    match cfg.init.as_str() {
        "uniform" => InitialDist::Uniform { lo: cfg.init_lo, hi: cfg.init_hi },
        "posterior" => InitialDist::Quadrature(Arc::new(wb.quad.clone())),
        "point" => InitialDist::Point(vec![cfg.init_point]),
        // The model prior is N(0, 4).
        _ => InitialDist::GaussianPrior { sd: 2.0 },
    }
}

fn particle_lines(snapshots: impl Iterator<Item = (f64, Vec<f64>, f64)>) -> Result<Vec<u8>> {
    #[derive(serde::Serialize)]
    struct Line<'a> {
        t: f64,
        x: &'a [f64],
        w: f64,
    }
    let mut buf = Vec::new();
    for (t, x, w) in snapshots {
        serde_json::to_writer(&mut buf, &Line { t, x: &x, w })?;
        buf.write_all(b"\n")?;
    }
    Ok(buf)
}

/// Single-particle CIS run with snapshots every time unit.
pub fn cis_command(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let started = Instant::now();
    let wb = build_workbench(cfg)?;
    let rho = incremental_rho(cfg, &wb)?;
    let policy = event_rate_policy(cfg, &wb);
    let prop = proposal(cfg)?;
    let mut rng = RngStream::new(cfg.seed, cfg.stream);
    let y0 = initial_dist(cfg, &wb).sample(1, &mut rng);
    let out = run_cis(&prop, rho.as_ref(), &policy, y0, cfg.horizon, 1.0, &mut rng)?;

    let particles_path = cfg.artifact_path("particles.jsonl");
    write_atomic(
        &particles_path,
        &particle_lines(out.snapshots.iter().map(|(t, x, w)| (*t, x.clone(), *w)))?,
    )?;

    let neg_fraction = if out.stats.events == 0 {
        0.0
    } else {
        out.stats.sign_flips as f64 / out.stats.events as f64
    };
    let ws: Vec<f64> = out.snapshots.iter().map(|(_, _, w)| *w).collect();
    let stats = SummaryStats::from_run(
        cfg.horizon,
        cfg.horizon / 4.0,
        weighted_ess(&ws).max(1.0),
        out.stats.events,
        out.stats.data_accesses,
        neg_fraction,
        started.elapsed().as_secs_f64(),
    );
    let outputs = vec![particles_path];
    let manifest_path = cfg.artifact_path("manifest.txt");
    write_atomic(&manifest_path, cfg.manifest("cis", wb.hash, &outputs).as_bytes())?;
    let mut outputs = outputs;
    outputs.push(manifest_path);
    Ok(RunArtifacts { summary: stats, outputs })
}

pub struct SmcRun {
    pub output: SmcOutput,
    pub dataset_hash: u64,
    /// Total-variation distance of the pooled weighted histogram (snapshots
    /// with t >= horizon/4) against the quadrature posterior.
    pub tv_vs_posterior: f64,
}

pub fn run_smc_experiment(cfg: &ExperimentConfig) -> Result<SmcRun> {
    cfg.validate()?;
    let wb = build_workbench(cfg)?;
    let rho = incremental_rho(cfg, &wb)?;
    let policy = event_rate_policy(cfg, &wb);
    let prop = proposal(cfg)?;
    let smc_cfg = SmcConfig {
        n_particles: cfg.particles,
        h: cfg.h,
        k_steps: cfg.steps,
        ess_threshold: cfg.ess_threshold,
    };
    let mut rng = RngStream::new(cfg.seed, cfg.stream);
    let output = run_smc(
        &prop,
        rho.as_ref(),
        &policy,
        &initial_dist(cfg, &wb),
        1,
        &smc_cfg,
        &mut rng,
    )?;
    let horizon = cfg.h * cfg.steps as f64;
    let (xs, ws) = output.pooled_weighted(horizon / 4.0);
    let tv = weighted_tv_against(&wb.quad, &xs, &ws, 25);
    Ok(SmcRun { output, dataset_hash: wb.hash, tv_vs_posterior: tv })
}

/// TV distance between a |w|-normalized signed histogram and the
/// quadrature posterior, on equal-width bins spanning mode +- 6 sd.
pub fn weighted_tv_against(
    quad: &pdmp::targets::PosteriorQuadrature,
    xs: &[f64],
    ws: &[f64],
    bins: usize,
) -> f64 {
    let lo = quad.mode() - 6.0 * quad.sd();
    let hi = quad.mode() + 6.0 * quad.sd();
    let width = (hi - lo) / bins as f64;
    let mut weighted = vec![0.0f64; bins + 1]; // last slot: outside mass
    let total: f64 = ws.iter().sum();
    for (x, w) in xs.iter().zip(ws) {
        if *x < lo || *x >= hi {
            weighted[bins] += w;
        } else {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            weighted[b] += w;
        }
    }
    let mut tv = 0.0;
    for (b, mass) in weighted.iter().take(bins).enumerate() {
        let a = lo + width * b as f64;
        let expect = quad.interval_mass(a, a + width);
        tv += (mass / total - expect).abs();
    }
    let outside_expect = 1.0 - quad.interval_mass(lo, hi);
    tv += (weighted[bins] / total - outside_expect).abs();
    tv / 2.0
}

pub fn smc_command(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let started = Instant::now();
    let run = run_smc_experiment(cfg)?;
    let particles_path = cfg.artifact_path("particles.jsonl");
    let lines = run.output.snapshots.iter().flat_map(|snap| {
        snap.xs
            .iter()
            .zip(&snap.ws)
            .map(move |(x, w)| (snap.t, x.clone(), *w))
    });
    write_atomic(&particles_path, &particle_lines(lines)?)?;
    let final_ws = run
        .output
        .snapshots
        .last()
        .map(|s| s.ws.clone())
        .unwrap_or_default();
    let horizon = cfg.h * cfg.steps as f64;
    let stats = SummaryStats::from_run(
        horizon,
        horizon / 4.0,
        weighted_ess(&final_ws).max(1.0),
        run.output.stats.events,
        run.output.stats.data_accesses,
        run.output.negative_update_fraction,
        started.elapsed().as_secs_f64(),
    );
    let outputs = vec![particles_path];
    let manifest_path = cfg.artifact_path("manifest.txt");
    write_atomic(&manifest_path, cfg.manifest("smc", run.dataset_hash, &outputs).as_bytes())?;
    let mut outputs = outputs;
    outputs.push(manifest_path);
    Ok(RunArtifacts { summary: stats, outputs })
}

/// The weight-variance / data-access study CSV.
pub fn variance_study_command(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let started = Instant::now();
    let vs_cfg = pdmp::cis::VarianceStudyConfig {
        ns: cfg.vs_ns.clone(),
        xhat_offsets_sd: cfg.vs_offsets.clone(),
        replicates: cfg.vs_replicates,
        seed: cfg.data_seed,
    };
    let rows = pdmp::cis::variance_study(&vs_cfg)?;
    let mut csv = String::from("n,policy,xhat_offset,var_Wh,data_accesses,replicates\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.10e},{:.6},{}\n",
            row.n, row.policy, row.xhat_offset, row.var_wh, row.data_accesses, row.replicates
        ));
    }
    let path = cfg.artifact_path("variance.csv");
    write_atomic(&path, csv.as_bytes())?;
    let outputs = vec![path];
    let manifest_path = cfg.artifact_path("manifest.txt");
    write_atomic(&manifest_path, cfg.manifest("variance-study", 0, &outputs).as_bytes())?;
    let mut outputs = outputs;
    outputs.push(manifest_path);
    Ok(RunArtifacts {
        summary: SummaryStats::from_run(1.0, 0.0, 1.0, 0, 0, 0.0, started.elapsed().as_secs_f64()),
        outputs,
    })
}

pub fn dataset_hash_for(cfg: &ExperimentConfig) -> Result<u64> {
    let ys = crate::dataset::mixture_data(cfg)?;
    Ok(pdmp::targets::dataset_hash(&ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_cfg(label: &str) -> ExperimentConfig {
        ExperimentConfig {
            out_dir: Some(std::env::temp_dir().join("pdmp-experiment-tests")),
            label: label.into(),
            ..Default::default()
        }
    }

    #[test]
    fn sample_writes_consistent_artifacts() {
        let mut cfg = tmp_cfg("sample-art");
        cfg.n = 40;
        cfg.horizon = 200.0;
        let artifacts = sample_command(&cfg).unwrap();
        assert_eq!(artifacts.outputs.len(), 3);
        for path in &artifacts.outputs {
            assert!(path.exists(), "{}", path.display());
        }
        assert!(artifacts.summary.identity_gap() <= 1e-9);
        let (header, skel) = Skeleton::<f64>::read_jsonl(std::io::BufReader::new(
            std::fs::File::open(&artifacts.outputs[0]).unwrap(),
        ))
        .unwrap();
        assert_eq!(header.seed, cfg.seed);
        skel.validate().unwrap();
    }

    #[test]
    fn reruns_are_byte_identical() {
        let mut cfg = tmp_cfg("sample-repro");
        cfg.n = 30;
        cfg.horizon = 150.0;
        let first = sample_command(&cfg).unwrap();
        let bytes_a: Vec<Vec<u8>> = first
            .outputs
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        let second = sample_command(&cfg).unwrap();
        let bytes_b: Vec<Vec<u8>> = second
            .outputs
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn gaussian_sample_runs() {
        let mut cfg = tmp_cfg("sample-gauss");
        cfg.target = "gaussian".into();
        cfg.dim = 2;
        cfg.algo = "bps".into();
        cfg.horizon = 300.0;
        let artifacts = sample_command(&cfg).unwrap();
        assert!(artifacts.summary.t_per_ess > 0.0);
    }

    #[test]
    fn student_t_proposal_runs_through_the_operator_route() {
        let mut cfg = tmp_cfg("cis-studentt");
        cfg.n = 25;
        cfg.horizon = 30.0;
        cfg.proposal = "studentt".into();
        cfg.nu = 4.0;
        cfg.init = "posterior".into();
        let artifacts = cis_command(&cfg).unwrap();
        assert!(artifacts.outputs[0].exists());
        // Heavy-tailed proposal against the killed-Brownian target: the
        // increments are nonzero, so weights move away from one.
        let text = std::fs::read_to_string(&artifacts.outputs[0]).unwrap();
        let mut saw_nontrivial_weight = false;
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            if (v["w"].as_f64().unwrap() - 1.0).abs() > 1e-6 {
                saw_nontrivial_weight = true;
            }
        }
        assert!(saw_nontrivial_weight);

        cfg.rho = "subsample".into();
        assert!(cfg.validate().is_err(), "subsampled rho is Brownian-proposal only");
    }

    #[test]
    fn smc_negative_fraction_and_tv_are_sane() {
        let mut cfg = tmp_cfg("smc-small");
        cfg.n = 40;
        cfg.particles = 50;
        cfg.steps = 20;
        cfg.ess_threshold = 25.0;
        let run = run_smc_experiment(&cfg).unwrap();
        assert!(run.tv_vs_posterior <= 1.0);
        assert!(run.output.negative_update_fraction <= 1.0);
        assert_eq!(run.output.snapshots.len(), 20);
    }
}
