use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const OUTPUT_DIR_ENV: &str = "PDMP_OUTPUT_DIR";

/// Declarative run description. Flat key=value text files plus CLI flag
/// overrides, with precedence CLI > file > defaults; the rendered manifest
/// reproduces any run bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub out_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub stream: u64,

    pub target: String,
    pub n: usize,
    pub p: f64,
    pub x_true: f64,
    pub data_seed: u64,
    pub dataset: Option<PathBuf>,
    pub dim: usize,
    pub variance: f64,

    pub algo: String,
    pub estimator: String,
    pub bound: String,
    pub horizon: f64,
    pub burn_frac: f64,
    pub refresh_rate: f64,
    pub extra_rate: f64,
    pub hybrid_k: f64,
    pub xhat_offset_sd: f64,
    /// Spacing of the ESS sample grid; 0 selects min(1, posterior sd / 2).
    pub ess_spacing: f64,

    pub rho: String,
    pub rate: f64,
    pub rate_policy: String,
    pub proposal: String,
    pub nu: f64,
    pub particles: usize,
    pub h: f64,
    pub steps: usize,
    pub ess_threshold: f64,
    pub init: String,
    pub init_lo: f64,
    pub init_hi: f64,
    pub init_point: f64,

    pub vs_ns: Vec<usize>,
    pub vs_offsets: Vec<f64>,
    pub vs_replicates: usize,

    pub t1_ns: Vec<usize>,
    pub t1_horizons: Vec<f64>,
    pub t1_chains: Vec<usize>,

    pub grid_points: usize,
    pub grid_halfwidth_sd: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            label: "run".into(),
            out_dir: None,
            out: None,
            seed: 1,
            stream: 0,
            target: "mixture".into(),
            n: 150,
            p: 0.95,
            x_true: 4.0,
            data_seed: 105,
            dataset: None,
            dim: 1,
            variance: 1.0,
            algo: "zigzag".into(),
            estimator: "exact".into(),
            bound: "auto".into(),
            horizon: 1e4,
            burn_frac: 0.1,
            refresh_rate: 1.0,
            extra_rate: 0.0,
            hybrid_k: 5.0,
            xhat_offset_sd: 0.0,
            ess_spacing: 0.0,
            rho: "exact".into(),
            rate: 12.0,
            rate_policy: "constant".into(),
            proposal: "brownian".into(),
            nu: 3.0,
            particles: 200,
            h: 1.0,
            steps: 100,
            ess_threshold: 100.0,
            init: "prior".into(),
            init_lo: -10.0,
            init_hi: -5.0,
            init_point: 0.0,
            vs_ns: vec![150, 1500, 15000],
            vs_offsets: vec![0.0, 1.0, 3.0],
            vs_replicates: 2000,
            t1_ns: vec![150, 1500, 15000],
            t1_horizons: vec![8000.0, 1200.0, 200.0],
            t1_chains: vec![6, 4, 2],
            grid_points: 201,
            grid_halfwidth_sd: 10.0,
        }
    }
}

impl ExperimentConfig {
    /// Apply a flat key=value config file ('#' starts a comment).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            self.apply_kv(key.trim(), value.trim())
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| anyhow::anyhow!("bad value for {key}: {value:?}"))
        }
        fn list_usize(key: &str, value: &str) -> Result<Vec<usize>> {
            value.split(',').map(|v| num(key, v.trim())).collect()
        }
        fn list_f64(key: &str, value: &str) -> Result<Vec<f64>> {
            value.split(',').map(|v| num(key, v.trim())).collect()
        }
        match key {
            "label" => self.label = value.into(),
            "out_dir" => self.out_dir = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "seed" => self.seed = num(key, value)?,
            "stream" => self.stream = num(key, value)?,
            "target" => self.target = value.into(),
            "n" => self.n = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "x_true" => self.x_true = num(key, value)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "dataset" => self.dataset = Some(value.into()),
            "dim" => self.dim = num(key, value)?,
            "variance" => self.variance = num(key, value)?,
            "algo" => self.algo = value.into(),
            "estimator" => self.estimator = value.into(),
            "bound" => self.bound = value.into(),
            "T" | "horizon" => self.horizon = num(key, value)?,
            "burn_frac" => self.burn_frac = num(key, value)?,
            "refresh_rate" => self.refresh_rate = num(key, value)?,
            "extra_rate" => self.extra_rate = num(key, value)?,
            "hybrid_k" => self.hybrid_k = num(key, value)?,
            "xhat_offset_sd" => self.xhat_offset_sd = num(key, value)?,
            "ess_spacing" => self.ess_spacing = num(key, value)?,
            "rho" => self.rho = value.into(),
            "rate" => self.rate = num(key, value)?,
            "rate_policy" => self.rate_policy = value.into(),
            "proposal" => self.proposal = value.into(),
            "nu" => self.nu = num(key, value)?,
            "particles" | "N" => self.particles = num(key, value)?,
            "h" => self.h = num(key, value)?,
            "steps" | "K" => self.steps = num(key, value)?,
            "ess_threshold" => self.ess_threshold = num(key, value)?,
            "init" => self.init = value.into(),
            "init_lo" => self.init_lo = num(key, value)?,
            "init_hi" => self.init_hi = num(key, value)?,
            "init_point" => self.init_point = num(key, value)?,
            "vs_ns" => self.vs_ns = list_usize(key, value)?,
            "vs_offsets" => self.vs_offsets = list_f64(key, value)?,
            "vs_replicates" => self.vs_replicates = num(key, value)?,
            "t1_ns" => self.t1_ns = list_usize(key, value)?,
            "t1_horizons" => self.t1_horizons = list_f64(key, value)?,
            "t1_chains" => self.t1_chains = list_usize(key, value)?,
            "grid_points" => self.grid_points = num(key, value)?,
            "grid_halfwidth_sd" => self.grid_halfwidth_sd = num(key, value)?,
            other => bail!("unknown config key: {other}"),
        }
        Ok(())
    }

    /// Resolved bound name: `auto` picks the canonical pairing for the
    /// estimator.
    pub fn bound_name(&self) -> String {
        if self.bound != "auto" {
            return self.bound.clone();
        }
        if self.target == "gaussian" {
            return "gaussian".into();
        }
        match self.estimator.as_str() {
            "simple" => "simple".into(),
            "nonuniform" => "sum".into(),
            "cv" => "cv".into(),
            "hybrid" => "hybrid".into(),
            _ => "sum".into(),
        }
    }

    /// Capability-matrix validation: estimator/bound/sampler pairings that
    /// cannot be run (or whose envelopes would not dominate) are rejected
    /// up front.
    pub fn validate(&self) -> Result<()> {
        let algo = self.algo.as_str();
        if !["reflect", "bps", "zigzag"].contains(&algo) {
            bail!("unknown algo {algo:?} (reflect|bps|zigzag)");
        }
        let est = self.estimator.as_str();
        if !["exact", "simple", "nonuniform", "cv", "hybrid"].contains(&est) {
            bail!("unknown estimator {est:?} (exact|simple|nonuniform|cv|hybrid)");
        }
        let bound = self.bound_name();
        let allowed: &[&str] = match est {
            // All the constant envelopes and the anchored state-dependent
            // one dominate the canonical rates.
            "exact" => &["simple", "sum", "max", "cv", "gaussian"],
            "simple" => &["simple"],
            "nonuniform" => &["simple", "sum"],
            "cv" => &["cv"],
            "hybrid" => &["hybrid"],
            _ => unreachable!(),
        };
        if !allowed.contains(&bound.as_str()) {
            bail!(
                "bound {bound:?} does not dominate the {est:?} estimator (allowed: {allowed:?})"
            );
        }
        match self.target.as_str() {
            "mixture" => {
                if self.n == 0 {
                    bail!("mixture target needs n >= 1");
                }
            }
            "gaussian" => {
                if est != "exact" {
                    bail!("subsampling estimators need a factorized (mixture) target");
                }
                if bound != "gaussian" {
                    bail!("the gaussian target pairs with the gaussian envelope");
                }
                if self.dim == 0 {
                    bail!("gaussian target needs dim >= 1");
                }
            }
            other => bail!("unknown target {other:?} (mixture|gaussian)"),
        }
        if algo == "bps" && self.refresh_rate <= 0.0 {
            bail!("the bouncy particle sampler needs refresh_rate > 0");
        }
        if algo == "reflect" && self.dim() > 1 && self.refresh_rate <= 0.0 {
            bail!("pure reflection with d > 1 needs refresh_rate > 0: this process would be reducible");
        }
        if ["cv", "hybrid"].contains(&est) && self.target != "mixture" {
            bail!("control-variate estimators need the mixture target's cache");
        }
        if self.horizon <= 0.0 || !(0.0..1.0).contains(&self.burn_frac) {
            bail!("need horizon > 0 and burn_frac in [0, 1)");
        }
        if !["exact", "subsample", "cv"].contains(&self.rho.as_str()) {
            bail!("unknown rho {:?} (exact|subsample|cv)", self.rho);
        }
        if !["constant", "anchor"].contains(&self.rate_policy.as_str()) {
            bail!("unknown rate_policy {:?} (constant|anchor)", self.rate_policy);
        }
        if !["brownian", "studentt"].contains(&self.proposal.as_str()) {
            bail!("unknown proposal {:?} (brownian|studentt)", self.proposal);
        }
        if !["prior", "uniform", "posterior", "point"].contains(&self.init.as_str()) {
            bail!("unknown init {:?} (prior|uniform|posterior|point)", self.init);
        }
        if self.proposal == "studentt" && self.rho != "exact" {
            bail!("the t-distributed proposal pairs with the exact (operator-route) rho only");
        }
        if self.proposal == "studentt" && self.nu <= 0.0 {
            bail!("degrees of freedom must be positive");
        }
        if self.rate <= 0.0 {
            bail!("event rate must be positive");
        }
        if self.t1_ns.len() != self.t1_horizons.len() || self.t1_ns.len() != self.t1_chains.len() {
            bail!("t1_ns, t1_horizons and t1_chains must have matching lengths");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        if self.target == "mixture" {
            1
        } else {
            self.dim
        }
    }

    pub fn burn_in(&self) -> f64 {
        self.horizon * self.burn_frac
    }

    /// Output directory: explicit config, then the environment default,
    /// then `pdmp-out`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.out_dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("pdmp-out")
    }

    /// Primary artifact path for the given extension, honouring `--out`.
    pub fn artifact_path(&self, suffix: &str) -> PathBuf {
        if let Some(out) = &self.out {
            if suffix == "skeleton.jsonl" || suffix == "particles.jsonl" {
                return out.clone();
            }
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            return out.with_file_name(format!("{stem}.{suffix}"));
        }
        self.output_dir().join(format!("{}.{suffix}", self.label))
    }

    /// Sorted key=value rendering of the full effective configuration.
    pub fn render(&self) -> String {
        let mut map = BTreeMap::new();
        let fmt_list_u = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let fmt_list_f = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        map.insert("label", self.label.clone());
        map.insert("seed", self.seed.to_string());
        map.insert("stream", self.stream.to_string());
        map.insert("target", self.target.clone());
        map.insert("n", self.n.to_string());
        map.insert("p", self.p.to_string());
        map.insert("x_true", self.x_true.to_string());
        map.insert("data_seed", self.data_seed.to_string());
        if let Some(d) = &self.dataset {
            map.insert("dataset", d.display().to_string());
        }
        map.insert("dim", self.dim.to_string());
        map.insert("variance", self.variance.to_string());
        map.insert("algo", self.algo.clone());
        map.insert("estimator", self.estimator.clone());
        map.insert("bound", self.bound_name());
        map.insert("horizon", self.horizon.to_string());
        map.insert("burn_frac", self.burn_frac.to_string());
        map.insert("refresh_rate", self.refresh_rate.to_string());
        map.insert("extra_rate", self.extra_rate.to_string());
        map.insert("hybrid_k", self.hybrid_k.to_string());
        map.insert("xhat_offset_sd", self.xhat_offset_sd.to_string());
        map.insert("ess_spacing", self.ess_spacing.to_string());
        map.insert("rho", self.rho.clone());
        map.insert("rate", self.rate.to_string());
        map.insert("rate_policy", self.rate_policy.clone());
        map.insert("proposal", self.proposal.clone());
        map.insert("nu", self.nu.to_string());
        map.insert("particles", self.particles.to_string());
        map.insert("h", self.h.to_string());
        map.insert("steps", self.steps.to_string());
        map.insert("ess_threshold", self.ess_threshold.to_string());
        map.insert("init", self.init.clone());
        map.insert("init_lo", self.init_lo.to_string());
        map.insert("init_hi", self.init_hi.to_string());
        map.insert("init_point", self.init_point.to_string());
        map.insert("vs_ns", fmt_list_u(&self.vs_ns));
        map.insert("vs_offsets", fmt_list_f(&self.vs_offsets));
        map.insert("vs_replicates", self.vs_replicates.to_string());
        map.insert("t1_ns", fmt_list_u(&self.t1_ns));
        map.insert("t1_horizons", fmt_list_f(&self.t1_horizons));
        map.insert("t1_chains", fmt_list_u(&self.t1_chains));
        map.insert("grid_points", self.grid_points.to_string());
        map.insert("grid_halfwidth_sd", self.grid_halfwidth_sd.to_string());
        let mut out = String::new();
        for (k, v) in map {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }

    /// Manifest: command, code version, full config and the dataset hash.
    /// Sufficient to re-run the experiment bit-identically.
    pub fn manifest(&self, command: &str, dataset_hash: u64, outputs: &[PathBuf]) -> String {
        let mut out = String::new();
        writeln!(out, "# pdmp manifest").unwrap();
        writeln!(out, "command={command}").unwrap();
        writeln!(out, "version={}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "dataset_hash={dataset_hash:016x}").unwrap();
        out.push_str(&self.render());
        for path in outputs {
            writeln!(out, "output={}", path.display()).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = std::env::temp_dir().join("pdmp-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.conf");
        std::fs::write(&path, "n=300\nT=500 # comment\nalgo=bps\n").unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.n, 300);
        assert_eq!(cfg.horizon, 500.0);
        assert_eq!(cfg.algo, "bps");
        cfg.apply_kv("n", "42").unwrap();
        assert_eq!(cfg.n, 42);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_kv("not_a_key", "1").is_err());
        assert!(cfg.apply_kv("n", "abc").is_err());
    }

    #[test]
    fn capability_matrix() {
        let mut cfg = ExperimentConfig { estimator: "cv".into(), ..Default::default() };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.bound_name(), "cv");

        // CV realizations are not dominated by the n-max constant.
        cfg.bound = "simple".into();
        assert!(cfg.validate().is_err());

        // BPS needs refresh.
        let cfg = ExperimentConfig { algo: "bps".into(), refresh_rate: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());

        // Gaussian target takes only the exact estimator.
        let cfg = ExperimentConfig {
            target: "gaussian".into(),
            estimator: "simple".into(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());

        // Reducible reflection.
        let cfg = ExperimentConfig {
            target: "gaussian".into(),
            dim: 2,
            algo: "reflect".into(),
            refresh_rate: 0.0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("reducible"), "{err}");
    }

    #[test]
    fn render_is_sorted_and_stable() {
        let cfg = ExperimentConfig::default();
        let a = cfg.render();
        let b = cfg.render();
        assert_eq!(a, b);
        let keys: Vec<&str> = a.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
