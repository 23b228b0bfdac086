use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use pdmp::targets::{
    build_cv_cache, dataset_hash, factor_bound_table, load_data_csv, simulate_mixture_data,
    ControlVariateCache, FactorBoundTable, MixtureTarget, PosteriorQuadrature,
};
use pdmp::RngStream;

use crate::config::ExperimentConfig;

/// Mixture target plus everything derived from the dataset: quadrature
/// posterior, bound table (loaded from the sidecar cache when the hash
/// matches) and the control-variate cache at the configured anchor.
pub struct Workbench {
    pub target: MixtureTarget,
    pub quad: PosteriorQuadrature,
    pub table: Arc<FactorBoundTable>,
    pub cache: Arc<ControlVariateCache>,
    pub x_hat: f64,
    pub hash: u64,
}

#[derive(Serialize, Deserialize)]
struct BoundSidecar {
    dataset_hash: String,
    table: FactorBoundTable,
}

pub fn mixture_data(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    if let Some(path) = &cfg.dataset {
        return Ok(load_data_csv(path)?);
    }
    let mut rng = RngStream::new(cfg.data_seed, 0);
    Ok(simulate_mixture_data(cfg.n, cfg.x_true, cfg.p, &mut rng))
}

/// Sidecar path for a dataset hash, under the output directory.
fn sidecar_path(cfg: &ExperimentConfig, hash: u64) -> PathBuf {
    if let Some(path) = &cfg.dataset {
        let mut p = path.clone();
        p.set_extension("bounds.json");
        p
    } else {
        cfg.output_dir().join(format!("bounds-{hash:016x}.json"))
    }
}

fn load_or_build_table(
    cfg: &ExperimentConfig,
    target: &MixtureTarget,
    hash: u64,
) -> Result<FactorBoundTable> {
    let path = sidecar_path(cfg, hash);
    let key = format!("{hash:016x}");
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(sidecar) = serde_json::from_str::<BoundSidecar>(&text) {
            if sidecar.dataset_hash == key {
                return Ok(sidecar.table);
            }
        }
    }
    let table = factor_bound_table(target, target.bound_search_interval())?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).ok();
    }
    let sidecar = BoundSidecar { dataset_hash: key, table: table.clone() };
    if let Ok(json) = serde_json::to_string(&sidecar) {
        std::fs::write(&path, json).ok();
    }
    Ok(table)
}

pub fn build_workbench(cfg: &ExperimentConfig) -> Result<Workbench> {
    let ys = mixture_data(cfg)?;
    let hash = dataset_hash(&ys);
    let target = MixtureTarget::new(ys, cfg.p);
    let quad = PosteriorQuadrature::build(&target, -30.0, 30.0)
        .context("quadrature of the posterior")?;
    let table = Arc::new(load_or_build_table(cfg, &target, hash)?);
    let x_hat = quad.mode() + cfg.xhat_offset_sd * quad.sd();
    let cache = Arc::new(build_cv_cache(&target, &[x_hat])?);
    Ok(Workbench { target, quad, table, cache, x_hat, hash })
}
