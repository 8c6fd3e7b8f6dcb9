use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::{export_csv, save_archive};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::manifold::save_checkpoint;

use super::config::{Algorithm, ExperimentConfig};
use super::experiment::{RunCounters, RunOutput};
use super::metrics::{write_metrics, write_timings};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const ARCHIVE_FILE: &str = "archive.bin";
pub const ARCHIVE_CSV_FILE: &str = "archive.csv";

/// Everything needed to reproduce a run, minus wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub env: Env,
    pub total_rollouts: u64,
    pub final_coverage: f64,
    pub occupied_cells: usize,
    pub files: Vec<String>,
    pub counters: RunCounters,
    pub env_constants: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))
    }
}

pub fn model_file(loop_index: usize) -> String {
    format!("model-loop-{loop_index}.bin")
}

/// `<out>/<algorithm>/<seed>`.
pub fn run_dir(out: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out.join(algorithm.name()).join(seed.to_string())
}

/// Writes all artefacts of a finished run into `dir`.
pub fn write_run(output: &RunOutput, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![METRICS_FILE.to_string(), TIMING_FILE.to_string()];
    write_metrics(&output.records, &dir.join(METRICS_FILE))?;
    write_timings(&output.timings, &dir.join(TIMING_FILE))?;
    save_archive(&dir.join(ARCHIVE_FILE), &output.archive)?;
    export_csv(&dir.join(ARCHIVE_CSV_FILE), &output.archive)?;
    files.extend([ARCHIVE_FILE.to_string(), ARCHIVE_CSV_FILE.to_string()]);
    for m in &output.models {
        let name = model_file(m.loop_index);
        save_checkpoint(&dir.join(&name), &m.model, m.threshold)?;
        files.push(name);
    }
    let cfg = &output.config;
    if cfg.dump_trajectories {
        let tdir = dir.join("trajectories");
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for e in output.archive.elites() {
            let name = format!("trajectories/elite-{}.csv", e.eval_id);
            cfg.env
                .rollout(&e.params, true)?
                .write_csv(&dir.join(&name))?;
            files.push(name);
        }
    }
    files.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: output.seed,
        algorithm: cfg.algorithm,
        env: cfg.env,
        total_rollouts: output.counters.rollouts + output.counters.discarded_mutations,
        final_coverage: output.archive.coverage(),
        occupied_cells: output.archive.len(),
        files,
        counters: output.counters,
        env_constants: cfg
            .env
            .constants()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        config: cfg.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::format("manifest", e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
