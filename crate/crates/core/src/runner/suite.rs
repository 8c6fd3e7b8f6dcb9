use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::experiment::run_with_workers;
use super::metrics::{read_metrics, MetricsRecord};
use super::output::{run_dir, write_run, RunManifest, METRICS_FILE};
use super::plot::emit_plot;

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const PLOT_FILE: &str = "coverage.svg";

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of no data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub total_rollouts: u64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub seeds: usize,
}

/// Coverage of a run at `x` rollouts: the last record at or before `x`.
fn coverage_at(records: &[MetricsRecord], x: u64) -> Option<f64> {
    let i = records.partition_point(|r| r.total_rollouts <= x);
    (i > 0).then(|| records[i - 1].coverage)
}

/// Median and interquartile coverage across runs of one algorithm.
///
/// Rows sit at every rollout count logged by any run; a run contributes its
/// latest coverage at or before that count and is skipped before its first row.
pub fn aggregate(label: &str, runs: &[Vec<MetricsRecord>]) -> Vec<AggregateRow> {
    let mut xs: Vec<u64> = runs.iter().flatten().map(|r| r.total_rollouts).collect();
    xs.sort_unstable();
    xs.dedup();
    xs.into_iter()
        .filter_map(|x| {
            let mut v: Vec<f64> = runs.iter().filter_map(|r| coverage_at(r, x)).collect();
            if v.is_empty() {
                return None;
            }
            v.sort_by(f64::total_cmp);
            Some(AggregateRow {
                algorithm: label.to_string(),
                total_rollouts: x,
                median: percentile(&v, 0.5),
                p25: percentile(&v, 0.25),
                p75: percentile(&v, 0.75),
                seeds: v.len(),
            })
        })
        .collect()
}

pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(err)
}

/// Every `<out>/<algorithm>/<seed>/metrics.csv`, grouped by algorithm, sorted.
pub fn collect_metrics_files(out: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
    for algo in entries {
        let algo = algo.map_err(|e| Error::io(out, e))?.path();
        if !algo.is_dir() {
            continue;
        }
        let label = algo
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for seed in std::fs::read_dir(&algo).map_err(|e| Error::io(&algo, e))? {
            let m = seed
                .map_err(|e| Error::io(&algo, e))?
                .path()
                .join(METRICS_FILE);
            if m.is_file() {
                groups.entry(label.clone()).or_default().push(m);
            }
        }
    }
    for v in groups.values_mut() {
        v.sort();
    }
    Ok(groups)
}

/// Rebuilds `<out>/aggregate.csv` and `<out>/coverage.svg` from all runs under `out`.
pub fn refresh_summary(out: &Path) -> Result<Vec<AggregateRow>> {
    let groups = collect_metrics_files(out)?;
    let mut rows = Vec::new();
    for (label, paths) in &groups {
        let runs = paths
            .iter()
            .map(|p| read_metrics(p))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(aggregate(label, &runs));
    }
    write_aggregate(&rows, &out.join(AGGREGATE_FILE))?;
    let all: Vec<PathBuf> = groups.into_values().flatten().collect();
    if !all.is_empty() {
        emit_plot(&all, &out.join(PLOT_FILE))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Runs `cfg` once per seed into `<out>/<algorithm>/<seed>`, then refreshes
/// the aggregate over everything under the output directory.
pub fn run_suite(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<(Vec<SuiteRun>, Vec<AggregateRow>)> {
    let mut runs = Vec::new();
    for &seed in seeds {
        let out = run_with_workers(cfg, seed, workers)?;
        let dir = run_dir(&cfg.output_dir, cfg.algorithm, seed);
        let manifest = write_run(&out, &dir)?;
        runs.push(SuiteRun {
            seed,
            dir,
            manifest,
        });
    }
    let rows = refresh_summary(&cfg.output_dir)?;
    Ok((runs, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(u64, f64)]) -> Vec<MetricsRecord> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, c))| MetricsRecord {
                loop_index: i,
                iteration: 0,
                total_rollouts: x,
                coverage: c,
                param_fraction: 1.0,
                latent_fraction: 0.0,
                mean_recon_error: None,
            })
            .collect()
    }

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.25), 2.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.5), 1.5);
        assert_eq!(percentile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn single_run_is_its_own_median() {
        let c = curve(&[(10, 0.1), (20, 0.3)]);
        let rows = aggregate("a", std::slice::from_ref(&c));
        assert_eq!(rows.len(), 2);
        for (r, m) in rows.iter().zip(&c) {
            assert_eq!(
                (r.median, r.p25, r.p75),
                (m.coverage, m.coverage, m.coverage)
            );
        }
    }

    #[test]
    fn constant_suite_has_constant_percentiles() {
        let runs = vec![curve(&[(10, 0.4), (20, 0.4)]); 5];
        for r in aggregate("a", &runs) {
            assert_eq!((r.median, r.p25, r.p75, r.seeds), (0.4, 0.4, 0.4, 5));
        }
    }

    #[test]
    fn band_lies_within_inputs() {
        let runs: Vec<_> = (0..5)
            .map(|s| curve(&[(10, 0.1 * s as f64), (20, 0.1 * s as f64 + 0.05), (30, 0.6)]))
            .collect();
        for r in aggregate("a", &runs) {
            let vals: Vec<f64> = runs
                .iter()
                .map(|c| coverage_at(c, r.total_rollouts).unwrap())
                .collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo <= r.p25 && r.p25 <= r.median && r.median <= r.p75 && r.p75 <= hi);
        }
    }

    #[test]
    fn mismatched_grids_use_step_values() {
        let a = curve(&[(10, 0.1), (30, 0.3)]);
        let b = curve(&[(20, 0.2)]);
        let rows = aggregate("a", &[a, b]);
        let xs: Vec<_> = rows.iter().map(|r| (r.total_rollouts, r.seeds)).collect();
        assert_eq!(xs, vec![(10, 1), (20, 2), (30, 2)]);
        assert!((rows[1].median - 0.15).abs() < 1e-15);
    }

    #[test]
    fn aggregate_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(AGGREGATE_FILE);
        let rows = aggregate("poms", &[curve(&[(10, 0.125), (20, 0.25)])]);
        write_aggregate(&rows, &p).unwrap();
        assert_eq!(read_aggregate(&p).unwrap(), rows);
    }
}
