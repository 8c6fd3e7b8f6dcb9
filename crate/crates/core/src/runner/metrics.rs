use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Branch;

pub const METRICS_HEADER: [&str; 7] = [
    "loop",
    "iteration",
    "total_rollouts",
    "coverage",
    "param_fraction",
    "latent_fraction",
    "mean_recon_error",
];

/// One row of `metrics.csv`, logged after every search iteration.
///
/// `mean_recon_error` is the gate threshold of the model in use and is empty
/// for algorithms without a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(rename = "loop")]
    pub loop_index: usize,
    pub iteration: usize,
    pub total_rollouts: u64,
    pub coverage: f64,
    pub param_fraction: f64,
    pub latent_fraction: f64,
    pub mean_recon_error: Option<f64>,
}

/// `(param_fraction, latent_fraction)` of a batch from its branch tags.
pub fn mixing_fractions(tags: &[Branch]) -> (f64, f64) {
    if tags.is_empty() {
        return (1.0, 0.0);
    }
    let latent = tags.iter().filter(|b| b.is_latent()).count();
    let lf = latent as f64 / tags.len() as f64;
    ((tags.len() - latent) as f64 / tags.len() as f64, lf)
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Floats are written in the shortest form that parses back exactly.
pub fn write_metrics_to<W: Write>(
    w: W,
    records: &[MetricsRecord],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_to(std::io::BufWriter::new(f), records).map_err(csv_error(path))
}

pub fn read_metrics_from<R: Read>(r: R) -> std::result::Result<Vec<MetricsRecord>, csv::Error> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected metrics header {header:?}"),
        )));
    }
    rd.deserialize().collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics_from(std::io::BufReader::new(f)).map_err(csv_error(path))
}

/// Checks the run invariants of a metrics file: strictly increasing rollout
/// counts, non-decreasing coverage in `[0, 1]` and fractions summing to one.
pub fn validate_metrics(records: &[MetricsRecord]) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        let bad = |what: &str| Err(Error::format("metrics", format!("row {i}: {what}")));
        if !(0.0..=1.0).contains(&r.coverage) {
            return bad("coverage outside [0, 1]");
        }
        if (r.param_fraction + r.latent_fraction - 1.0).abs() > 1e-12 {
            return bad("mixing fractions do not sum to one");
        }
        if i > 0 {
            let prev = &records[i - 1];
            if r.total_rollouts <= prev.total_rollouts {
                return bad("total_rollouts not strictly increasing");
            }
            if r.coverage < prev.coverage {
                return bad("coverage decreased");
            }
        }
    }
    Ok(())
}

/// Wall-clock cost of one phase, kept apart from the reproducible metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    #[serde(rename = "loop")]
    pub loop_index: usize,
    pub iteration: Option<usize>,
    pub phase: Phase,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Search,
    Fit,
}

pub fn write_timings(records: &[TimingRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    for r in records {
        w.serialize(r).map_err(csv_error(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
