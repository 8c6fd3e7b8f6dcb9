//! Coverage-versus-rollouts curves as a standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::metrics::{read_metrics, MetricsRecord};
use super::suite::{aggregate, AggregateRow};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const MARGIN: [f64; 4] = [40.0, 30.0, 60.0, 70.0]; // top, right, bottom, left
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// The directory two levels up, `<algorithm>` in `<algorithm>/<seed>/metrics.csv`.
fn label_of(path: &Path) -> String {
    path.parent()
        .and_then(Path::parent)
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

struct Series {
    label: String,
    rows: Vec<AggregateRow>,
    band: bool,
    refits: Vec<u64>,
}

/// Rollout counts at which the manifold was refit: the end of every search loop.
fn refit_points(records: &[MetricsRecord]) -> Vec<u64> {
    if records.iter().all(|r| r.mean_recon_error.is_none()) {
        return Vec::new();
    }
    records
        .windows(2)
        .filter(|w| w[0].loop_index >= 1 && w[1].loop_index != w[0].loop_index)
        .map(|w| w[0].total_rollouts)
        .chain(
            records
                .last()
                .filter(|r| r.loop_index >= 1)
                .map(|r| r.total_rollouts),
        )
        .collect()
}

fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let step = 10f64.powf(v.log10().floor());
    (v / step).ceil() * step
}

/// Renders one curve per label group: the median line, the interquartile band
/// when a group has more than one run, and circles where the manifold was refit.
pub fn render_svg(groups: &BTreeMap<String, Vec<Vec<MetricsRecord>>>) -> String {
    let series: Vec<Series> = groups
        .iter()
        .map(|(label, runs)| Series {
            label: label.clone(),
            rows: aggregate(label, runs),
            band: runs.len() > 1,
            refits: runs.first().map(|r| refit_points(r)).unwrap_or_default(),
        })
        .collect();
    let x_max = nice_ceiling(
        series
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.total_rollouts as f64))
            .fold(0.0, f64::max),
    );
    let y_max = nice_ceiling(
        series
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.p75))
            .fold(0.0, f64::max),
    )
    .min(1.0);
    let [top, right, bottom, left] = MARGIN;
    let (pw, ph) = (WIDTH - left - right, HEIGHT - top - bottom);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..=5 {
        let fx = x_max * i as f64 / 5.0;
        let fy = y_max * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#ddd"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"##,
            sx(fx),
            top,
            top + ph,
            top + ph + 18.0,
            fx
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#ddd"/><text x="{3:.1}" y="{4:.1}" text-anchor="end">{5:.3}</text>"##,
            left,
            sy(fy),
            left + pw,
            left - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">total rollouts</text>"#,
        left + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">behaviour coverage</text>"#,
        top + ph / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="series" data-label="{}">"#, ser.label);
        if ser.band {
            let upper = ser
                .rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", sx(r.total_rollouts as f64), sy(r.p75)));
            let lower = ser
                .rows
                .iter()
                .rev()
                .map(|r| format!("{:.2},{:.2}", sx(r.total_rollouts as f64), sy(r.p25)));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = ser
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.total_rollouts as f64), sy(r.median)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="median" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for &x in &ser.refits {
            if let Some(r) = ser.rows.iter().find(|r| r.total_rollouts == x) {
                let _ = writeln!(
                    s,
                    r#"<circle class="refit" cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}"/>"#,
                    sx(x as f64),
                    sy(r.median)
                );
            }
        }
        let ly = top + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + 12.0,
            left + 36.0,
            left + 42.0,
            ly + 4.0,
            ser.label
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Reads the metrics files, groups them by algorithm directory and writes the plot.
pub fn emit_plot(csv_paths: &[PathBuf], out: &Path) -> Result<()> {
    if csv_paths.is_empty() {
        return Err(Error::Config("no metrics files to plot".into()));
    }
    let missing: Vec<String> = csv_paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing metrics files: {}",
            missing.join(", ")
        )));
    }
    let mut groups: BTreeMap<String, Vec<Vec<MetricsRecord>>> = BTreeMap::new();
    for p in csv_paths {
        groups
            .entry(label_of(p))
            .or_default()
            .push(read_metrics(p)?);
    }
    let svg = render_svg(&groups);
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
