//! CSV trajectories and the per-sweep summary table.

use std::path::{Path, PathBuf};

use anyhow::Context;
use ttdyn::Sample;

use crate::runner::TrajectoryRecord;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: [&str; 12] = [
    "kind",
    "N",
    "d",
    "scheme",
    "rank",
    "sub_steps",
    "dt",
    "rmsd_norm",
    "rmsd_energy_rel",
    "rmsd_state",
    "rmsd_positions",
    "cpu_seconds",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    fmt_f64(x.unwrap_or(f64::NAN))
}

pub fn trajectory_header(n_sites: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "time", "norm", "energy"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n_sites).map(|i| format!("pop_{i}")));
    h.extend((1..=n_sites).map(|i| format!("disp_{i}")));
    h
}

fn sample_row(s: &Sample) -> Vec<String> {
    let mut row = vec![s.step.to_string(), fmt_f64(s.time), fmt_f64(s.norm), fmt_f64(s.energy)];
    row.extend(s.populations.iter().map(|&x| fmt_f64(x)));
    row.extend(s.displacements.iter().map(|&x| fmt_f64(x)));
    row
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_trajectory(path: &Path, n_sites: usize, samples: &[Sample]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(trajectory_header(n_sites))?;
    for s in samples {
        w.write_record(sample_row(s))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Summary row; failed cells carry NaN metrics. With `timing` off the
/// cpu_seconds column is zero so reruns are byte-identical.
pub fn summary_row(r: &TrajectoryRecord, timing: bool) -> Vec<String> {
    let (norm, energy, state, positions) = match &r.metrics {
        Some(m) => (m.rmsd_norm, m.rmsd_energy_rel, m.rmsd_state, m.rmsd_positions),
        None => (f64::NAN, f64::NAN, None, None),
    };
    vec![
        r.kind.to_string(),
        r.n_sites.to_string(),
        r.local_dim.to_string(),
        r.cell.scheme.to_string(),
        r.cell.rank.to_string(),
        r.cell.sub_steps.to_string(),
        fmt_f64(r.dt),
        fmt_f64(norm),
        fmt_f64(energy),
        opt(state),
        opt(positions),
        fmt_f64(if timing { r.cpu_seconds } else { 0.0 }),
    ]
}

/// Writes one trajectory file per record plus `summary.csv`; returns the
/// paths written, summary last.
pub fn write_outputs(records: &[TrajectoryRecord], dir: &Path, timing: bool) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::with_capacity(records.len() + 1);
    for r in records {
        let path = dir.join(r.file_name());
        write_trajectory(&path, r.n_sites, &r.samples)?;
        paths.push(path);
    }
    let path = dir.join(SUMMARY_FILE);
    let mut w = writer(&path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in records {
        w.write_record(summary_row(r, timing))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    paths.push(path);
    Ok(paths)
}

/// Classical displacements in the trajectory layout `step,time,disp_1..`.
pub fn write_classical(path: &Path, times: &[f64], displacements: &[Vec<f64>]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let n = displacements.first().map_or(0, Vec::len);
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend((1..=n).map(|i| format!("disp_{i}")));
    w.write_record(&header)?;
    for (k, (t, r)) in times.iter().zip(displacements).enumerate() {
        let mut row = vec![k.to_string(), fmt_f64(*t)];
        row.extend(r.iter().map(|&x| fmt_f64(x)));
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}
