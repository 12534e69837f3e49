//! Reading summaries back: row diffs and order-of-accuracy fits.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};

use crate::output::SUMMARY_HEADER;

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub kind: String,
    pub n_sites: usize,
    pub local_dim: usize,
    pub scheme: String,
    pub rank: usize,
    pub sub_steps: usize,
    pub dt: f64,
    /// rmsd_norm, rmsd_energy_rel, rmsd_state, rmsd_positions, cpu_seconds.
    pub metrics: [f64; 5],
}

pub const METRIC_NAMES: [&str; 5] = ["rmsd_norm", "rmsd_energy_rel", "rmsd_state", "rmsd_positions", "cpu_seconds"];

impl SummaryRow {
    pub fn key(&self) -> (String, usize, usize, String, usize, usize) {
        (self.kind.clone(), self.n_sites, self.local_dim, self.scheme.clone(), self.rank, self.sub_steps)
    }

    pub fn rmsd_state(&self) -> f64 {
        self.metrics[2]
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> anyhow::Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let raw = rec.get(i).with_context(|| format!("line {line}: missing column {}", SUMMARY_HEADER[i]))?;
    raw.trim().parse().with_context(|| format!("line {line}: bad {} `{raw}`", SUMMARY_HEADER[i]))
}

pub fn read_summary(path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rd.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        bail!("{}: not a summary table (header `{}`)", path.display(), header.iter().collect::<Vec<_>>().join(","));
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = k as u64 + 2;
        let mut metrics = [0.0; 5];
        for (j, m) in metrics.iter_mut().enumerate() {
            *m = field(&rec, 7 + j, line)?;
        }
        rows.push(SummaryRow {
            kind: field(&rec, 0, line)?,
            n_sites: field(&rec, 1, line)?,
            local_dim: field(&rec, 2, line)?,
            scheme: field(&rec, 3, line)?,
            rank: field(&rec, 4, line)?,
            sub_steps: field(&rec, 5, line)?,
            dt: field(&rec, 6, line)?,
            metrics,
        });
    }
    Ok(rows)
}

/// Row matched across two summaries. `diffs` is `b - a`; NaN on both sides
/// counts as equal.
#[derive(Clone, Debug, PartialEq)]
pub struct RowDiff {
    pub a: SummaryRow,
    pub diffs: [f64; 5],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    pub matched: Vec<RowDiff>,
    /// Keys present on one side only, rendered as `kind N d scheme r sub`.
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
}

fn key_label(r: &SummaryRow) -> String {
    format!("{} N={} d={} {} r={} sub={}", r.kind, r.n_sites, r.local_dim, r.scheme, r.rank, r.sub_steps)
}

pub fn compare(a: &[SummaryRow], b: &[SummaryRow]) -> Comparison {
    let index: BTreeMap<_, _> = b.iter().map(|r| (r.key(), r)).collect();
    let mut out = Comparison::default();
    for ra in a {
        match index.get(&ra.key()) {
            Some(rb) => {
                let mut diffs = [0.0; 5];
                for j in 0..5 {
                    let (x, y) = (ra.metrics[j], rb.metrics[j]);
                    diffs[j] = if x.is_nan() && y.is_nan() { 0.0 } else { y - x };
                }
                out.matched.push(RowDiff { a: ra.clone(), diffs });
            }
            None => out.only_a.push(key_label(ra)),
        }
    }
    let keys: std::collections::BTreeSet<_> = a.iter().map(SummaryRow::key).collect();
    out.only_b = b.iter().filter(|r| !keys.contains(&r.key())).map(key_label).collect();
    out
}

/// Least-squares slope of `log rmsd_state` against `log dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub kind: String,
    pub n_sites: usize,
    pub scheme: String,
    pub rank: usize,
    /// Points inside the error window.
    pub points: usize,
    /// `None` with fewer than two points.
    pub slope: Option<f64>,
}

pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(dt, e)| (dt.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// One fit per (kind, N, scheme, rank) over rows with `lo <= rmsd_state <= hi`.
pub fn slopes(rows: &[SummaryRow], lo: f64, hi: f64) -> Vec<SlopeFit> {
    let mut groups: BTreeMap<(String, usize, String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let e = r.rmsd_state();
        let entry = groups.entry((r.kind.clone(), r.n_sites, r.scheme.clone(), r.rank)).or_default();
        if e.is_finite() && e >= lo && e <= hi && r.dt > 0.0 {
            entry.push((r.dt, e));
        }
    }
    groups
        .into_iter()
        .map(|((kind, n_sites, scheme, rank), pts)| SlopeFit {
            kind,
            n_sites,
            scheme,
            rank,
            points: pts.len(),
            slope: fit_slope(&pts),
        })
        .collect()
}
