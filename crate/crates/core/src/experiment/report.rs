// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Long-format results, their summary, and SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "preset,seed,step,latent_dim,metric,value";

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub preset: String,
    pub seed: u64,
    pub step: u64,
    pub latent_dim: usize,
    pub metric: String,
    pub value: f64,
}

impl CsvRow {
    pub fn new(preset: &str, seed: u64, step: u64, latent_dim: usize, metric: &str, value: f64) -> Self {
        CsvRow {
            preset: preset.to_string(),
            seed,
            step,
            latent_dim,
            metric: metric.to_string(),
            value,
        }
    }

    /// Values use the shortest representation that round-trips.
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.preset, self.seed, self.step, self.latent_dim, self.metric, self.value
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = || Error::InvalidInput(format!("malformed results row {line:?}"));
        if f.len() != 6 {
            return Err(bad());
        }
        Ok(CsvRow {
            preset: f[0].to_string(),
            seed: f[1].parse().map_err(|_| bad())?,
            step: f[2].parse().map_err(|_| bad())?,
            latent_dim: f[3].parse().map_err(|_| bad())?,
            metric: f[4].to_string(),
            value: f[5].parse().map_err(|_| bad())?,
        })
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .skip_while(|l| l.trim() == CSV_HEADER)
        .filter(|l| !l.trim().is_empty())
        .map(CsvRow::parse)
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryEntry {
    pub preset: String,
    pub latent_dim: usize,
    pub metric: String,
    /// Mean of the last `final_window` evaluations, per seed.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

type Key = (String, usize, String);

/// Final-window average per seed (step-0 rows excluded), then mean and
/// standard deviation across seeds.
pub fn summarize(rows: &[CsvRow], final_window: usize) -> Vec<SummaryEntry> {
    let mut series: BTreeMap<Key, BTreeMap<u64, Vec<(u64, f64)>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.step > 0) {
        series
            .entry((r.preset.clone(), r.latent_dim, r.metric.clone()))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push((r.step, r.value));
    }
    series
        .into_iter()
        .map(|((preset, latent_dim, metric), seeds)| {
            let per_seed: Vec<(u64, f64)> = seeds
                .into_iter()
                .map(|(seed, mut pts)| {
                    pts.sort_by_key(|p| p.0);
                    let tail: Vec<f64> = pts.iter().rev().take(final_window).map(|p| p.1).collect();
                    (seed, mean_std(&tail).0)
                })
                .collect();
            let (mean, std) = mean_std(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
            SummaryEntry { preset, latent_dim, metric, per_seed, mean, std }
        })
        .collect()
}

pub fn find<'a>(summary: &'a [SummaryEntry], preset: &str, metric: &str) -> Option<&'a SummaryEntry> {
    summary.iter().find(|e| e.preset == preset && e.metric == metric)
}

pub fn summary_table(summary: &[SummaryEntry]) -> String {
    let mut s = format!("{:<16} {:>6} {:<11} {:>9} {:>9} {:>5}\n", "preset", "latent", "metric", "mean", "std", "seeds");
    for e in summary {
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:<11} {:>9.4} {:>9.4} {:>5}",
            e.preset,
            e.latent_dim,
            e.metric,
            e.mean,
            e.std,
            e.per_seed.len()
        );
    }
    s
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Series {
    label: String,
    /// (x, mean, std)
    points: Vec<(f64, f64, f64)>,
}

fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 60.0, 170.0, 30.0, 45.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, sd) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - sd);
        y1 = y1.max(m + sd);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1e-3;
    }
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, ml + pw / 2.0);
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(fx), h - mb + 16.0, fmt_tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 4.0, py(fy) + 4.0, fmt_tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#, ml + pw / 2.0, h - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#, mt + ph / 2.0, mt + ph / 2.0);
    for (i, se) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = se.points.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m + sd))).collect();
        let lower: Vec<String> = se.points.iter().rev().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m - sd))).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="std-band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = se.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let _ = writeln!(s, r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = mt + 14.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, w - mr + 10.0, ly - 10.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - mr + 28.0, ly, se.label);
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Mean ± std across seeds at each step, per (preset, latent size).
fn curves(rows: &[CsvRow], metric: &str) -> Vec<Series> {
    let mut by: BTreeMap<(String, usize), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        by.entry((r.preset.clone(), r.latent_dim)).or_default().entry(r.step).or_default().push(r.value);
    }
    by.into_iter()
        .map(|((preset, dim), steps)| Series {
            label: format!("{preset} d={dim}"),
            points: steps
                .into_iter()
                .map(|(step, v)| {
                    let (m, s) = mean_std(&v);
                    (step as f64, m, s)
                })
                .collect(),
        })
        .collect()
}

/// Writes `summary.txt` and SVG plots into `dir` from its `results.csv`.
/// Returns the written files, or `None` (with a warning) for an empty CSV.
pub fn emit_report(dir: &Path) -> Result<Option<Vec<PathBuf>>> {
    let rows = read_csv(&dir.join("results.csv"))?;
    if rows.is_empty() {
        log::warn!("{}: results.csv has no rows; nothing to report", dir.display());
        return Ok(None);
    }
    let final_window = super::runner::read_run_config(dir)
        .map(|c| c.experiment.final_window)
        .unwrap_or(10);
    let summary = summarize(&rows, final_window);
    let mut written = Vec::new();
    let path = dir.join("summary.txt");
    std::fs::write(
        &path,
        format!("final window: last {final_window} evaluations per seed; std is across seeds\n\n{}", summary_table(&summary)),
    )?;
    written.push(path);

    let metrics: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.metric.as_str()).collect();
    for metric in metrics {
        let path = dir.join(format!("{metric}_vs_step.svg"));
        std::fs::write(&path, svg_plot(&format!("{metric} vs step"), "step", metric, &curves(&rows, metric)))?;
        written.push(path);

        let mut by_preset: BTreeMap<&str, Vec<(f64, f64, f64)>> = BTreeMap::new();
        for e in summary.iter().filter(|e| e.metric == metric) {
            by_preset.entry(&e.preset).or_default().push((e.latent_dim as f64, e.mean, e.std));
        }
        if by_preset.values().any(|p| p.len() > 1) {
            let series: Vec<Series> = by_preset
                .into_iter()
                .map(|(p, points)| Series { label: p.to_string(), points })
                .collect();
            let path = dir.join(format!("{metric}_vs_latent_dim.svg"));
            std::fs::write(&path, svg_plot(&format!("{metric} vs latent size"), "latent size", metric, &series))?;
            written.push(path);
        }
    }
    Ok(Some(written))
}
