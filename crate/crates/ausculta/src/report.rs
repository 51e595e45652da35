//! Run provenance and report rendering: a JSON run manifest written next
//! to every command's outputs, plus dependency-free SVG bar and radar
//! charts for score tables and rank reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::audio::atomic_write;
use crate::error::Result;

/// FNV-1a 64-bit hash, hex-encoded. Used to fingerprint the effective
/// config of a run so reruns can be matched to their manifests.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h = (h ^ b as u64).wrapping_mul(PRIME);
    }
    format!("{h:016x}")
}

/// Provenance record for one command invocation: what ran, with which
/// seed and config, reading and writing which files, for how long.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub v: u32,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_ms: u64,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> RunManifest {
        let config_json = serde_json::to_string(config).expect("config serializes");
        RunManifest {
            v: 1,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: fnv1a64_hex(config_json.as_bytes()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_ms: 0,
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn finish(&mut self, started: Instant) {
        self.wall_ms = started.elapsed().as_millis() as u64;
    }

    /// Write `run_manifest.json` into `dir` and return its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("run_manifest.json");
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        atomic_write(&path, &json)?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#b07aa1",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt(v: f64) -> String {
    // Trim trailing zeros without scientific notation for chart labels.
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() { "0".into() } else { s.to_string() }
}

/// Grouped bar chart: one cluster of bars per label, one bar per series.
/// Values are drawn from zero up; negative values are clamped to zero.
pub fn bar_chart(title: &str, labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (900.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 48.0, 56.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max = series
        .iter()
        .flat_map(|(_, vs)| vs.iter().copied())
        .fold(0.0_f64, f64::max)
        .max(1e-9)
        * 1.05;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        esc(title)
    ));

    // Horizontal grid lines with value labels.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = top + plot_h * (1.0 - frac);
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>\n",
            left + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            left - 6.0,
            y + 4.0,
            fmt(max * frac)
        ));
    }

    let n_groups = labels.len().max(1);
    let n_series = series.len().max(1);
    let group_w = plot_w / n_groups as f64;
    let bar_w = (group_w * 0.8) / n_series as f64;

    for (gi, label) in labels.iter().enumerate() {
        let gx = left + group_w * gi as f64 + group_w * 0.1;
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values.get(gi).copied().unwrap_or(0.0).max(0.0);
            let bh = plot_h * (v / max);
            let x = gx + bar_w * si as f64;
            let y = top + plot_h - bh;
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" \
                 fill=\"{}\"><title>{}: {}</title></rect>\n",
                bar_w.max(1.0),
                PALETTE[si % PALETTE.len()],
                esc(&series[si].0),
                fmt(values.get(gi).copied().unwrap_or(0.0)),
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            gx + group_w * 0.4,
            top + plot_h + 16.0,
            esc(label)
        ));
    }

    // Legend along the bottom edge.
    let mut lx = left;
    let ly = h - 14.0;
    for (si, (name, _)) in series.iter().enumerate() {
        svg.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            ly - 10.0,
            PALETTE[si % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\">{}</text>\n",
            lx + 16.0,
            esc(name)
        ));
        lx += 16.0 + 7.0 * name.len() as f64 + 24.0;
    }

    svg.push_str("</svg>\n");
    svg
}

/// Radar (spider) chart: one polygon per series over the given axes.
/// Values are scaled against the largest value across all series, or
/// against 1.0 when everything already fits in the unit interval (so
/// reciprocal-rank charts keep an absolute scale).
pub fn radar_chart(title: &str, axes: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (520.0, 480.0);
    let (cx, cy, r) = (w / 2.0, 40.0 + (h - 120.0) / 2.0, (h - 160.0) / 2.0);
    let n = axes.len().max(1);
    let data_max = series
        .iter()
        .flat_map(|(_, vs)| vs.iter().copied())
        .fold(0.0_f64, f64::max);
    let scale = if data_max <= 1.0 { 1.0 } else { data_max };

    let angle = |i: usize| -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * i as f64 / n as f64;
    let point = |i: usize, frac: f64| {
        let a = angle(i);
        (cx + r * frac * a.cos(), cy + r * frac * a.sin())
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{cx}\" y=\"20\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        esc(title)
    ));

    // Concentric reference rings and spokes.
    for ring in 1..=4 {
        let frac = ring as f64 / 4.0;
        let pts: Vec<String> = (0..n)
            .map(|i| {
                let (x, y) = point(i, frac);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"none\" stroke=\"#ddd\"/>\n",
            pts.join(" ")
        ));
    }
    for (i, axis) in axes.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        svg.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{cy}\" x2=\"{x:.1}\" y2=\"{y:.1}\" stroke=\"#bbb\"/>\n"
        ));
        let (lx, ly) = point(i, 1.14);
        svg.push_str(&format!(
            "<text x=\"{lx:.1}\" y=\"{ly:.1}\" text-anchor=\"middle\">{}</text>\n",
            esc(axis)
        ));
    }

    for (si, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let pts: Vec<String> = (0..n)
            .map(|i| {
                let v = values.get(i).copied().unwrap_or(0.0).max(0.0) / scale;
                let (x, y) = point(i, v.min(1.0));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" \
             stroke=\"{color}\" stroke-width=\"2\"><title>{}</title></polygon>\n",
            pts.join(" "),
            esc(name)
        ));
    }

    // Legend under the chart.
    let mut lx = 30.0;
    let ly = h - 16.0;
    for (si, (name, _)) in series.iter().enumerate() {
        svg.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            ly - 10.0,
            PALETTE[si % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\">{}</text>\n",
            lx + 16.0,
            esc(name)
        ));
        lx += 16.0 + 6.5 * name.len() as f64 + 20.0;
    }

    svg.push_str("</svg>\n");
    svg
}
