//! SVG rendering of sweep results: one line chart per metric with one
//! series per beta, mean across seeds with a min-max band.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::harness::{csvio, HarnessError};
use crate::metrics::{aggregate, MetricRow, RollingMeans};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Which rolling metric a chart displays.
#[derive(Debug, Clone, Copy)]
enum Metric {
    Reward,
    Pcr,
    Ptr,
    Success,
}

impl Metric {
    fn extract(self, m: &RollingMeans) -> f64 {
        match self {
            Metric::Reward => m.return_raw,
            Metric::Pcr => m.pred_correct,
            Metric::Ptr => m.ptr,
            Metric::Success => m.success,
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Reward => "Rolling episode reward (raw)",
            Metric::Pcr => "Prediction correctness ratio",
            Metric::Ptr => "Prediction time ratio",
            Metric::Success => "Success rate",
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            Metric::Reward => "reward.svg",
            Metric::Pcr => "pcr.svg",
            Metric::Ptr => "ptr.svg",
            Metric::Success => "success.svg",
        }
    }
}

/// Loads every `metrics.csv` under `dir` (one per cell), grouped by beta
/// then seed.
fn load_cells(dir: &Path) -> Result<BTreeMap<u64, BTreeMap<u64, Vec<MetricRow>>>, HarnessError> {
    let mut by_beta: BTreeMap<u64, BTreeMap<u64, Vec<MetricRow>>> = BTreeMap::new();
    if !dir.is_dir() {
        return Err(HarnessError::Csv(format!("{} is not a directory", dir.display())));
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path().join("metrics.csv");
        if !path.is_file() {
            continue;
        }
        let rows = csvio::read_rows(BufReader::new(fs::File::open(&path)?))?;
        if rows.is_empty() {
            continue;
        }
        let beta_bits = rows[0].beta.to_bits();
        let seed = rows[0].seed;
        by_beta.entry(beta_bits).or_default().insert(seed, rows);
    }
    if by_beta.is_empty() {
        return Err(HarnessError::Csv(format!(
            "no complete metrics.csv found under {}",
            dir.display()
        )));
    }
    Ok(by_beta)
}

struct Series {
    label: String,
    color: &'static str,
    mean: Vec<(f64, f64)>,
    band: Vec<(f64, f64)>, // hull: lo forward then hi backward
}

fn build_series(
    by_beta: &BTreeMap<u64, BTreeMap<u64, Vec<MetricRow>>>,
    metric: Metric,
    window: usize,
) -> Vec<Series> {
    let mut out = Vec::new();
    for (idx, (&beta_bits, seeds)) in by_beta.iter().enumerate() {
        let rolled: Vec<Vec<f64>> = seeds
            .values()
            .map(|rows| aggregate(rows, window).iter().map(|m| metric.extract(m)).collect())
            .collect();
        let len = rolled.iter().map(Vec::len).min().unwrap_or(0);
        if len == 0 {
            continue;
        }
        let stride = (len / 400).max(1);
        let mut mean = Vec::new();
        let mut lo_pts = Vec::new();
        let mut hi_pts = Vec::new();
        let mut i = 0;
        while i < len {
            let vals: Vec<f64> = rolled.iter().map(|r| r[i]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mean.push((i as f64, m));
            lo_pts.push((i as f64, lo));
            hi_pts.push((i as f64, hi));
            i += stride;
        }
        let mut band = lo_pts;
        band.extend(hi_pts.into_iter().rev());
        out.push(Series {
            label: format!("beta={}", csvio::fmt_sig9(f64::from_bits(beta_bits))),
            color: PALETTE[idx % PALETTE.len()],
            mean,
            band,
        });
    }
    out
}

fn render_chart(series: &[Series], title: &str, x_max: f64) -> String {
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(_, y) in s.mean.iter().chain(&s.band) {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = (y_max - y_min) * 0.05;
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + x / x_max.max(1.0) * plot_w;
    let sy = move |y: f64| MARGIN_T + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        MARGIN_L + plot_w / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    // Ticks.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let x_val = x_max * frac;
        let y_val = y_min + (y_max - y_min) * frac;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            sx(x_val),
            HEIGHT - MARGIN_B + 18.0,
            x_val.round() as i64
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 8.0,
            sy(y_val) + 4.0,
            csvio::fmt_sig9((y_val * 1000.0).round() / 1000.0)
        ));
        if i > 0 {
            svg.push_str(&format!(
                "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
                sy(y_val),
                WIDTH - MARGIN_R,
                sy(y_val)
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">episode</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    ));
    // Bands then lines so the means stay visible.
    for s in series {
        let pts: String = s
            .band
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polygon points=\"{pts}\" fill=\"{}\" opacity=\"0.15\" stroke=\"none\"/>\n",
            s.color
        ));
    }
    for s in series {
        let pts: String = s
            .mean
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            s.color
        ));
    }
    // Legend.
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 14.0 + i as f64 * 18.0;
        let x = WIDTH - MARGIN_R + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            x + 22.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            x + 28.0,
            y + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Renders the four metric charts for a finished run directory, returning
/// the written paths. Fails when the directory holds no readable cell CSV.
pub fn plot_run_dir(dir: &Path, window: usize) -> Result<Vec<PathBuf>, HarnessError> {
    let by_beta = load_cells(dir)?;
    let x_max = by_beta
        .values()
        .flat_map(|seeds| seeds.values().map(Vec::len))
        .max()
        .unwrap_or(1) as f64;
    let mut written = Vec::new();
    for metric in [Metric::Reward, Metric::Pcr, Metric::Ptr, Metric::Success] {
        let series = build_series(&by_beta, metric, window);
        let svg = render_chart(&series, metric.title(), x_max);
        let path = dir.join(metric.file_name());
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
