//! Small hand-written SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiment::{MetricsRecord, RunRecord};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed y range; derived from the data when `None`.
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let empty = !x0.is_finite();
        if empty {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if let Some((a, b)) = self.y_range {
            (y0, y1) = (a, b);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );

        // grid and ticks
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let yv = y0 + f * (y1 - y0);
            let y = sy(yv);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(yv)
            );
            let xv = x0 + f * (x1 - x0);
            let x = sx(xv);
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 18.0,
                fmt_tick(xv)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 10.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        if empty {
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#888">no data</text>"##,
                LEFT + pw / 2.0,
                TOP + ph / 2.0
            );
        }

        for (i, ser) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = ser
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if path.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    path.join(" ")
                );
            }
            for p in &path {
                let (cx, cy) = p.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                esc(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn ok_metrics(records: &[RunRecord]) -> Vec<&MetricsRecord> {
    records.iter().filter_map(|r| r.metrics.as_ref()).collect()
}

/// Mean over runs of `f(run, checkpoint)`, truncated to the shortest run.
fn mean_curve(ms: &[&MetricsRecord], len: impl Fn(&MetricsRecord) -> usize, f: impl Fn(&MetricsRecord, usize) -> f64) -> Vec<(f64, f64)> {
    let Some(n) = ms.iter().map(|m| len(m)).min() else {
        return Vec::new();
    };
    (0..n)
        .map(|k| {
            let x = ms[0].checkpoint_steps.get(k).copied().unwrap_or(k as u64) as f64;
            let y = ms.iter().map(|m| f(m, k)).sum::<f64>() / ms.len() as f64;
            (x, y)
        })
        .collect()
}

/// Accuracy per split (mean over seeds) at every checkpoint, in percent.
pub fn accuracy_chart(records: &[RunRecord]) -> LineChart {
    let ms = ok_metrics(records);
    let mut series = Vec::new();
    if let Some(first) = ms.first() {
        for (t, name) in first.splits.iter().enumerate() {
            series.push(Series {
                name: name.clone(),
                points: mean_curve(&ms, |m| m.accuracy.len(), |m, k| 100.0 * m.accuracy[k][t]),
            });
        }
        series.push(Series {
            name: "mean".into(),
            points: mean_curve(
                &ms,
                |m| m.accuracy.len(),
                |m, k| 100.0 * m.accuracy[k].iter().sum::<f64>() / m.accuracy[k].len() as f64,
            ),
        });
    }
    let title = match records.first() {
        Some(r) => format!("{} / {} / M={}: accuracy", r.config.protocol, r.config.method, r.config.buffer),
        None => "accuracy".into(),
    };
    LineChart {
        title,
        x_label: "training step".into(),
        y_label: "accuracy (%)".into(),
        y_range: Some((0.0, 100.0)),
        series,
    }
}

/// Pruned gate fraction per layer and overall at every checkpoint.
pub fn sparsity_chart(records: &[RunRecord]) -> LineChart {
    let ms: Vec<&MetricsRecord> = ok_metrics(records).into_iter().filter(|m| m.sparsity.iter().any(|r| !r.is_empty())).collect();
    let mut series = Vec::new();
    if let Some(first) = ms.first() {
        let layers = first.sparsity.last().map_or(0, Vec::len);
        for l in 0..layers {
            series.push(Series {
                name: format!("layer {}", l + 1),
                points: mean_curve(&ms, |m| m.sparsity.len(), |m, k| {
                    let s = &m.sparsity[k][l];
                    s.pruned as f64 / (s.active + s.pruned).max(1) as f64
                }),
            });
        }
        series.push(Series {
            name: "all".into(),
            points: mean_curve(&ms, |m| m.pruned_fraction.len(), |m, k| m.pruned_fraction[k]),
        });
    }
    LineChart {
        title: "pruned gate fraction".into(),
        x_label: "training step".into(),
        y_label: "fraction pruned".into(),
        y_range: Some((0.0, 1.0)),
        series,
    }
}

pub fn write_plots(dir: &Path, records: &[RunRecord]) -> Result<()> {
    for (name, chart) in [("accuracy.svg", accuracy_chart(records)), ("sparsity.svg", sparsity_chart(records))] {
        let p = dir.join(name);
        fs::write(&p, chart.render()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_escaped() {
        let c = LineChart {
            title: "a < b & c".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            y_range: None,
            series: vec![Series {
                name: "\"s\"".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            }],
        };
        let svg = c.render();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("&quot;s&quot;"));
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn empty_and_flat_charts_render() {
        let mut c = LineChart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            y_range: None,
            series: Vec::new(),
        };
        assert!(c.render().contains("no data"));
        c.series.push(Series {
            name: "flat".into(),
            points: vec![(3.0, 0.5)],
        });
        let svg = c.render();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
