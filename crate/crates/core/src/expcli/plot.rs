//! Minimal deterministic SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::SystemKind;
use super::run::RunArtifacts;
use super::{write_file, Result};
use crate::oracle;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 260.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 44.0;
const COLORS: [&str; 4] = ["#1f77b4", "#9467bd", "#d62728", "#2ca02c"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log₁₀ y`; non-positive values are dropped.
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// Panels stacked vertically in one SVG document.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub panels: Vec<Panel>,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = (lo.abs() * 0.1).max(1e-9);
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let transform = |y: f64| if panel.log_y { if y > 0.0 { y.log10() } else { f64::NAN } } else { y };
    let pts = || panel.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(pts().map(|p| p.0));
    let (y0, y1) = bounds(pts().map(|p| transform(p.1)));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = PANEL_HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        top + 20.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT:.2}" y="{:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333"/>"##,
        top + TOP
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let yb = top + TOP + plot_h;
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##, yb + 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            yb + 16.0,
            label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="#333"/>"##,
            LEFT - 4.0
        );
        let text = if panel.log_y { label(10f64.powf(t)) } else { label(t) };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{text}</text>"#,
            LEFT - 7.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        LEFT + plot_w / 2.0,
        top + PANEL_HEIGHT - 8.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + TOP + plot_h / 2.0,
        top + TOP + plot_h / 2.0,
        escape(&panel.y_label)
    );

    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, out: &mut String| {
            if segment.len() > 1 {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    segment.join(" ")
                );
            }
            segment.clear();
        };
        for &(x, y) in &s.points {
            let ty = transform(y);
            if x.is_finite() && ty.is_finite() {
                segment.push(format!("{:.2},{:.2}", sx(x), sy(ty)));
            } else {
                flush(&mut segment, out);
            }
        }
        flush(&mut segment, out);
        let ly = top + TOP + 14.0 + 16.0 * i as f64;
        let lx = WIDTH - RIGHT - 130.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let height = PANEL_HEIGHT * self.panels.len().max(1) as f64;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        for (i, p) in self.panels.iter().enumerate() {
            render_panel(&mut out, p, i as f64 * PANEL_HEIGHT);
        }
        out.push_str("</svg>\n");
        out
    }
}

fn episode_chart(title: &str, y_label: &str, values: Vec<f64>, log_y: bool) -> Chart {
    Chart {
        panels: vec![Panel {
            title: title.into(),
            x_label: "episode".into(),
            y_label: y_label.into(),
            log_y,
            series: vec![Series {
                name: y_label.into(),
                points: values.into_iter().enumerate().map(|(i, v)| (i as f64, v)).collect(),
                dashed: false,
            }],
        }],
    }
}

fn path_chart(run: &RunArtifacts, compare_analytic: bool) -> Result<Chart> {
    let spec = run.config.spec()?;
    let dt = spec.dt();
    let exact = (compare_analytic && run.config.system.kind == SystemKind::Linear)
        .then(|| oracle::analytic_linear_path(spec.x_start[0], spec.x_target[0], spec.horizon));
    let panels = (0..spec.dim())
        .map(|i| {
            let mut series = vec![Series {
                name: "learned (window mean)".into(),
                points: run.path.iter().enumerate().map(|(k, s)| (k as f64 * dt, s[i])).collect(),
                dashed: false,
            }];
            if let Some(p) = exact {
                series.push(Series {
                    name: "analytic".into(),
                    points: (0..=200)
                        .map(|j| {
                            let t = spec.horizon * j as f64 / 200.0;
                            (t, p.eval(t))
                        })
                        .collect(),
                    dashed: true,
                });
            }
            Panel {
                title: if spec.dim() == 1 {
                    "Transition path".into()
                } else {
                    format!("Transition path, component {}", i + 1)
                },
                x_label: "t".into(),
                y_label: format!("x_{}", i + 1),
                log_y: false,
                series,
            }
        })
        .collect();
    Ok(Chart { panels })
}

/// Writes `path.svg`, `running_cost.svg`, `critic_loss.svg` and
/// `terminal_loss.svg` into `out_dir`.
pub fn emit_plots(run: &RunArtifacts, out_dir: &Path, compare_analytic: bool) -> Result<Vec<PathBuf>> {
    let charts = [
        ("path.svg", path_chart(run, compare_analytic)?),
        (
            "running_cost.svg",
            episode_chart("Accumulated running cost", "running cost", run.column(|r| r.running_cost_sum), false),
        ),
        (
            "critic_loss.svg",
            episode_chart("Critic loss", "critic loss", run.column(|r| r.critic_loss), true),
        ),
        (
            "terminal_loss.svg",
            episode_chart("Terminal loss", "terminal loss", run.column(|r| r.terminal_loss), true),
        ),
    ];
    let mut written = Vec::with_capacity(charts.len());
    for (name, chart) in charts {
        let path = out_dir.join(name);
        write_file(&path, &chart.render())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(label(0.25), "0.25");
        assert_eq!(label(2.0), "2");
        assert_eq!(label(1.5e-6), "1.5e-6");
    }

    #[test]
    fn nan_breaks_polyline() {
        let chart = Chart {
            panels: vec![Panel {
                title: "t".into(),
                x_label: "x".into(),
                y_label: "y".into(),
                log_y: false,
                series: vec![Series {
                    name: "s".into(),
                    points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 1.0), (4.0, 0.5)],
                    dashed: false,
                }],
            }],
        };
        let svg = chart.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, chart.render());
    }
}
