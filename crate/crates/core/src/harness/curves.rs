//! Per-q robustness panels: mean AUPRC against `alpha_test` on a log10 axis,
//! one series per mode with a 95% normal-approximation band, and a dashed
//! marker at the training ratio.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::AggregateRow;
use crate::model::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    /// Position of the vertical marker (`a1_train / a0_train`).
    pub alpha_train: f64,
    /// x position for `alpha_test = 0`; defaults to half the smallest
    /// positive alpha present.
    pub zero_floor: Option<f64>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            alpha_train: 0.4,
            zero_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub alpha_test: f64,
    /// Plotted x position (alpha, or the floor for alpha = 0).
    pub x: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub mode: Mode,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub representation: String,
    pub q: f64,
    pub series: Vec<Series>,
    pub alpha_train: f64,
    /// Set when an `alpha_test = 0` point was moved to this x.
    pub zero_floor: Option<f64>,
}

/// Groups aggregated rows into panels, one per `(representation, q)`.
pub fn panels(rows: &[AggregateRow], opts: &CurveOptions) -> Vec<Panel> {
    let floor = opts.zero_floor.unwrap_or_else(|| {
        rows.iter()
            .map(|r| r.alpha_test)
            .filter(|&a| a > 0.0)
            .fold(f64::INFINITY, f64::min)
            .min(1.0)
            / 2.0
    });

    let mut keys: Vec<(String, f64)> = rows.iter().map(|r| (r.representation.clone(), r.q)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();

    keys.into_iter()
        .map(|(repr, q)| {
            let in_panel: Vec<&AggregateRow> = rows
                .iter()
                .filter(|r| r.representation == repr && r.q == q)
                .collect();
            let mut modes: Vec<Mode> = in_panel.iter().map(|r| r.mode).collect();
            modes.sort();
            modes.dedup();
            let mut used_floor = false;
            let series = modes
                .into_iter()
                .map(|mode| {
                    let mut points: Vec<CurvePoint> = in_panel
                        .iter()
                        .filter(|r| r.mode == mode)
                        .map(|r| {
                            let half = r.ci95_half_width();
                            let x = if r.alpha_test > 0.0 {
                                r.alpha_test
                            } else {
                                used_floor = true;
                                floor
                            };
                            CurvePoint {
                                alpha_test: r.alpha_test,
                                x,
                                mean: r.mean,
                                lower: r.mean - half,
                                upper: r.mean + half,
                                n: r.n,
                            }
                        })
                        .collect();
                    points.sort_by(|a, b| a.alpha_test.total_cmp(&b.alpha_test));
                    Series { mode, points }
                })
                .collect();
            Panel {
                representation: repr,
                q,
                series,
                alpha_train: opts.alpha_train,
                zero_floor: used_floor.then_some(floor),
            }
        })
        .collect()
}

fn series_color(mode: Mode) -> &'static str {
    match mode {
        Mode::Backdoor => "#1f77b4",
        Mode::Vanilla => "#ff7f0e",
    }
}

fn series_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Backdoor => "BA",
        Mode::Vanilla => "vanilla",
    }
}

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 340.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

/// Renders one panel as a standalone SVG document.
pub fn render_svg(panel: &Panel) -> String {
    let all: Vec<&CurvePoint> = panel.series.iter().flat_map(|s| &s.points).collect();
    let (mut x_lo, mut x_hi) = all
        .iter()
        .map(|p| p.x.log10())
        .chain(std::iter::once(panel.alpha_train.log10()))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if x_hi - x_lo < 1e-9 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let (mut y_lo, mut y_hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.lower), hi.max(p.upper)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    let pad = ((y_hi - y_lo) * 0.08).max(0.005);
    y_lo = (y_lo - pad).max(0.0);
    y_hi = (y_hi + pad).min(1.0);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{} · P(z=MIMIC) = {}</text>"#,
        WIDTH / 2.0,
        panel.representation,
        panel.q
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );

    // decade and half-decade ticks on x
    let mut e = x_lo.floor() as i32;
    while (e as f64) <= x_hi.ceil() {
        for m in [1.0, 2.0, 5.0] {
            let v = m * 10f64.powi(e);
            let lv = v.log10();
            if lv < x_lo - 1e-9 || lv > x_hi + 1e-9 {
                continue;
            }
            let x = sx(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#444"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                TOP + plot_h,
                TOP + plot_h + 4.0,
                TOP + plot_h + 16.0,
                v
            );
        }
        e += 1;
    }
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            LEFT - 4.0,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">alpha_test (log10 scale)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">AUPRC</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for s in &panel.series {
        if s.points.is_empty() {
            continue;
        }
        let color = series_color(s.mode);
        let upper: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.upper))).collect();
        let lower: Vec<String> = s
            .points
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.lower)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="ci {}" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            s.mode,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series {}" points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            s.mode,
            line.join(" ")
        );
    }

    let ax = sx(panel.alpha_train);
    let _ = writeln!(
        svg,
        r#"<line class="alpha-train" x1="{ax:.2}" y1="{TOP}" x2="{ax:.2}" y2="{}" stroke="red" stroke-dasharray="5,4"/>"#,
        TOP + plot_h
    );

    for (i, s) in panel.series.iter().enumerate() {
        let y = TOP + 14.0 + 14.0 * i as f64;
        let x = LEFT + plot_w - 80.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 18.0,
            series_color(s.mode),
            x + 22.0,
            y + 4.0,
            series_label(s.mode)
        );
    }
    if let Some(floor) = panel.zero_floor {
        let _ = writeln!(
            svg,
            r#"<text class="zero-note" x="{}" y="{}" font-size="9">alpha_test = 0 plotted at x = {floor}</text>"#,
            LEFT + 4.0,
            TOP + plot_h - 6.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn panel_stem(panel: &Panel) -> String {
    format!("curve_{}_q{:.2}", panel.representation, panel.q)
}

/// Writes `<stem>.csv` and `<stem>.svg` for each panel; returns written paths.
pub fn emit_curves(rows: &[AggregateRow], opts: &CurveOptions, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for panel in panels(rows, opts) {
        let stem = panel_stem(&panel);
        let csv_path = out_dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["mode", "alpha_test", "x", "mean", "lower", "upper", "n"])?;
        for s in &panel.series {
            for p in &s.points {
                w.write_record([
                    s.mode.as_str().to_string(),
                    p.alpha_test.to_string(),
                    p.x.to_string(),
                    p.mean.to_string(),
                    p.lower.to_string(),
                    p.upper.to_string(),
                    p.n.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        written.push(csv_path);

        let svg_path = out_dir.join(format!("{stem}.svg"));
        fs::write(&svg_path, render_svg(&panel)).map_err(|e| Error::io(&svg_path, e))?;
        written.push(svg_path);
    }
    Ok(written)
}
