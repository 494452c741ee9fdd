//! Two-panel learning-curve chart: loss on top, cosine similarity below.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::train::GradMode;

use super::results::ResultRow;

pub const PANEL_WIDTH: f64 = 800.0;
pub const PANEL_HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

/// Light (per-run) and dark (mean) stroke for each gradient mode.
fn palette(mode: GradMode) -> (&'static str, &'static str) {
    match mode {
        GradMode::Exact => ("#9ecae1", "#08519c"),
        GradMode::Approx => ("#fdae6b", "#a63603"),
    }
}

/// One curve per run; curves are keyed by gradient mode and problem.
type Series = BTreeMap<(u8, String), BTreeMap<usize, Vec<(usize, f64)>>>;

fn collect(rows: &[ResultRow], value: impl Fn(&ResultRow) -> f64) -> Series {
    let mut series: Series = BTreeMap::new();
    for row in rows {
        let mode = match row.grad_mode {
            GradMode::Exact => 0,
            GradMode::Approx => 1,
        };
        series
            .entry((mode, row.problem.name().to_string()))
            .or_default()
            .entry(row.run)
            .or_default()
            .push((row.iteration, value(row)));
    }
    for runs in series.values_mut() {
        for points in runs.values_mut() {
            points.sort_by_key(|p| p.0);
        }
    }
    series
}

fn mean_curve(runs: &BTreeMap<usize, Vec<(usize, f64)>>) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for points in runs.values() {
        for &(it, v) in points {
            let e = acc.entry(it).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(it, (s, n))| (it, s / n as f64)).collect()
}

struct Axes {
    x_max: f64,
    y_min: f64,
    y_max: f64,
    log_y: bool,
    top: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        let w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + w * if self.x_max > 0.0 { x / self.x_max } else { 0.0 }
    }

    fn py(&self, y: f64) -> f64 {
        let h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let (y, lo, hi) = if self.log_y {
            (y.max(self.y_min).log10(), self.y_min.log10(), self.y_max.log10())
        } else {
            (y, self.y_min, self.y_max)
        };
        let t = if hi > lo { (y - lo) / (hi - lo) } else { 0.5 };
        self.top + MARGIN_TOP + h * (1.0 - t)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn polyline(out: &mut String, axes: &Axes, points: &[(usize, f64)], stroke: &str, width: f64) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(it, v)| format!("{:.2},{:.2}", axes.px(it as f64), axes.py(v)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{stroke}" stroke-width="{width}" points="{}"/>"#,
        coords.join(" ")
    );
}

fn frame(out: &mut String, axes: &Axes, title: &str, y_label: &str) {
    let (x0, x1) = (MARGIN_LEFT, PANEL_WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (axes.top + MARGIN_TOP, axes.top + PANEL_HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(out, r#"<g font-family="sans-serif" font-size="12" fill="black">"#);
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="16">{title}</text>"#,
        PANEL_WIDTH / 2.0,
        axes.top + MARGIN_TOP - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        (x0 + x1) / 2.0,
        y1 + 40.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{0:.2}" text-anchor="middle" transform="rotate(-90 20 {0:.2})">{y_label}</text>"#,
        (y0 + y1) / 2.0
    );
    for k in 0..=TICKS {
        let t = k as f64 / TICKS as f64;
        let xv = (axes.x_max * t).round();
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            axes.px(xv),
            y1 + 18.0,
            fmt_tick(xv)
        );
        let yv = if axes.log_y {
            10f64.powf(axes.y_min.log10() + t * (axes.y_max.log10() - axes.y_min.log10()))
        } else {
            axes.y_min + t * (axes.y_max - axes.y_min)
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            axes.py(yv) + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(out, "</g>");
}

fn legend(out: &mut String, series: &Series, top: f64) {
    for (k, (mode, problem)) in series.keys().enumerate() {
        let mode = if *mode == 0 { GradMode::Exact } else { GradMode::Approx };
        let (_, dark) = palette(mode);
        let y = top + MARGIN_TOP + 15.0 + 18.0 * k as f64;
        let x = PANEL_WIDTH - MARGIN_RIGHT - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{dark}" stroke-width="2.5"/>"#,
            x + 25.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{problem} {}</text>"#,
            x + 32.0,
            y + 4.0,
            mode.name()
        );
    }
}

fn panel(out: &mut String, series: &Series, axes: &Axes, title: &str, y_label: &str, zero_line: bool) {
    frame(out, axes, title, y_label);
    if zero_line && axes.y_min < 0.0 && axes.y_max > 0.0 {
        let y = axes.py(0.0);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="dimgray" stroke-dasharray="4,4"/>"#,
            MARGIN_LEFT,
            PANEL_WIDTH - MARGIN_RIGHT
        );
    }
    for ((mode, _), runs) in series {
        let (light, dark) = palette(if *mode == 0 { GradMode::Exact } else { GradMode::Approx });
        for points in runs.values() {
            polyline(out, axes, points, light, 1.0);
        }
        polyline(out, axes, &mean_curve(runs), dark, 2.5);
    }
    legend(out, series, axes.top);
}

/// Renders the chart. Output depends only on `rows` and `log_loss`.
pub fn render(rows: &[ResultRow], log_loss: bool) -> String {
    let x_max = rows.iter().map(|r| r.iteration).max().unwrap_or(0) as f64;

    let losses = collect(rows, |r| r.loss);
    let (mut lo, mut hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.loss), hi.max(r.loss))
    });
    if log_loss {
        let min_pos = rows.iter().map(|r| r.loss).filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
        lo = if min_pos.is_finite() { min_pos } else { 1e-12 };
        hi = hi.max(lo * 10.0);
    } else {
        lo = lo.min(0.0);
        if hi <= lo {
            hi = lo + 1.0;
        }
    }
    let loss_axes = Axes {
        x_max,
        y_min: lo,
        y_max: hi,
        log_y: log_loss,
        top: 0.0,
    };

    let sims = collect(rows, |r| r.cos_sim_mean);
    let sim_lo = rows.iter().map(|r| r.cos_sim_mean).fold(0.0f64, f64::min).min(-0.1);
    let sim_axes = Axes {
        x_max,
        y_min: sim_lo.max(-1.0),
        y_max: 1.0,
        log_y: false,
        top: PANEL_HEIGHT,
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = PANEL_WIDTH,
        h = 2.0 * PANEL_HEIGHT
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let loss_label = if log_loss { "loss (log scale)" } else { "loss" };
    panel(&mut out, &losses, &loss_axes, "Learning curves", loss_label, false);
    panel(&mut out, &sims, &sim_axes, "Cosine similarity (approximate vs exact)", "cos_sim_mean", true);
    let _ = writeln!(out, "</svg>");
    out
}
