//! Static SVG learning-curve reports.
//!
//! Output is a pure function of the input curves: coordinates are printed
//! with fixed precision and colors come from a fixed palette, so identical
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::curves::AggregateCurve;
use crate::{Error, Result};

pub const CHART_WIDTH: f64 = 860.0;
pub const CHART_HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 220.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One chart: a metric and one labelled curve per experiment group.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportChart {
    pub metric: String,
    pub curves: Vec<(String, AggregateCurve)>,
}

/// Data-to-pixel mapping of one chart's plot area, in viewBox units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotFrame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PlotFrame {
    /// Frame of the chart at vertical slot `index`.
    ///
    /// x spans `[0, max grid step]`; y spans the union of all `mean ± std`
    /// bands padded by 5% of their range, or `value ± 1` when that range is
    /// empty.
    pub fn for_chart(chart: &ReportChart, index: usize) -> Self {
        let x_max = chart
            .curves
            .iter()
            .filter_map(|(_, c)| c.grid.last().copied())
            .fold(0.0f64, f64::max);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, c) in &chart.curves {
            for (m, s) in c.mean.iter().zip(&c.std) {
                lo = lo.min(m - s);
                hi = hi.max(m + s);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = 0.0;
            hi = 0.0;
        }
        let (y_min, y_max) = if hi - lo > 0.0 {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        } else {
            (lo - 1.0, hi + 1.0)
        };
        Self {
            left: MARGIN_LEFT,
            top: index as f64 * CHART_HEIGHT + MARGIN_TOP,
            width: CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            height: CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
            x_min: 0.0,
            x_max: if x_max > 0.0 { x_max } else { 1.0 },
            y_min,
            y_max,
        }
    }

    pub fn x_px(&self, x: f64) -> f64 {
        self.left + self.width * (x - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn y_px(&self, y: f64) -> f64 {
        self.top + self.height * (self.y_max - y) / (self.y_max - self.y_min)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a >= 1e6 {
        format!("{:.2}M", v / 1e6)
    } else if a >= 1e4 {
        format!("{:.1}k", v / 1e3)
    } else if a >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn points(frame: &PlotFrame, xs: &[f64], ys: impl Iterator<Item = f64>) -> String {
    xs.iter()
        .zip(ys)
        .map(|(&x, y)| format!("{:.3},{:.3}", frame.x_px(x), frame.y_px(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_chart(svg: &mut String, chart: &ReportChart, index: usize) {
    let f = PlotFrame::for_chart(chart, index);
    let chart_top = index as f64 * CHART_HEIGHT;
    let _ = writeln!(
        svg,
        r#"<g class="chart"><text x="{:.3}" y="{:.3}" font-size="16" text-anchor="middle">{}</text>"#,
        f.left + f.width / 2.0,
        chart_top + 28.0,
        escape(&chart.metric)
    );

    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let xv = f.x_min + t * (f.x_max - f.x_min);
        let yv = f.y_min + t * (f.y_max - f.y_min);
        let (xp, yp) = (f.x_px(xv), f.y_px(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{xp:.3}" y1="{:.3}" x2="{xp:.3}" y2="{:.3}" stroke="#e0e0e0"/><text x="{xp:.3}" y="{:.3}" text-anchor="middle">{}</text>"##,
            f.top,
            f.top + f.height,
            f.top + f.height + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.3}" y1="{yp:.3}" x2="{:.3}" y2="{yp:.3}" stroke="#e0e0e0"/><text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"##,
            f.left,
            f.left + f.width,
            f.left - 6.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444"/>"##,
        f.left, f.top, f.width, f.height
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">env steps</text>"#,
        f.left + f.width / 2.0,
        f.top + f.height + 42.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" transform="rotate(-90 {:.3} {:.3})">{}</text>"#,
        f.left - 58.0,
        f.top + f.height / 2.0,
        f.left - 58.0,
        f.top + f.height / 2.0,
        escape(&chart.metric)
    );

    for (k, (label, c)) in chart.curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = points(&f, &c.grid, c.mean.iter().zip(&c.std).map(|(m, s)| m + s));
        let rev_grid: Vec<f64> = c.grid.iter().rev().copied().collect();
        let lower = points(&f, &rev_grid, c.mean.iter().zip(&c.std).rev().map(|(m, s)| m - s));
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points(&f, &c.grid, c.mean.iter().copied())
        );
        let ly = f.top + 10.0 + 22.0 * k as f64;
        let lx = f.left + f.width + 16.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.3}" y="{ly:.3}" width="14" height="14" fill="{color}"/><text x="{:.3}" y="{:.3}">{} (n={})</text>"#,
            lx + 20.0,
            ly + 11.0,
            escape(label),
            c.n_runs
        );
    }
    svg.push_str("</g>\n");
}

/// Renders all charts stacked vertically into one SVG document.
pub fn render_svg(charts: &[ReportChart]) -> Result<String> {
    if charts.is_empty() || charts.iter().any(|c| c.curves.is_empty()) {
        return Err(Error::InvalidArgument("nothing to plot: empty curve set".into()));
    }
    for chart in charts {
        for (label, c) in &chart.curves {
            if c.grid.len() != c.mean.len() || c.grid.len() != c.std.len() || c.grid.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "curve `{label}` has inconsistent lengths"
                )));
            }
        }
    }
    let total_height = CHART_HEIGHT * charts.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {CHART_WIDTH:.0} {total_height:.0}" width="{CHART_WIDTH:.0}" height="{total_height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, chart) in charts.iter().enumerate() {
        render_chart(&mut svg, chart, i);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_report(charts: &[ReportChart], out_path: &Path) -> Result<()> {
    let svg = render_svg(charts)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(value: f64) -> AggregateCurve {
        AggregateCurve {
            grid: vec![0.0, 50.0, 100.0],
            mean: vec![value; 3],
            std: vec![0.0; 3],
            n_runs: 1,
        }
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(render_svg(&[]).is_err());
        assert!(render_svg(&[ReportChart {
            metric: "m".into(),
            curves: vec![]
        }])
        .is_err());
    }

    #[test]
    fn flat_curve_is_a_horizontal_line_at_the_mapped_height() {
        let chart = ReportChart {
            metric: "charts/episodic_return".into(),
            curves: vec![("ppo cartpole-v1".into(), flat(7.0))],
        };
        let svg = render_svg(std::slice::from_ref(&chart)).unwrap();
        // y range is 7 ± 1, so the line sits at mid-height of the plot area
        let expected_y = MARGIN_TOP + (CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / 2.0;
        let frame = PlotFrame::for_chart(&chart, 0);
        assert!((frame.y_px(7.0) - expected_y).abs() < 1e-12);
        let line = svg.lines().find(|l| l.contains(r#"class="mean""#)).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<f64> = pts
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(ys.len(), 3);
        assert!(ys.iter().all(|&y| (y - expected_y).abs() < 1e-3));
        let xs: Vec<f64> = pts
            .split(' ')
            .map(|p| p.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!((xs[0] - MARGIN_LEFT).abs() < 1e-3);
        assert!((xs[2] - (CHART_WIDTH - MARGIN_RIGHT)).abs() < 1e-3);
    }

    #[test]
    fn rendering_is_deterministic_and_escapes_labels() {
        let chart = ReportChart {
            metric: "a<b".into(),
            curves: vec![("x&y".into(), flat(1.0)), ("z".into(), flat(2.0))],
        };
        let a = render_svg(std::slice::from_ref(&chart)).unwrap();
        let b = render_svg(std::slice::from_ref(&chart)).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("a&lt;b") && a.contains("x&amp;y"));
        assert_eq!(a.matches(r#"class="band""#).count(), 2);
    }
}
