//! Standalone SVG line plots of ground truth against model rollouts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 420.0;
pub const MARGIN_LEFT: f64 = 90.0;
pub const MARGIN_RIGHT: f64 = 170.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 7] = [
    "#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One curve; `values[i]` belongs to step `first_step + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub first_step: usize,
    pub values: Vec<f64>,
}

/// Data ranges the plot area is mapped to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Axes {
    pub fn fit(series: &[&Series]) -> Result<Self> {
        let mut a = Axes {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for s in series {
            if s.values.is_empty() {
                return Err(Error::InvalidArgument(format!("series {:?} is empty", s.label)));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("series {:?}", s.label)));
            }
            a.x_min = a.x_min.min(s.first_step as f64);
            a.x_max = a.x_max.max((s.first_step + s.values.len() - 1) as f64);
            for &v in &s.values {
                a.y_min = a.y_min.min(v);
                a.y_max = a.y_max.max(v);
            }
        }
        if a.x_max == a.x_min {
            a.x_max += 1.0;
        }
        if a.y_max == a.y_min {
            a.y_max += 1.0;
        }
        Ok(a)
    }

    pub fn to_px(&self, step: f64, value: f64) -> (f64, f64) {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        (
            MARGIN_LEFT + (step - self.x_min) / (self.x_max - self.x_min) * w,
            MARGIN_TOP + (self.y_max - value) / (self.y_max - self.y_min) * h,
        )
    }

    pub fn from_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        (
            self.x_min + (x - MARGIN_LEFT) / w * (self.x_max - self.x_min),
            self.y_max - (y - MARGIN_TOP) / h * (self.y_max - self.y_min),
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Truth first, then each model; an empty model list plots truth alone.
pub fn render_svg(title: &str, truth: &Series, models: &[Series]) -> Result<String> {
    let all: Vec<&Series> = std::iter::once(truth).chain(models).collect();
    let axes = Axes::fit(&all)?;
    let (x0, y0) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    let (x1, y1) = (WIDTH - MARGIN_RIGHT, MARGIN_TOP);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
        axes.x_min, axes.x_max, axes.y_min, axes.y_max
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let step = axes.x_min + f * (axes.x_max - axes.x_min);
        let value = axes.y_min + f * (axes.y_max - axes.y_min);
        let (px, _) = axes.to_px(step, axes.y_min);
        let (_, py) = axes.to_px(axes.x_min, value);
        let _ = writeln!(
            s,
            r#"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{step:.0}</text>"#,
            y0 + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{value:.3e}</text>"#,
            x0 - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">time step</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">stress (Pa)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, series) in all.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = series
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let (px, py) = axes.to_px((series.first_step + k) as f64, v);
                format!("{px:.4},{py:.4}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(&series.label),
            points.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let lx = x1 + 12.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(path: &Path, title: &str, truth: &Series, models: &[Series]) -> Result<()> {
    let svg = render_svg(title, truth, models)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
