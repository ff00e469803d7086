//! Plot data: CSV series and a minimal static SVG rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::formats::FormatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Line,
    Scatter,
}

impl SeriesKind {
    fn as_str(self) -> &'static str {
        match self {
            Self::Line => "line",
            Self::Scatter => "scatter",
        }
    }
}

/// One curve with axis labels carrying units, e.g. `freq_ghz`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub kind: SeriesKind,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PlotSeries {
    pub fn new(
        label: &str,
        kind: SeriesKind,
        (x_label, x): (&str, Vec<f64>),
        (y_label, y): (&str, Vec<f64>),
    ) -> Result<Self, FormatError> {
        if x.len() != y.len() {
            return Err(FormatError::Schema(format!(
                "series `{label}`: {} x values but {} y values",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(FormatError::Schema(format!("series `{label}` has non-finite values")));
        }
        for l in [label, x_label, y_label] {
            if l.contains([',', '\n', '=']) {
                return Err(FormatError::Schema(format!("label `{l}` contains a reserved character")));
            }
        }
        Ok(Self {
            label: label.to_owned(),
            kind,
            x_label: x_label.to_owned(),
            y_label: y_label.to_owned(),
            x,
            y,
        })
    }

    /// `#series=`, `#kind=` headers followed by two named columns.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "#series={}\n#kind={}\n{},{}\n",
            self.label,
            self.kind.as_str(),
            self.x_label,
            self.y_label
        );
        for (x, y) in self.x.iter().zip(&self.y) {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, FormatError> {
        let mut label = None;
        let mut kind = SeriesKind::Line;
        let mut header: Option<(String, String)> = None;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                match c.split_once('=') {
                    Some(("series", v)) => label = Some(v.to_owned()),
                    Some(("kind", "line")) => kind = SeriesKind::Line,
                    Some(("kind", "scatter")) => kind = SeriesKind::Scatter,
                    Some(("kind", other)) => {
                        return Err(FormatError::Parse {
                            line: i,
                            msg: format!("unknown series kind `{other}`"),
                        })
                    }
                    _ => {}
                }
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| FormatError::Parse {
                line: i,
                msg: "expected two comma-separated fields".into(),
            })?;
            if header.is_none() {
                header = Some((a.trim().to_owned(), b.trim().to_owned()));
                continue;
            }
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| FormatError::Parse {
                    line: i,
                    msg: format!("`{s}` is not a number"),
                })
            };
            x.push(num(a)?);
            y.push(num(b)?);
        }
        let (xl, yl) = header.ok_or_else(|| FormatError::Schema("missing column header".into()))?;
        Self::new(&label.unwrap_or_default(), kind, (&xl, x), (&yl, y))
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

const PALETTE: [&str; 4] = ["#1f4e8c", "#c0392b", "#2e7d32", "#7b1fa2"];

/// Render series sharing one pair of axes. Axis labels come from the first
/// series.
pub fn render_svg(title: &str, series: &[PlotSeries]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            top + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    if let Some(first) = series.first() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            h - 16.0,
            escape(&first.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&first.y_label)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        match s.kind {
            SeriesKind::Line => {
                let pts: Vec<String> = s
                    .x
                    .iter()
                    .zip(&s.y)
                    .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            SeriesKind::Scatter => {
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#,
                        sx(x),
                        sy(y)
                    );
                }
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{colour}">{}</text>"#,
            left + 8.0,
            top + 16.0 + 14.0 * k as f64,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
