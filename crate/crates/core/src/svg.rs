//! Minimal SVG line charts for control-chart and telemetry export.

use std::fmt::Write as _;

use crate::monitor::{chart_series, ChartConfig, Sample};
use crate::Result;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, color: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            points,
            color: color.into(),
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
    /// Highlighted points, drawn as circles.
    pub markers: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.01;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

impl LineChart {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: "t".into(),
            ..Self::default()
        }
    }

    pub fn render(&self) -> String {
        let all = || {
            self.series
                .iter()
                .flat_map(|s| s.points.iter().copied())
                .chain(self.markers.iter().copied())
        };
        let (x0, x1) = bounds(all().map(|p| p.0));
        let (y0, y1) = bounds(all().map(|p| p.1));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN_L}" y="20" font-size="14">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
        );
        for i in 0..=4 {
            let fx = i as f64 / 4.0;
            let (xv, yv) = (x0 + fx * (x1 - x0), y0 + fx * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - MARGIN_B + 16.0,
                tick_label(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN_L - 6.0,
                sy(yv) + 4.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 6.0,
            escape(&self.x_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let mut d = String::new();
            let mut pen_up = true;
            for &(x, y) in &series.points {
                if !(x.is_finite() && y.is_finite()) {
                    pen_up = true;
                    continue;
                }
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if pen_up { "M" } else { "L" },
                    sx(x),
                    sy(y)
                );
                pen_up = false;
            }
            let dash = if series.dashed {
                r#" stroke-dasharray="6,4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.2"{dash}/>"#,
                d.trim_end(),
                escape(&series.color)
            );
            let ly = MARGIN_T + 14.0 + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{ly:.1}" text-anchor="end" fill="{}">{}</text>"#,
                WIDTH - MARGIN_R - 6.0,
                escape(&series.color),
                escape(&series.name)
            );
        }
        for &(x, y) in self
            .markers
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
        {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#d62728"/>"##,
                sx(x),
                sy(y)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

/// Statistic, center line and control limits of one chart, with out-of-limit
/// points marked.
pub fn control_chart(samples: &[Sample], chart: &ChartConfig) -> Result<String> {
    let points = chart_series(samples, chart)?;
    let value: Vec<(f64, f64)> = points.iter().map(|p| (p.t, p.value)).collect();
    let line = |f: fn(&crate::monitor::ControlLimits) -> f64| {
        points.iter().map(|p| (p.t, f(&p.limits))).collect()
    };
    let mut c = LineChart::new(format!(
        "{} {} chart (n = {})",
        chart.channel.as_str(),
        chart.kind.as_str(),
        chart.window
    ));
    c.series.push(Series::new("statistic", value, "#1f77b4"));
    c.series
        .push(Series::new("center", line(|l| l.center), "#555").dashed());
    c.series
        .push(Series::new("UCL", line(|l| l.ucl), "#d62728").dashed());
    c.series
        .push(Series::new("LCL", line(|l| l.lcl), "#d62728").dashed());
    c.markers = points
        .iter()
        .filter(|p| p.violation.is_some())
        .map(|p| (p.t, p.value))
        .collect();
    Ok(c.render())
}

/// Coolant, tank temperature and (when present) feed temperature traces.
pub fn telemetry_chart(samples: &[Sample]) -> String {
    let mut c = LineChart::new("telemetry");
    c.series.push(Series::new(
        "coolant_temp",
        samples.iter().map(|s| (s.time, s.coolant_temp)).collect(),
        "#1f77b4",
    ));
    c.series.push(Series::new(
        "tank_temp",
        samples.iter().map(|s| (s.time, s.tank_temp)).collect(),
        "#d62728",
    ));
    if samples.iter().any(|s| s.feed_temp.is_some()) {
        let feed = samples
            .iter()
            .map(|s| (s.time, s.feed_temp.unwrap_or(f64::NAN)))
            .collect();
        c.series.push(Series::new("feed_temp", feed, "#2ca02c"));
    }
    c.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_deterministically() {
        let mut c = LineChart::new("a < b");
        c.series.push(Series::new(
            "x",
            vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)],
            "red",
        ));
        let a = c.render();
        assert_eq!(a, c.render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a &lt; b"));
        assert_eq!(a.matches('M').count(), 2, "NaN breaks the line");
    }

    #[test]
    fn empty_chart_is_valid() {
        let s = LineChart::new("empty").render();
        assert!(s.contains("</svg>"));
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}
