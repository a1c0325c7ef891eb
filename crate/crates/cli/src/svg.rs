//! Log-log error plots as plain SVG markup.

use std::fmt::Write;

use crate::slope::LogLogFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One curve: sample sizes against median errors, both on the natural scale.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub fit: Option<LogLogFit>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, lx: f64) -> f64 {
        LEFT + (lx - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, ly: f64) -> f64 {
        HEIGHT - BOTTOM - (ly - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series on base-2 log axes. Nonpositive points are skipped.
pub fn loglog_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let logs: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| (x.log2(), y.log2()))
                .collect()
        })
        .collect();
    let all: Vec<&(f64, f64)> = logs.iter().flatten().collect();
    let (mut x0, mut x1, mut y0, mut y1) = if all.is_empty() {
        (0.0, 1.0, -1.0, 0.0)
    } else {
        (
            all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor(),
            all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil(),
            all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor(),
            all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil(),
        )
    };
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let f = Frame { x0, x1, y0, y1 };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );

    // axes box and ticks at integer powers of two
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for k in (x0 as i64)..=(x1 as i64) {
        let x = f.px(k as f64);
        let base = HEIGHT - BOTTOM;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{base:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">2<tspan dy="-5" font-size="9">{k}</tspan></text>"#,
            base + 5.0,
            base + 20.0
        );
    }
    for k in (y0 as i64)..=(y1 as i64) {
        let y = f.py(k as f64);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">2<tspan dy="-5" font-size="9">{k}</tspan></text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );

    for (idx, (s, pts)) in series.iter().zip(&logs).enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if !pts.is_empty() {
            let coords: Vec<String> = pts
                .iter()
                .map(|(lx, ly)| format!("{:.2},{:.2}", f.px(*lx), f.py(*ly)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
            for (lx, ly) in pts {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    f.px(*lx),
                    f.py(*ly)
                );
            }
        }
        let mut legend = escape(&s.label);
        if let Some(fit) = &s.fit {
            let (a, b) = (
                pts.first().map_or(x0, |p| p.0),
                pts.last().map_or(x1, |p| p.0),
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5,4"/>"#,
                f.px(a),
                f.py(fit.intercept + fit.slope * a),
                f.px(b),
                f.py(fit.intercept + fit.slope * b)
            );
            let _ = write!(legend, " slope {:.3}", fit.slope);
        }
        let ly = TOP + 15.0 + 20.0 * idx as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}">{legend}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            lx + 22.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markup_contains_curves_and_annotations() {
        let fit = LogLogFit {
            slope: -0.5,
            intercept: 0.0,
            r_squared: 1.0,
        };
        let s = Series {
            label: "d=1".into(),
            points: vec![(8.0, 0.25), (32.0, 0.125), (128.0, 0.0625)],
            fit: Some(fit),
        };
        let svg = loglog_plot("error", "n", "median relative error", &[s]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("d=1 slope -0.500"));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg, loglog_plot("error", "n", "median relative error", &[Series {
            label: "d=1".into(),
            points: vec![(8.0, 0.25), (32.0, 0.125), (128.0, 0.0625)],
            fit: Some(fit),
        }]));
    }

    #[test]
    fn empty_and_degenerate_series_render() {
        let svg = loglog_plot("t", "x", "y", &[]);
        assert!(svg.contains("</svg>"));
        let s = Series {
            label: "a<b".into(),
            points: vec![(4.0, 0.0), (4.0, 0.5)],
            fit: None,
        };
        let svg = loglog_plot("t", "x", "y", &[s]);
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<circle").count(), 1);
    }
}
