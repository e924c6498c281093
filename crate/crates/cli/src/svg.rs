//! Minimal SVG charts: scatter, line, staircase fronts and box plots.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Line,
    /// Markers joined by a staircase, for a front with minimised x and
    /// maximised y.
    Step,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Padded data range; a degenerate range is widened around its value.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 0.0 {
        let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.05 };
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let py = f.py(yv);
        let _ = writeln!(
            out,
            r#"<line x1="{x0}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(yv)
        );
        if x_ticks {
            let xv = f.x.0 + t * (f.x.1 - f.x.0);
            let px = f.px(xv);
            let _ = writeln!(
                out,
                r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 20.0,
                tick_label(xv)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let cy = (y0 + y1) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="18" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 18 {cy:.1})">{}</text>"#,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{y:.1}" dominant-baseline="middle">{}</text>"#,
            y - 5.0,
            PALETTE[k % PALETTE.len()],
            x + 16.0,
            escape(name)
        );
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let f = Frame {
            x: range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0))),
            y: range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1))),
        };
        let mut out = String::new();
        open(&mut out, &self.title);
        axes(&mut out, &f, &self.x_label, &self.y_label, true);
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut pts = s.points.clone();
            if s.style != Style::Markers {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                let mut path = String::new();
                for (idx, &(x, y)) in pts.iter().enumerate() {
                    let cmd = if idx == 0 { 'M' } else { 'L' };
                    if s.style == Style::Step && idx > 0 {
                        let _ = write!(path, "L{:.2},{:.2} ", f.px(x), f.py(pts[idx - 1].1));
                    }
                    let _ = write!(path, "{cmd}{:.2},{:.2} ", f.px(x), f.py(y));
                }
                let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.trim_end());
            }
            if s.style != Style::Line {
                for &(x, y) in &pts {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#,
                        f.px(x),
                        f.py(y)
                    );
                }
            }
        }
        let names: Vec<&str> = self.series.iter().map(|s| s.name.as_str()).collect();
        legend(&mut out, &names);
        out.push_str("</svg>\n");
        out
    }
}

/// Box plot from precomputed (min, q1, median, q3, max) per group.
pub fn boxplot(title: &str, x_label: &str, y_label: &str, groups: &[(String, [f64; 5])]) -> String {
    let f = Frame {
        x: (0.0, groups.len().max(1) as f64),
        y: range(groups.iter().flat_map(|(_, s)| s.iter().copied())),
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, x_label, y_label, false);
    let slot = (WIDTH - LEFT - RIGHT) / groups.len().max(1) as f64;
    let half = (slot * 0.25).min(30.0);
    for (k, (label, [min, q1, med, q3, max])) in groups.iter().enumerate() {
        let cx = f.px(k as f64 + 0.5);
        let color = PALETTE[0];
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{:.2}" x2="{cx:.1}" y2="{:.2}" stroke="black"/>"#,
            f.py(*min),
            f.py(*max)
        );
        for v in [min, max] {
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                cx + half / 2.0,
                y = f.py(*v)
            );
        }
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.2}" width="{:.1}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="black"/>"#,
            cx - half,
            f.py(*q3),
            2.0 * half,
            (f.py(*q1) - f.py(*q3)).max(0.5)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y = f.py(*med)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 20.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_every_series() {
        let chart = Chart {
            title: "fronts <a&b>".into(),
            x_label: "cost".into(),
            y_label: "reliability".into(),
            series: vec![
                Series {
                    name: "label".into(),
                    points: vec![(1.0, 0.2), (2.0, 0.5), (3.0, 0.9)],
                    style: Style::Step,
                },
                Series {
                    name: "random".into(),
                    points: vec![(2.5, 0.1)],
                    style: Style::Markers,
                },
            ],
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 4);
        assert_eq!(svg.matches("<path").count(), 1);
        assert!(svg.contains("fronts &lt;a&amp;b&gt;"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_inputs_render() {
        let svg = boxplot("b", "x", "y", &[("32".into(), [0.5; 5])]);
        assert!(!svg.contains("NaN"));
        assert!(svg.contains(">32</text>"));
        let empty = Chart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![],
        };
        assert!(!empty.render().contains("NaN"));
    }
}
