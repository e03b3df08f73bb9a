//! Minimal self-contained SVG charts. Output depends only on the input
//! numbers, so re-rendering the same data gives byte-identical files.

use std::fmt::Write as _;

use crate::analysis::Point;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<Point>,
    /// Optional `(low, high)` per point, drawn as a shaded band.
    pub band: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterGroup {
    pub name: String,
    pub points: Vec<Point>,
    pub radius: f64,
    pub color: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub name: String,
    pub vertices: Vec<Point>,
    pub color: &'static str,
    pub dashed: bool,
}

/// Scatter plot over fixed axis ranges with optional polygon overlays.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterChart {
    pub title: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub groups: Vec<ScatterGroup>,
    pub polygons: Vec<Polygon>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite()) {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, col)) in entries.iter().enumerate() {
        let y = TOP + 8.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 150.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="4" fill="{col}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 4.0,
            x + 18.0,
            y + 2.0,
            escape(name)
        );
    }
}

fn path_of(f: &Frame, pts: impl Iterator<Item = Point>) -> String {
    let mut d = String::new();
    for (i, p) in pts.enumerate() {
        let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, f.px(p[0]), f.py(p[1]));
    }
    d.trim_end().to_string()
}

impl LineChart {
    pub fn render(&self) -> String {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for (i, p) in s.points.iter().enumerate() {
                xs = (xs.0.min(p[0]), xs.1.max(p[0]));
                ys = (ys.0.min(p[1]), ys.1.max(p[1]));
                if let Some(band) = &s.band {
                    ys = (ys.0.min(band[i].0), ys.1.max(band[i].1));
                }
            }
        }
        let f = Frame::new(xs, ys);
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &f, &self.x_label, &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            if let Some(band) = &s.band {
                if !s.points.is_empty() {
                    let upper = s.points.iter().zip(band).map(|(p, b)| [p[0], b.1]);
                    let lower = s.points.iter().zip(band).rev().map(|(p, b)| [p[0], b.0]);
                    let d = path_of(&f, upper.chain(lower));
                    let _ = writeln!(out, r#"<path d="{d} Z" fill="{}" fill-opacity="0.2" stroke="none"/>"#, color(i));
                }
            }
        }
        for (i, s) in self.series.iter().enumerate() {
            let d = path_of(&f, s.points.iter().copied());
            let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, color(i));
        }
        let entries: Vec<(&str, &str)> = self.series.iter().enumerate().map(|(i, s)| (s.name.as_str(), color(i))).collect();
        legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}

impl ScatterChart {
    pub fn render(&self) -> String {
        let f = Frame::new(self.x_range, self.y_range);
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &f, "x", "y");
        for g in &self.groups {
            for p in &g.points {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="{:.1}" fill="{}" fill-opacity="0.6"/>"#,
                    f.px(p[0]),
                    f.py(p[1]),
                    g.radius,
                    g.color
                );
            }
        }
        for poly in &self.polygons {
            if poly.vertices.len() >= 2 {
                let d = path_of(&f, poly.vertices.iter().copied());
                let dash = if poly.dashed { r#" stroke-dasharray="6,4""# } else { "" };
                let _ = writeln!(out, r#"<path d="{d} Z" fill="none" stroke="{}" stroke-width="2"{dash}/>"#, poly.color);
            }
        }
        let mut entries: Vec<(&str, &str)> = self.groups.iter().map(|g| (g.name.as_str(), g.color)).collect();
        entries.extend(self.polygons.iter().map(|p| (p.name.as_str(), p.color)));
        legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}
