//! Minimal SVG plots with fixed styling.
//!
//! Canvas 640×480, plot area inset by 60 px, white background, black axes,
//! 12 px sans-serif labels. Scatter points are 4 px circles colored from
//! blue (correlation ≤ 0.5) to red (1.0); histograms are grey bars;
//! curves use one stroke color per series.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;
const SERIES: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone, log_x: bool) -> Self {
        let bounds = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        let mut xs = xs.map(|v| if log_x { v.ln() } else { v });
        let (mut x0, mut x1) = bounds(&mut xs);
        let (mut y0, mut y1) = bounds(&mut ys.clone());
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Frame { x0, x1, y0, y1, log_x }
    }

    fn px(&self, x: f64) -> f64 {
        let x = if self.log_x { x.ln() } else { x };
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    let fmt = |v: f64| format!("{v:.3}");
    let (xl, xr) = if f.log_x {
        (f.x0.exp(), f.x1.exp())
    } else {
        (f.x0, f.x1)
    };
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{}" text-anchor="middle">{}</text>"#,
        H - PAD + 16.0,
        fmt(xl)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W - PAD,
        H - PAD + 16.0,
        fmt(xr)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        PAD - 4.0,
        H - PAD,
        fmt(f.y0)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        PAD - 4.0,
        PAD + 4.0,
        fmt(f.y1)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn color(r: f64) -> String {
    let t = ((r - 0.5) / 0.5).clamp(0.0, 1.0);
    let red = (255.0 * t).round() as u8;
    let blue = (255.0 * (1.0 - t)).round() as u8;
    format!("#{red:02x}30{blue:02x}")
}

/// Projection of `points` onto coordinates `(a, b)`, colored by `values`.
pub fn scatter(title: &str, points: &[[f64; 3]], values: &[f64], axes: (usize, usize)) -> String {
    let names = ["x", "y", "z"];
    let f = Frame::new(
        points.iter().map(|p| p[axes.0]),
        points.iter().map(|p| p[axes.1]),
        false,
    );
    let mut out = String::new();
    header(&mut out, title, names[axes.0], names[axes.1], &f);
    for (p, v) in points.iter().zip(values) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="{}"/>"#,
            f.px(p[axes.0]),
            f.py(p[axes.1]),
            color(*v)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn histogram(title: &str, xlabel: &str, edges: &[f64], density: &[f64]) -> String {
    let f = Frame::new(edges.iter().cloned(), density.iter().cloned().chain([0.0]), false);
    let mut out = String::new();
    header(&mut out, title, xlabel, "density", &f);
    for (b, d) in density.iter().enumerate() {
        let (xa, xb) = (f.px(edges[b]), f.px(edges[b + 1]));
        let (ya, yb) = (f.py(*d), f.py(0.0));
        let _ = writeln!(
            out,
            r##"<rect x="{xa:.3}" y="{ya:.3}" width="{:.3}" height="{:.3}" fill="#999999" stroke="black" stroke-width="0.5"/>"##,
            (xb - xa).max(0.0),
            (yb - ya).max(0.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Line plot of several series over a shared logarithmic abscissa.
pub fn curves(title: &str, xlabel: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let f = Frame::new(
        x.iter().cloned(),
        series
            .iter()
            .flat_map(|(_, ys)| ys.iter().cloned())
            .collect::<Vec<_>>()
            .into_iter(),
        true,
    );
    let mut out = String::new();
    header(&mut out, title, xlabel, "", &f);
    for (k, (name, ys)) in series.iter().enumerate() {
        let stroke = SERIES[k % SERIES.len()];
        let mut d = String::new();
        for (i, (xv, yv)) in x.iter().zip(ys.iter()).enumerate() {
            if !yv.is_finite() {
                continue;
            }
            let _ = write!(
                d,
                "{}{:.3} {:.3} ",
                if i == 0 { "M" } else { "L" },
                f.px(*xv),
                f.py(*yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{stroke}">{}</text>"#,
            W - PAD - 80.0,
            PAD + 16.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
