//! Standalone SVG charts: line curves, constant-life scatter with a failure
//! boundary, and unrolled (theta, z) heat maps. Output depends only on the
//! input data, so identical datasets produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fatigue::{ConstantLifeData, PolarData};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One or more x-y polylines sharing axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<CurveSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlotData {
    Curve(CurveData),
    Scatter(ConstantLifeData),
    Heat(PolarData),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Curve,
    Scatter,
    Heat,
}

impl PlotData {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotData::Curve(_) => PlotKind::Curve,
            PlotData::Scatter(_) => PlotKind::Scatter,
            PlotData::Heat(_) => PlotKind::Heat,
        }
    }
}

/// Linear map from a data range to a pixel range.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(range: (f64, f64), p0: f64, p1: f64) -> Self {
        let (mut d0, mut d1) = range;
        if !(d1 > d0) {
            d0 -= 0.5;
            d1 = d0 + 1.0;
        }
        Scale { d0, d1, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let step = nice_step(hi - lo, 6);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(points: impl Iterator<Item = (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points {
        xr = (xr.0.min(x), xr.1.max(x));
        yr = (yr.0.min(y), yr.1.max(y));
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
    }
    if !yr.0.is_finite() {
        yr = (0.0, 1.0);
    }
    (xr, yr)
}

struct Canvas {
    out: String,
    sx: Scale,
    sy: Scale,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str, xr: (f64, f64), yr: (f64, f64)) -> Self {
        let sx = Scale::new(xr, LEFT, WIDTH - RIGHT);
        let sy = Scale::new(yr, HEIGHT - BOTTOM, TOP);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
        let mut c = Canvas { out, sx, sy };
        c.axes(x_label, y_label);
        c
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let o = &mut self.out;
        let _ = writeln!(o, r#"<g class="axes" stroke="black" stroke-width="1" fill="none">"#);
        let _ = writeln!(o, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
        let _ = writeln!(o, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#);
        let _ = writeln!(o, "</g>");
        let _ = writeln!(o, r#"<g class="ticks" font-size="11">"#);
        for t in ticks(self.sx.d0, self.sx.d1) {
            let px = self.sx.map(t);
            let _ = writeln!(o, r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
            let _ = writeln!(o, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 18.0, fmt_tick(t));
        }
        for t in ticks(self.sy.d0, self.sy.d1) {
            let py = self.sy.map(t);
            let _ = writeln!(o, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, fmt_tick(t));
        }
        let _ = writeln!(o, "</g>");
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 16.0, escape(x_label));
        let _ = writeln!(
            o,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn path_d(&self, pts: &[(f64, f64)]) -> String {
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, self.sx.map(x), self.sy.map(y));
        }
        d
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn render_curve(c: &CurveData) -> String {
    let (xr, yr) = extent(c.series.iter().flat_map(|s| s.points.iter().copied()));
    let pad = |r: (f64, f64)| {
        let span = (r.1 - r.0).max(1e-9);
        (r.0 - 0.05 * span, r.1 + 0.05 * span)
    };
    let mut cv = Canvas::new(&c.title, &c.x_label, &c.y_label, pad(xr), pad(yr));
    for (i, s) in c.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() >= 2 {
            let d = cv.path_d(&s.points);
            let _ = writeln!(cv.out, r#"<path class="series" d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                cv.out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                cv.sx.map(x),
                cv.sy.map(y)
            );
        }
        let ly = TOP + 16.0 * i as f64 + 8.0;
        let _ = writeln!(
            cv.out,
            r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{}</text>"#,
            WIDTH - RIGHT - 6.0,
            escape(&s.label)
        );
    }
    cv.finish()
}

fn render_constant_life(c: &ConstantLifeData) -> String {
    let mut cv = Canvas::new(&c.title, "mean strain (-)", "strain amplitude (-)", c.x_range, c.y_range);
    let pts: Vec<String> = c
        .boundary
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", cv.sx.map(x), cv.sy.map(y)))
        .collect();
    let _ = writeln!(
        cv.out,
        r#"<polyline class="boundary" points="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="6 3"/>"#,
        pts.join(" ")
    );
    let _ = writeln!(cv.out, r#"<g class="points">"#);
    for p in &c.points {
        let color = if p.failed { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            cv.out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.7"/>"#,
            cv.sx.map(p.eps_mean),
            cv.sy.map(p.eps_amp)
        );
    }
    let _ = writeln!(cv.out, "</g>");
    cv.finish()
}

/// Blue to yellow to red ramp for t in [0, 1].
fn heat_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let stops = [(0.0, (49.0, 54.0, 149.0)), (0.5, (254.0, 224.0, 144.0)), (1.0, (165.0, 0.0, 38.0))];
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let s = (t - a.0) / (b.0 - a.0);
    let mix = |x: f64, y: f64| (x + s * (y - x)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.1 .0, b.1 .0), mix(a.1 .1, b.1 .1), mix(a.1 .2, b.1 .2))
}

fn render_polar(p: &PolarData) -> String {
    let mut cv = Canvas::new(&p.title, "angle (rad)", "axial position (mm)", p.theta_range, p.z_range);
    let scale = if p.max_amp > 0.0 { p.max_amp } else { 1.0 };
    let _ = writeln!(cv.out, r#"<g class="heat">"#);
    for q in &p.points {
        let _ = writeln!(
            cv.out,
            r#"<rect x="{:.2}" y="{:.2}" width="5" height="5" fill="{}"/>"#,
            cv.sx.map(q.theta) - 2.5,
            cv.sy.map(q.z) - 2.5,
            heat_color(q.eps_amp / scale)
        );
    }
    let _ = writeln!(cv.out, "</g>");
    let _ = writeln!(
        cv.out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">max strain amplitude {:.5}</text>"#,
        WIDTH - RIGHT,
        TOP - 4.0,
        p.max_amp
    );
    cv.finish()
}

pub fn render_svg(data: &PlotData) -> String {
    match data {
        PlotData::Curve(c) => render_curve(c),
        PlotData::Scatter(c) => render_constant_life(c),
        PlotData::Heat(p) => render_polar(p),
    }
}

pub fn emit_svg(data: &PlotData, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, render_svg(data))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fatigue::{constant_life_data, FatigueLimits, PolarPoint};

    #[test]
    fn empty_scatter_has_axes_and_one_boundary() {
        let d = constant_life_data(&[], &FatigueLimits::default(), None);
        let svg = render_svg(&PlotData::Scatter(d));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(r#"class="axes""#));
        assert_eq!(svg.matches("<circle").count(), 0);
    }

    #[test]
    fn identical_inputs_identical_bytes() {
        let c = CurveData {
            title: "radial force".into(),
            x_label: "diameter (mm)".into(),
            y_label: "force (N)".into(),
            series: vec![CurveSeries { label: "a".into(), points: vec![(26.0, 0.0), (20.0, 1.5), (10.0, 9.25)] }],
        };
        let a = render_svg(&PlotData::Curve(c.clone()));
        let b = render_svg(&PlotData::Curve(c));
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn heat_colors_span_ramp() {
        assert_eq!(heat_color(0.0), "#313695");
        assert_eq!(heat_color(1.0), "#a50026");
        let p = PolarData {
            title: "polar".into(),
            points: vec![PolarPoint { theta: 1.0, z: 2.0, eps_amp: 0.0 }],
            theta_range: (0.0, 6.3),
            z_range: (0.0, 4.0),
            max_amp: 0.0,
        };
        assert_eq!(render_svg(&PlotData::Heat(p)).matches("<rect").count(), 2);
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
    }
}
