//! Minimal SVG figures: centered-L curves, point maps and pixel maps, all on
//! a fixed 800×600 canvas.

use std::fmt::Write as _;

use quakeres_core::region::BoundingBox;
use quakeres_core::residuals::{PixelResidualMap, ResidualFlag};
use quakeres_core::KCurve;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn f(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600" width="800" height="600" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="800" height="600" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="400" y="28" text-anchor="middle" font-size="16">{}</text>"#, escape(title));
        Self { out }
    }

    fn axes(&mut self, x: Axis, y: Axis, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (x.p0, x.p1, y.p0, y.p1);
        let _ = writeln!(
            self.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            f(x0),
            f(y1),
            f(x1 - x0),
            f(y0 - y1)
        );
        for t in ticks(x.lo, x.hi, 8) {
            let px = x.map(t);
            let _ = writeln!(self.out, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#, f(px), f(y0), f(y0 + 5.0));
            let _ = writeln!(
                self.out,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                f(px),
                f(y0 + 18.0),
                tick_label(t)
            );
        }
        for t in ticks(y.lo, y.hi, 6) {
            let py = y.map(t);
            let _ = writeln!(self.out, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#, f(x0 - 5.0), f(py), f(x0));
            let _ = writeln!(
                self.out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                f(x0 - 8.0),
                f(py + 4.0),
                tick_label(t)
            );
        }
        let _ = writeln!(
            self.out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            f((x0 + x1) / 2.0),
            f(HEIGHT - 15.0),
            escape(x_label)
        );
        let _ = writeln!(
            self.out,
            r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
            f((y0 + y1) / 2.0),
            escape(y_label)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
        let _ = writeln!(self.out, r#"<polyline points="{}" fill="none" {style}/>"#, coords.join(" "));
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Centered L with its bands: solid curve, dashed bands.
pub fn l_curve(curve: &KCurve, title: &str) -> String {
    let r = curve.radii.values();
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let mut extend = |v: f64| {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    };
    curve.centered_l.iter().for_each(|v| extend(*v));
    if let Some(b) = &curve.bands {
        b.iter().for_each(|(a, c)| {
            extend(*a);
            extend(*c)
        });
    }
    let pad = 0.05 * (hi - lo).max(1e-6);
    let x = Axis::new(0.0, *r.last().unwrap_or(&1.0), LEFT, WIDTH - RIGHT);
    let y = Axis::new(lo - pad, hi + pad, HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(title);
    c.axes(x, y, "r (degrees)", "L(r) - r");
    c.polyline(&[(x.map(x.lo), y.map(0.0)), (x.map(x.hi), y.map(0.0))], r##"stroke="#999999" stroke-width="1""##);
    if let Some(b) = &curve.bands {
        let lower: Vec<_> = r.iter().zip(b).map(|(r, (l, _))| (x.map(*r), y.map(*l))).collect();
        let upper: Vec<_> = r.iter().zip(b).map(|(r, (_, u))| (x.map(*r), y.map(*u))).collect();
        c.polyline(&lower, r#"stroke="black" stroke-width="1.5" stroke-dasharray="6,4""#);
        c.polyline(&upper, r#"stroke="black" stroke-width="1.5" stroke-dasharray="6,4""#);
    }
    let line: Vec<_> = r.iter().zip(&curve.centered_l).map(|(r, l)| (x.map(*r), y.map(*l))).collect();
    c.polyline(&line, r#"stroke="black" stroke-width="2""#);
    c.finish()
}

/// Plot axes for a geographic box, keeping one degree equal on both axes.
fn map_axes(bbox: &BoundingBox, keep_aspect: bool) -> (Axis, Axis) {
    let (w, h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let (dx, dy) = ((bbox.x_max - bbox.x_min).max(1e-12), (bbox.y_max - bbox.y_min).max(1e-12));
    let (pw, ph) = if keep_aspect {
        let s = (w / dx).min(h / dy);
        (dx * s, dy * s)
    } else {
        (w, h)
    };
    let x0 = LEFT + (w - pw) / 2.0;
    let y0 = TOP + (h - ph) / 2.0;
    (Axis::new(bbox.x_min, bbox.x_max, x0, x0 + pw), Axis::new(bbox.y_min, bbox.y_max, y0 + ph, y0))
}

/// Circles for retained (observed) points, plus signs for simulated ones.
pub fn point_map(
    bbox: &BoundingBox,
    retained: &[(f64, f64)],
    simulated: &[(f64, f64)],
    keep_aspect: bool,
    title: &str,
) -> String {
    let (x, y) = map_axes(bbox, keep_aspect);
    let mut c = Canvas::new(title);
    c.axes(x, y, "x", "y");
    for (px, py) in simulated {
        let (u, v) = (x.map(*px), y.map(*py));
        let _ = writeln!(
            c.out,
            r##"<path d="M{} {}h6M{} {}v6" stroke="#d62728" stroke-width="1"/>"##,
            f(u - 3.0),
            f(v),
            f(u),
            f(v - 3.0)
        );
    }
    for (px, py) in retained {
        let _ = writeln!(
            c.out,
            r#"<circle cx="{}" cy="{}" r="3" fill="none" stroke="black"/>"#,
            f(x.map(*px)),
            f(y.map(*py))
        );
    }
    c.finish()
}

fn diverging(t: f64) -> String {
    // t in [-1, 1]: blue through white to red.
    let t = t.clamp(-1.0, 1.0);
    let (end, s) = if t < 0.0 { ((33.0, 102.0, 172.0), -t) } else { ((178.0, 24.0, 43.0), t) };
    let mix = |e: f64| (255.0 + (e - 255.0) * s).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

/// Pixel residuals on a diverging scale centered at zero, with event circles.
pub fn pixel_map(map: &PixelResidualMap, events: &[(f64, f64)], title: &str) -> String {
    let g = &map.grid;
    let bbox = BoundingBox { x_min: g.lon_min(), x_max: g.lon_max(), y_min: g.lat_min(), y_max: g.lat_max() };
    let (x, y) = map_axes(&bbox, true);
    let vmax = map
        .values
        .iter()
        .filter(|r| r.flag == ResidualFlag::Ok)
        .map(|r| r.value.abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut c = Canvas::new(title);
    for r in &map.values {
        let (x0, x1, y0, y1) = g.pixel_bounds(r.pixel);
        let fill = match r.flag {
            ResidualFlag::Ok => diverging(r.value / vmax),
            ResidualFlag::Skipped => "#bbbbbb".into(),
            ResidualFlag::PosInf => "#67001f".into(),
            ResidualFlag::NegInf => "#053061".into(),
        };
        let _ = writeln!(
            c.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            f(x.map(x0)),
            f(y.map(y1)),
            f(x.map(x1) - x.map(x0)),
            f(y.map(y0) - y.map(y1))
        );
    }
    c.axes(x, y, "longitude", "latitude");
    for (px, py) in events {
        let _ = writeln!(
            c.out,
            r#"<circle cx="{}" cy="{}" r="3" fill="none" stroke="black"/>"#,
            f(x.map(*px)),
            f(y.map(*py))
        );
    }
    let (bx, by, bw, bh) = (WIDTH - RIGHT - 200.0, TOP - 25.0, 200.0, 10.0);
    for k in 0..20 {
        let t = -1.0 + (k as f64 + 0.5) / 10.0;
        let _ = writeln!(
            c.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            f(bx + k as f64 * bw / 20.0),
            f(by),
            f(bw / 20.0),
            f(bh),
            diverging(t)
        );
    }
    let _ = writeln!(c.out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, f(bx - 4.0), f(by + 9.0), tick_label(-vmax));
    let _ = writeln!(c.out, r#"<text x="{}" y="{}">{}</text>"#, f(bx + bw + 4.0), f(by + 9.0), tick_label(vmax));
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        let labels: Vec<String> = ticks(0.0, 0.7, 8).into_iter().map(tick_label).collect();
        assert_eq!(labels, ["0", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7"]);
        assert_eq!(tick_label(-0.0), "0");
    }

    #[test]
    fn diverging_endpoints() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(-1.0), "#2166ac");
    }
}
