//! Gridded rate forecasts in the 10-column row format:
//!
//! ```text
//! lon_min lon_max lat_min lat_max depth_min depth_max mag_lo mag_hi rate mask_flag
//! ```
//!
//! Lines starting with `#` are comments. A comment of the form
//! `# window: <start> <end>` (RFC 3339 timestamps) sets the forecast window.

use std::collections::HashMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBin {
    pub pixel_index: usize,
    pub mag_lo: f64,
    pub mag_hi: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Expected number of events over the forecast window.
    pub rate: f64,
}

impl ForecastBin {
    fn key(&self) -> (usize, i64, i64) {
        (self.pixel_index, mag_key(self.mag_lo), mag_key(self.mag_hi))
    }
}

fn mag_key(m: f64) -> i64 {
    (m * 1e6).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::Validation(format!("window start {start} is not before end {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub grid: Grid,
    /// Bins of active pixels.
    pub bins: Vec<ForecastBin>,
    /// Rows carried with mask flag 0; kept so the file can be written back out.
    pub masked_bins: Vec<ForecastBin>,
    pub window: Option<TimeWindow>,
    /// Free-form provenance notes (e.g. magnitude extrapolation settings).
    pub notes: Vec<String>,
}

struct Row {
    line: usize,
    lon: (f64, f64),
    lat: (f64, f64),
    depth: (f64, f64),
    mag: (f64, f64),
    rate: f64,
    active: bool,
}

pub(crate) fn parse_number(token: &str) -> Option<f64> {
    let t = token.trim();
    let owned;
    let t = if t.contains('\u{2212}') {
        owned = t.replace('\u{2212}', "-");
        owned.as_str()
    } else {
        t
    };
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_row(line: usize, text: &str) -> Result<Row> {
    let cols: Vec<&str> = text.split_whitespace().collect();
    if cols.len() != 10 {
        return Err(Error::Parse { line, message: format!("expected 10 columns, found {}", cols.len()) });
    }
    let mut v = [0.0; 10];
    for (i, c) in cols.iter().enumerate() {
        v[i] = parse_number(c)
            .ok_or_else(|| Error::Parse { line, message: format!("column {}: not a number: {c:?}", i + 1) })?;
    }
    if v[1] <= v[0] || v[3] <= v[2] {
        return Err(Error::Parse { line, message: "pixel bounds are empty".into() });
    }
    if v[7] <= v[6] {
        return Err(Error::Validation(format!("line {line}: magnitude bin [{}, {}) is empty", v[6], v[7])));
    }
    if v[8] < 0.0 {
        return Err(Error::Validation(format!("line {line}: negative rate {}", v[8])));
    }
    let active = match cols[9] {
        "1" => true,
        "0" => false,
        other => {
            return Err(Error::Parse { line, message: format!("mask flag must be 0 or 1, got {other:?}") })
        }
    };
    Ok(Row {
        line,
        lon: (v[0], v[1]),
        lat: (v[2], v[3]),
        depth: (v[4], v[5]),
        mag: (v[6], v[7]),
        rate: v[8],
        active,
    })
}

fn parse_window(line: usize, rest: &str) -> Result<TimeWindow> {
    let parts: Vec<&str> = rest.split_whitespace().collect();
    let parse = |s: &str| {
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| Error::Parse { line, message: format!("bad window timestamp {s:?}: {e}") })
    };
    match parts.as_slice() {
        [a, b] => TimeWindow::new(parse(a)?, parse(b)?),
        _ => Err(Error::Parse { line, message: "window directive needs a start and an end".into() }),
    }
}

/// Parses forecast text. The grid is inferred from the union of rows.
pub fn parse_forecast(text: &str) -> Result<Forecast> {
    let mut rows = Vec::new();
    let mut window = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("window:") {
                window = Some(parse_window(line, rest)?);
            }
            continue;
        }
        rows.push(parse_row(line, t)?);
    }
    if rows.is_empty() {
        return Ok(Forecast { grid: Grid::empty(), bins: Vec::new(), masked_bins: Vec::new(), window, notes: Vec::new() });
    }

    let dx = rows[0].lon.1 - rows[0].lon.0;
    let dy = rows[0].lat.1 - rows[0].lat.0;
    let tol = 1e-6;
    for r in &rows {
        if ((r.lon.1 - r.lon.0) - dx).abs() > tol || ((r.lat.1 - r.lat.0) - dy).abs() > tol {
            return Err(Error::Schema(format!(
                "line {}: pixel size {}x{} differs from {dx}x{dy}",
                r.line,
                r.lon.1 - r.lon.0,
                r.lat.1 - r.lat.0
            )));
        }
    }
    let lon_min = rows.iter().map(|r| r.lon.0).fold(f64::INFINITY, f64::min);
    let lon_max = rows.iter().map(|r| r.lon.1).fold(f64::NEG_INFINITY, f64::max);
    let lat_min = rows.iter().map(|r| r.lat.0).fold(f64::INFINITY, f64::min);
    let lat_max = rows.iter().map(|r| r.lat.1).fold(f64::NEG_INFINITY, f64::max);
    let mut grid = Grid::new(lon_min, lon_max, lat_min, lat_max, dx, dy)?;

    let mut pixel_rows: Vec<(usize, Row)> = Vec::with_capacity(rows.len());
    for r in rows {
        let fx = (r.lon.0 - lon_min) / dx;
        let fy = (r.lat.0 - lat_min) / dy;
        let (cx, cy) = (fx.round(), fy.round());
        if (fx - cx).abs() > tol * 10.0 || (fy - cy).abs() > tol * 10.0 {
            return Err(Error::Schema(format!("line {}: pixel is not aligned with the grid", r.line)));
        }
        pixel_rows.push((grid.index(cx as usize, cy as usize), r));
    }

    let mut has_rows = vec![false; grid.n_pixels()];
    let mut masked = vec![false; grid.n_pixels()];
    for (p, r) in &pixel_rows {
        has_rows[*p] = true;
        if !r.active {
            masked[*p] = true;
        }
    }
    let mask: Vec<bool> = has_rows.iter().zip(&masked).map(|(h, m)| *h && !*m).collect();
    grid = grid.with_mask(mask)?;

    let mut seen: HashMap<(usize, i64, i64), usize> = HashMap::new();
    let mut bins = Vec::new();
    let mut masked_bins = Vec::new();
    for (p, r) in pixel_rows {
        let bin = ForecastBin {
            pixel_index: p,
            mag_lo: r.mag.0,
            mag_hi: r.mag.1,
            depth_min: r.depth.0,
            depth_max: r.depth.1,
            rate: r.rate,
        };
        if let Some(first) = seen.insert(bin.key(), r.line) {
            return Err(Error::Validation(format!(
                "line {}: duplicate (pixel, magnitude bin) key, first seen on line {first}",
                r.line
            )));
        }
        if grid.is_active(p) {
            bins.push(bin);
        } else {
            masked_bins.push(bin);
        }
    }
    Ok(Forecast { grid, bins, masked_bins, window, notes: Vec::new() })
}

impl Forecast {
    /// Smallest lower magnitude edge over all bins.
    pub fn min_magnitude(&self) -> Option<f64> {
        self.bins.iter().map(|b| b.mag_lo).min_by(f64::total_cmp)
    }

    pub fn max_magnitude(&self) -> Option<f64> {
        self.bins.iter().map(|b| b.mag_hi).max_by(f64::total_cmp)
    }

    pub fn total_rate(&self) -> f64 {
        self.bins.iter().map(|b| b.rate).sum()
    }

    /// Writes the forecast back in the 10-column format. Rates use the shortest
    /// representation that parses back to the same `f64`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.window {
            let _ = writeln!(
                out,
                "# window: {} {}",
                w.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                w.end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            );
        }
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        let mut all: Vec<(&ForecastBin, bool)> =
            self.bins.iter().map(|b| (b, true)).chain(self.masked_bins.iter().map(|b| (b, false))).collect();
        all.sort_by(|a, b| {
            a.0.pixel_index.cmp(&b.0.pixel_index).then(a.0.mag_lo.total_cmp(&b.0.mag_lo))
        });
        for (b, active) in all {
            let (x0, x1, y0, y1) = self.grid.pixel_bounds(b.pixel_index);
            let _ = writeln!(
                out,
                "{x0} {x1} {y0} {y1} {} {} {} {} {} {}",
                b.depth_min,
                b.depth_max,
                b.mag_lo,
                b.mag_hi,
                b.rate,
                u8::from(active)
            );
        }
        out
    }

    /// Sums several forecasts on the same grid bin by bin (e.g. daily files
    /// covering consecutive days). Masks are intersected.
    pub fn merge_sum(forecasts: &[Forecast]) -> Result<Forecast> {
        let (first, rest) = forecasts
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("no forecasts to merge".into()))?;
        let mut grid = first.grid.clone();
        for f in rest {
            if !grid.same_geometry(&f.grid) {
                return Err(Error::GridMismatch("forecasts to merge have different grids".into()));
            }
            for p in 0..grid.n_pixels() {
                if !f.grid.is_active(p) {
                    grid.set_active(p, false);
                }
            }
        }
        let mut index: HashMap<(usize, i64, i64), usize> = HashMap::new();
        let mut bins: Vec<ForecastBin> = Vec::new();
        for f in forecasts {
            for b in f.bins.iter().filter(|b| grid.is_active(b.pixel_index)) {
                match index.get(&b.key()) {
                    Some(&i) => bins[i].rate += b.rate,
                    None => {
                        index.insert(b.key(), bins.len());
                        bins.push(b.clone());
                    }
                }
            }
        }
        let window = match (first.window, forecasts.last().and_then(|f| f.window)) {
            (Some(a), Some(b)) => Some(TimeWindow::new(a.start.min(b.start), a.end.max(b.end))?),
            _ => None,
        };
        Ok(Forecast { grid, bins, masked_bins: Vec::new(), window, notes: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_row() {
        let f = parse_forecast("\u{2212}118.0 \u{2212}117.9 34.0 34.1 0 30 4.95 5.05 0.02 1\n").unwrap();
        assert_eq!(f.bins.len(), 1);
        assert_eq!(f.bins[0].rate, 0.02);
        assert!((f.grid.dx() - 0.1).abs() < 1e-12);
        assert!((f.grid.dy() - 0.1).abs() < 1e-12);
        assert_eq!(f.grid.active_count(), 1);
    }

    #[test]
    fn empty_file() {
        let f = parse_forecast("# nothing here\n\n").unwrap();
        assert!(f.bins.is_empty());
        assert_eq!(f.grid.active_count(), 0);
    }

    #[test]
    fn duplicate_key() {
        let text = "0 0.1 0 0.1 0 30 4.95 5.05 0.02 1\n0 0.1 0 0.1 0 30 4.95 5.05 0.03 1\n";
        assert!(matches!(parse_forecast(text), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "# header\n0 0.1 0 0.1 0 30 4.95 5.05 0.02 1\n0 0.1 0 0.1 0 30 4.95 abc 0.02 1\n";
        match parse_forecast(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_pixel_size() {
        let text = "0 0.1 0 0.1 0 30 4.95 5.05 0.02 1\n0.1 0.3 0 0.1 0 30 4.95 5.05 0.02 1\n";
        assert!(matches!(parse_forecast(text), Err(Error::Schema(_))));
    }

    #[test]
    fn negative_rate() {
        assert!(matches!(parse_forecast("0 0.1 0 0.1 0 30 4.95 5.05 -0.02 1\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn mask_flag_deactivates_pixel() {
        let text = "0 0.1 0 0.1 0 30 4.95 5.05 0.02 1\n0.1 0.2 0 0.1 0 30 4.95 5.05 0.5 0\n\
                    0.2 0.3 0 0.1 0 30 4.95 5.05 0.1 1\n";
        let f = parse_forecast(text).unwrap();
        assert_eq!(f.grid.n_x(), 3);
        assert_eq!(f.grid.active_count(), 2);
        assert!(!f.grid.is_active(1));
        assert_eq!(f.bins.len(), 2);
        assert_eq!(f.masked_bins.len(), 1);
    }

    #[test]
    fn holes_are_inactive() {
        let text = "0 0.1 0 0.1 0 30 4.95 5.05 0.02 1\n0.2 0.3 0 0.1 0 30 4.95 5.05 0.1 1\n";
        let f = parse_forecast(text).unwrap();
        assert_eq!(f.grid.n_x(), 3);
        assert!(!f.grid.is_active(1));
    }

    #[test]
    fn window_directive() {
        let text = "# window: 2006-01-01T00:00:00Z 2011-01-01T00:00:00Z\n0 0.1 0 0.1 0 30 4.95 5.05 0.02 1\n";
        let f = parse_forecast(text).unwrap();
        let w = f.window.unwrap();
        assert_eq!(w.start.to_rfc3339(), "2006-01-01T00:00:00+00:00");
        let back = parse_forecast(&f.serialize()).unwrap();
        assert_eq!(back.window, f.window);
    }

    #[test]
    fn merge_sums_rates() {
        let a = parse_forecast("0 0.1 0 0.1 0 30 4.95 5.05 0.25 1\n").unwrap();
        let b = parse_forecast("0 0.1 0 0.1 0 30 4.95 5.05 0.5 1\n").unwrap();
        let m = Forecast::merge_sum(&[a, b]).unwrap();
        assert_eq!(m.bins.len(), 1);
        assert_eq!(m.bins[0].rate, 0.75);
    }

    proptest! {
        #[test]
        fn serialize_round_trip(rates in proptest::collection::vec(0.0f64..10.0, 12),
                                mask in proptest::collection::vec(any::<bool>(), 6)) {
            let mut text = String::new();
            for (i, r) in rates.iter().enumerate() {
                let pixel = i / 2;
                let (c, row) = (pixel % 3, pixel / 3);
                let x0 = -120.0 + c as f64 * 0.1;
                let y0 = 32.0 + row as f64 * 0.1;
                let m0 = 4.95 + (i % 2) as f64 * 0.1;
                text.push_str(&format!(
                    "{} {} {} {} 0 30 {} {} {} {}\n",
                    x0, x0 + 0.1, y0, y0 + 0.1, m0, m0 + 0.1, r, u8::from(mask[pixel])
                ));
            }
            let f = parse_forecast(&text).unwrap();
            let g = parse_forecast(&f.serialize()).unwrap();
            prop_assert_eq!(f.bins.len(), g.bins.len());
            prop_assert_eq!(f.masked_bins.len(), g.masked_bins.len());
            let mut all_f: Vec<_> = f.bins.iter().chain(&f.masked_bins).map(|b| (b.pixel_index, b.rate)).collect();
            let mut all_g: Vec<_> = g.bins.iter().chain(&g.masked_bins).map(|b| (b.pixel_index, b.rate)).collect();
            all_f.sort_by(|a, b| a.partial_cmp(b).unwrap());
            all_g.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in all_f.iter().zip(&all_g) {
                prop_assert_eq!(a.0, b.0);
                prop_assert!((a.1 - b.1).abs() <= 1e-12 * a.1.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
}
