//! Seeded simulation of Poisson point patterns from intensity fields.
//!
//! Every simulator draws all per-pixel counts first (pixels in index order)
//! and only then the locations, so [`simulate_counts`] reproduces the counts
//! of [`simulate_catalog`] for the same stream without placing points.

use chrono::{Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Event};
use crate::error::{Error, Result};
use crate::forecast::TimeWindow;
use crate::grid::Grid;
use crate::intensity::IntensityField;
use crate::region::Region;
use crate::rng::{SeededStream, StreamRng};

pub const DEFAULT_SIMULATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A simulated event: location, time as a fraction of the window, and the
/// pixel it was drawn in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub point: Point,
    pub t: f64,
    pub pixel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplementMode {
    /// Rate `level - λ`; requires `level >= sup λ`.
    Superpose,
    /// Rate `max(0, level - λ)`.
    Superthin,
}

pub(crate) fn point_in_pixel(grid: &Grid, pixel: usize, rng: &mut StreamRng) -> Point {
    let (x0, x1, y0, y1) = grid.pixel_bounds(pixel);
    let mut x = x0 + rng.uniform() * (x1 - x0);
    let mut y = y0 + rng.uniform() * (y1 - y0);
    // Rounding can land exactly on the upper edge, which belongs to the next pixel.
    if x >= x1 && grid.col_row(pixel).0 + 1 < grid.n_x() {
        x = x0;
    }
    if y >= y1 && grid.col_row(pixel).1 + 1 < grid.n_y() {
        y = y0;
    }
    Point::new(x, y)
}

fn counts_for(grid: &Grid, means: impl Fn(usize) -> f64, rng: &mut StreamRng) -> Vec<(usize, u64)> {
    grid.active_pixels().map(|p| (p, rng.poisson(means(p)))).collect()
}

/// Per-pixel counts (indexed by pixel; inactive pixels are 0) of the
/// realization [`simulate_catalog`] would produce for the same stream.
pub fn simulate_counts(field: &IntensityField, stream: SeededStream) -> Vec<u64> {
    let mut rng = stream.rng();
    let mut counts = vec![0; field.grid().n_pixels()];
    for (p, n) in counts_for(field.grid(), |p| field.pixel_integral(p), &mut rng) {
        counts[p] = n;
    }
    counts
}

/// One realization of the Poisson process with the field's intensity:
/// Poisson counts per pixel, uniform locations within pixels, uniform times.
pub fn simulate_catalog(field: &IntensityField, stream: SeededStream) -> Vec<SimEvent> {
    let grid = field.grid();
    let mut rng = stream.rng();
    let counts = counts_for(grid, |p| field.pixel_integral(p), &mut rng);
    let mut out = Vec::with_capacity(counts.iter().map(|c| c.1 as usize).sum());
    for (p, n) in counts {
        for _ in 0..n {
            let point = point_in_pixel(grid, p, &mut rng);
            let t = rng.uniform();
            out.push(SimEvent { point, t, pixel: p });
        }
    }
    out
}

/// Converts simulated events into a catalog over `window`, sorted by time.
/// Depth is set to 0 and every magnitude to `magnitude`; neither is simulated.
pub fn to_catalog(events: &[SimEvent], window: &TimeWindow, magnitude: f64) -> Catalog {
    let span_ms = (window.end - window.start).num_milliseconds() as f64;
    let events = events
        .iter()
        .map(|e| Event {
            time: window.start + Duration::milliseconds((e.t * span_ms).floor() as i64),
            lon: e.point.x,
            lat: e.point.y,
            depth: 0.0,
            magnitude,
        })
        .collect();
    Catalog::new(events)
}

/// Default window used when a forecast carries none: one nominal year from
/// the Unix epoch.
pub fn nominal_window() -> TimeWindow {
    let start = chrono::DateTime::<Utc>::UNIX_EPOCH;
    TimeWindow { start, end: start + Duration::days(365) }
}

/// Points of the complementary Cox process used by superposition and
/// super-thinning: per pixel a Poisson count with mean
/// `(level - λ)·area` (or `max(0, level - λ)·area`) placed uniformly.
pub fn simulate_cox_complement(
    field: &IntensityField,
    level: f64,
    mode: ComplementMode,
    stream: SeededStream,
) -> Result<Vec<(Point, usize)>> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(Error::InvalidArgument(format!("level must be finite and non-negative, got {level}")));
    }
    let grid = field.grid();
    if mode == ComplementMode::Superpose {
        let (_, sup) = field.extremes()?;
        if level < sup {
            return Err(Error::InvalidArgument(format!("superposition level {level} is below the supremum {sup}")));
        }
    }
    let area = grid.pixel_area();
    let mut rng = stream.rng();
    let counts = counts_for(grid, |p| (level - field.value_unchecked(p)).max(0.0) * area, &mut rng);
    let mut out = Vec::new();
    for (p, n) in counts {
        for _ in 0..n {
            out.push((point_in_pixel(grid, p, &mut rng), p));
        }
    }
    Ok(out)
}

/// Homogeneous Poisson process of the given rate on an arbitrary region, by
/// rejection sampling inside its bounding box.
pub fn simulate_homogeneous<R: Region + ?Sized>(region: &R, rate: f64, stream: SeededStream) -> Result<Vec<Point>> {
    let area = region.area();
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::InvalidArgument(format!("region area must be positive and finite, got {area}")));
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be finite and non-negative, got {rate}")));
    }
    let mut rng = stream.rng();
    let n = rng.poisson(rate * area) as usize;
    let bb = region.bounding_box();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = bb.x_min + rng.uniform() * (bb.x_max - bb.x_min);
        let y = bb.y_min + rng.uniform() * (bb.y_max - bb.y_min);
        if region.contains(x, y) {
            out.push(Point::new(x, y));
        }
    }
    Ok(out)
}
