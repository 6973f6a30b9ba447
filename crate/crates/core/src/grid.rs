//! Rectangular lon/lat pixelization with an active-pixel mask.
//!
//! Pixels are indexed row-major: `index = row * n_x + col`, with row 0 at
//! `lat_min` and column 0 at `lon_min`. Membership is half-open `[lo, hi)` on
//! both axes, except that the last column and row also own their upper edge,
//! so every point of the bounding rectangle belongs to exactly one pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lon_min: f64,
    lon_max: f64,
    lat_min: f64,
    lat_max: f64,
    dx: f64,
    dy: f64,
    n_x: usize,
    n_y: usize,
    active: Vec<bool>,
}

impl Grid {
    /// Builds a grid with every pixel active.
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64, dx: f64, dy: f64) -> Result<Self> {
        let finite = [lon_min, lon_max, lat_min, lat_max, dx, dy].iter().all(|v| v.is_finite());
        if !finite || dx <= 0.0 || dy <= 0.0 {
            return Err(Error::Schema(format!("pixel size must be positive and finite, got {dx} x {dy}")));
        }
        if lon_max <= lon_min || lat_max <= lat_min {
            return Err(Error::Schema("grid bounds are empty".into()));
        }
        let n_x = ((lon_max - lon_min) / dx).round() as usize;
        let n_y = ((lat_max - lat_min) / dy).round() as usize;
        if n_x == 0 || n_y == 0 {
            return Err(Error::Schema("grid must have at least one pixel on each axis".into()));
        }
        let tol = 1e-6;
        if ((lon_max - lon_min) - n_x as f64 * dx).abs() > tol * dx
            || ((lat_max - lat_min) - n_y as f64 * dy).abs() > tol * dy
        {
            return Err(Error::Schema("grid extent is not a whole number of pixels".into()));
        }
        Ok(Self { lon_min, lon_max, lat_min, lat_max, dx, dy, n_x, n_y, active: vec![true; n_x * n_y] })
    }

    /// The grid with no pixels at all; used for empty forecasts.
    pub fn empty() -> Self {
        Self {
            lon_min: 0.0,
            lon_max: 0.0,
            lat_min: 0.0,
            lat_max: 0.0,
            dx: 0.0,
            dy: 0.0,
            n_x: 0,
            n_y: 0,
            active: Vec::new(),
        }
    }

    pub fn with_mask(mut self, active: Vec<bool>) -> Result<Self> {
        if active.len() != self.n_pixels() {
            return Err(Error::Schema(format!(
                "mask has {} entries for {} pixels",
                active.len(),
                self.n_pixels()
            )));
        }
        self.active = active;
        Ok(self)
    }

    pub fn set_active(&mut self, pixel: usize, on: bool) {
        self.active[pixel] = on;
    }

    pub fn lon_min(&self) -> f64 {
        self.lon_min
    }
    pub fn lon_max(&self) -> f64 {
        self.lon_max
    }
    pub fn lat_min(&self) -> f64 {
        self.lat_min
    }
    pub fn lat_max(&self) -> f64 {
        self.lat_max
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_pixels(&self) -> usize {
        self.n_x * self.n_y
    }
    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, pixel: usize) -> bool {
        self.active.get(pixel).copied().unwrap_or(false)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }

    pub fn is_fully_active(&self) -> bool {
        self.n_pixels() > 0 && self.active.iter().all(|a| *a)
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Area of the observation region: active pixels times pixel area.
    pub fn area(&self) -> f64 {
        self.active_count() as f64 * self.pixel_area()
    }

    /// Western edge of column `i`; `x_edge(n_x)` is `lon_max`.
    pub fn x_edge(&self, i: usize) -> f64 {
        if i >= self.n_x {
            self.lon_max
        } else {
            self.lon_min + i as f64 * self.dx
        }
    }

    /// Southern edge of row `j`; `y_edge(n_y)` is `lat_max`.
    pub fn y_edge(&self, j: usize) -> f64 {
        if j >= self.n_y {
            self.lat_max
        } else {
            self.lat_min + j as f64 * self.dy
        }
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.n_x + col
    }

    pub fn col_row(&self, pixel: usize) -> (usize, usize) {
        (pixel % self.n_x, pixel / self.n_x)
    }

    /// `(x0, x1, y0, y1)` edges of a pixel.
    pub fn pixel_bounds(&self, pixel: usize) -> (f64, f64, f64, f64) {
        let (c, r) = self.col_row(pixel);
        (self.x_edge(c), self.x_edge(c + 1), self.y_edge(r), self.y_edge(r + 1))
    }

    pub fn pixel_center(&self, pixel: usize) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.pixel_bounds(pixel);
        (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    pub fn column_of(&self, x: f64) -> Option<usize> {
        locate(x, self.lon_min, self.lon_max, self.dx, self.n_x, |i| self.x_edge(i))
    }

    pub fn row_of(&self, y: f64) -> Option<usize> {
        locate(y, self.lat_min, self.lat_max, self.dy, self.n_y, |j| self.y_edge(j))
    }

    /// Pixel containing `(x, y)` regardless of the mask.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<usize> {
        Some(self.index(self.column_of(x)?, self.row_of(y)?))
    }

    /// Pixel containing `(x, y)` if that pixel is active.
    pub fn active_pixel_of(&self, x: f64, y: f64) -> Option<usize> {
        self.pixel_of(x, y).filter(|p| self.active[*p])
    }

    /// True when both grids share origin, pixel size and shape (masks may differ).
    pub fn same_geometry(&self, other: &Grid) -> bool {
        let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-9 * scale.max(1.0);
        self.n_x == other.n_x
            && self.n_y == other.n_y
            && close(self.lon_min, other.lon_min, self.lon_min.abs())
            && close(self.lat_min, other.lat_min, self.lat_min.abs())
            && close(self.dx, other.dx, self.dx)
            && close(self.dy, other.dy, self.dy)
    }
}

fn locate(v: f64, lo: f64, hi: f64, step: f64, n: usize, edge: impl Fn(usize) -> f64) -> Option<usize> {
    if n == 0 || !v.is_finite() || v < lo || v > hi {
        return None;
    }
    let mut i = (((v - lo) / step).floor().max(0.0) as usize).min(n - 1);
    while i > 0 && v < edge(i) {
        i -= 1;
    }
    while i + 1 < n && v >= edge(i + 1) {
        i += 1;
    }
    Some(i)
}
