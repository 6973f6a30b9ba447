//! Piecewise-constant, time-integrated intensity over the active pixels of a
//! grid, in expected events per square degree over the field's window.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityField {
    grid: Grid,
    /// Unscaled per-pixel rate; inactive pixels hold 0 and are never read.
    base: Vec<f64>,
    window_fraction: f64,
}

impl IntensityField {
    /// Per-pixel rates indexed by pixel (length `grid.n_pixels()`); values at
    /// inactive pixels are ignored.
    pub fn from_rates(grid: Grid, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != grid.n_pixels() {
            return Err(Error::Schema(format!("{} rates for {} pixels", rates.len(), grid.n_pixels())));
        }
        let mut base = rates;
        for (p, v) in base.iter_mut().enumerate() {
            if !grid.is_active(p) {
                *v = 0.0;
            } else if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Validation(format!("pixel {p}: rate {v} is not a finite non-negative number")));
            }
        }
        Ok(Self { grid, base, window_fraction: 1.0 })
    }

    pub fn uniform(grid: Grid, rate: f64) -> Result<Self> {
        let n = grid.n_pixels();
        Self::from_rates(grid, vec![rate; n])
    }

    /// Sums the rates of every bin with `mag_lo >= mag_min` per pixel and
    /// divides by the pixel area.
    pub fn aggregate(forecast: &Forecast, mag_min: f64) -> Self {
        let grid = forecast.grid.clone();
        let mut base = vec![0.0; grid.n_pixels()];
        for b in forecast.bins.iter().filter(|b| b.mag_lo >= mag_min - 1e-9) {
            base[b.pixel_index] += b.rate;
        }
        let area = grid.pixel_area();
        if area > 0.0 {
            for v in &mut base {
                *v /= area;
            }
        }
        Self { grid, base, window_fraction: 1.0 }
    }

    /// Multiplies every rate by `fraction` (e.g. 44/60 for a partially elapsed
    /// window). Successive scalings compose exactly.
    pub fn scale_window(&self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("window fraction must lie in (0, 1], got {fraction}")));
        }
        Ok(Self { grid: self.grid.clone(), base: self.base.clone(), window_fraction: self.window_fraction * fraction })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn window_fraction(&self) -> f64 {
        self.window_fraction
    }

    /// Rate per square degree of an active pixel.
    pub fn value(&self, pixel: usize) -> Option<f64> {
        self.grid.is_active(pixel).then(|| self.base[pixel] * self.window_fraction)
    }

    pub(crate) fn value_unchecked(&self, pixel: usize) -> f64 {
        self.base[pixel] * self.window_fraction
    }

    /// Rate at a location; masked or out-of-bounds locations are an error, never 0.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        self.grid.active_pixel_of(x, y).map(|p| self.value_unchecked(p)).ok_or(Error::OutsideRegion { x, y })
    }

    /// Expected count in one pixel.
    pub fn pixel_integral(&self, pixel: usize) -> f64 {
        if self.grid.is_active(pixel) {
            self.value_unchecked(pixel) * self.grid.pixel_area()
        } else {
            0.0
        }
    }

    /// Expected count over a set of pixels, or the whole region when `None`.
    pub fn integrate(&self, pixels: Option<&[usize]>) -> f64 {
        match pixels {
            Some(ps) => ps.iter().map(|p| self.pixel_integral(*p)).sum(),
            None => self.total(),
        }
    }

    pub fn total(&self) -> f64 {
        self.grid.active_pixels().map(|p| self.pixel_integral(p)).sum()
    }

    /// `(inf, sup)` of the rate over active pixels.
    pub fn extremes(&self) -> Result<(f64, f64)> {
        let mut it = self.grid.active_pixels().map(|p| self.value_unchecked(p));
        let first = it.next().ok_or(Error::EmptyRegion)?;
        Ok(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Active pixels whose rate is exactly zero. They stay part of the region.
    pub fn zero_pixels(&self) -> Vec<usize> {
        self.grid.active_pixels().filter(|p| self.base[*p] == 0.0).collect()
    }

    pub fn is_zero(&self, pixel: usize) -> bool {
        self.base[pixel] == 0.0
    }

    /// CSV dump: `pixel_index,lon_center,lat_center,rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pixel_index,lon_center,lat_center,rate\n");
        for p in self.grid.active_pixels() {
            let (x, y) = self.grid.pixel_center(p);
            let _ = writeln!(out, "{p},{x},{y},{}", self.value_unchecked(p));
        }
        out
    }
}
