//! Tapered Gutenberg–Richter magnitude distribution and downward extrapolation
//! of forecast rates to a lower magnitude threshold.
//!
//! The law is expressed in seismic moment: the fraction of events with moment
//! at least `M` (above a threshold `M_t`) is
//! `(M_t / M)^beta * exp((M_t - M) / M_c)`, with `M = 10^(1.5 m + 9.05)`,
//! `beta = 2 b / 3` and `M_c` the moment of the corner magnitude.

use crate::error::{Error, Result};
use crate::forecast::{Forecast, ForecastBin};

pub fn moment(magnitude: f64) -> f64 {
    10f64.powf(1.5 * magnitude + 9.05)
}

/// Tapered GR parameters. `corner_mag = f64::INFINITY` gives the pure GR law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperedGr {
    pub b_value: f64,
    pub corner_mag: f64,
}

impl TaperedGr {
    pub fn new(b_value: f64, corner_mag: f64) -> Result<Self> {
        if !(b_value > 0.0 && b_value.is_finite()) {
            return Err(Error::InvalidArgument(format!("b-value must be positive, got {b_value}")));
        }
        if corner_mag.is_nan() {
            return Err(Error::InvalidArgument("corner magnitude is NaN".into()));
        }
        Ok(Self { b_value, corner_mag })
    }

    pub fn beta(&self) -> f64 {
        2.0 * self.b_value / 3.0
    }

    /// Rate of events with magnitude >= `m` relative to the rate >= `m_ref`.
    pub fn survival_ratio(&self, m: f64, m_ref: f64) -> f64 {
        // (M_ref / M)^beta = 10^(1.5 beta (m_ref - m)) = 10^(b (m_ref - m))
        let power = 10f64.powf(self.b_value * (m_ref - m));
        let taper = if self.corner_mag.is_finite() {
            ((moment(m_ref) - moment(m)) / moment(self.corner_mag)).exp()
        } else {
            1.0
        };
        power * taper
    }
}

/// A lon/lat box where a different b-value applies (pixel centers strictly inside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialRegion {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub b_value: f64,
}

impl SpecialRegion {
    fn contains(&self, x: f64, y: f64) -> bool {
        x > self.lon_min && x < self.lon_max && y > self.lat_min && y < self.lat_max
    }
}

/// Prepends magnitude bins from `new_mag_min` up to the forecast's current
/// lower bound. Each pixel's new rates follow the tapered law normalized so
/// that its existing rates (all above the old bound) are unchanged. New bins
/// use the width of the lowest existing bin; the last one is clipped at the
/// old bound.
///
/// If `new_mag_min` is not below the current bound the forecast is returned
/// unchanged and a warning is logged.
pub fn gr_extrapolate(
    forecast: &Forecast,
    new_mag_min: f64,
    law: TaperedGr,
    special_regions: &[SpecialRegion],
) -> Result<Forecast> {
    for r in special_regions {
        TaperedGr::new(r.b_value, law.corner_mag)?;
    }
    let Some(old_min) = forecast.min_magnitude() else {
        log::warn!("forecast has no bins; magnitude extrapolation skipped");
        return Ok(forecast.clone());
    };
    if new_mag_min >= old_min - 1e-9 {
        log::warn!("target magnitude {new_mag_min} is not below the forecast bound {old_min}; nothing to do");
        return Ok(forecast.clone());
    }
    let width = forecast
        .bins
        .iter()
        .filter(|b| (b.mag_lo - old_min).abs() < 1e-9)
        .map(|b| b.mag_hi - b.mag_lo)
        .fold(f64::INFINITY, f64::min);

    let mut edges = Vec::new();
    let mut k = 0usize;
    loop {
        let lo = new_mag_min + k as f64 * width;
        if lo >= old_min - 1e-9 {
            break;
        }
        edges.push(lo);
        k += 1;
    }
    edges.push(old_min);

    let n_pixels = forecast.grid.n_pixels();
    let mut totals = vec![0.0; n_pixels];
    let mut depth = vec![None; n_pixels];
    for b in &forecast.bins {
        totals[b.pixel_index] += b.rate;
        depth[b.pixel_index].get_or_insert((b.depth_min, b.depth_max));
    }

    let mut bins = Vec::with_capacity(forecast.bins.len() + n_pixels * (edges.len() - 1));
    for p in forecast.grid.active_pixels() {
        let Some((d0, d1)) = depth[p] else { continue };
        let (cx, cy) = forecast.grid.pixel_center(p);
        let b_value = special_regions.iter().find(|r| r.contains(cx, cy)).map_or(law.b_value, |r| r.b_value);
        let pixel_law = TaperedGr { b_value, corner_mag: law.corner_mag };
        for w in edges.windows(2) {
            let frac = pixel_law.survival_ratio(w[0], old_min) - pixel_law.survival_ratio(w[1], old_min);
            bins.push(ForecastBin {
                pixel_index: p,
                mag_lo: w[0],
                mag_hi: w[1],
                depth_min: d0,
                depth_max: d1,
                rate: totals[p] * frac,
            });
        }
    }
    bins.extend(forecast.bins.iter().cloned());

    let mut out = forecast.clone();
    out.bins = bins;
    out.notes.push(format!(
        "magnitude extrapolation: tapered Gutenberg-Richter in moment space, M = 10^(1.5m + 9.05), \
         beta = 2b/3, b = {}, corner = {}, from {} down to {}{}",
        law.b_value,
        law.corner_mag,
        old_min,
        new_mag_min,
        if special_regions.is_empty() {
            String::new()
        } else {
            format!(", {} special region(s) with the same taper and substituted b", special_regions.len())
        }
    ));
    Ok(out)
}
