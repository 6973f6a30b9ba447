//! Observation windows for second-order statistics and homogeneous
//! simulation: the active-pixel union of a [`Grid`] and the per-band interval
//! regions produced by rescaling.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Number of points used when the circle fraction is estimated by sampling.
pub const ARC_SAMPLES: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

pub trait Region: Sync {
    fn area(&self) -> f64;

    fn contains(&self, x: f64, y: f64) -> bool;

    fn bounding_box(&self) -> BoundingBox;

    /// Fraction of the circumference of the circle of radius `r` about
    /// `(cx, cy)` that lies inside the region. Used for isotropic edge
    /// correction; the default samples [`ARC_SAMPLES`] points on the circle.
    fn circle_fraction(&self, cx: f64, cy: f64, r: f64) -> f64 {
        arc_sampled_fraction(self, cx, cy, r)
    }
}

/// Arc-sampled circumference fraction, floored at one sample so that the
/// inverse weight stays finite for circles that pass through a region point.
pub fn arc_sampled_fraction<R: Region + ?Sized>(region: &R, cx: f64, cy: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    let inside = (0..ARC_SAMPLES)
        .filter(|k| {
            let theta = 2.0 * PI * (*k as f64 + 0.5) / ARC_SAMPLES as f64;
            region.contains(cx + r * theta.cos(), cy + r * theta.sin())
        })
        .count();
    inside.max(1) as f64 / ARC_SAMPLES as f64
}

/// Exact fraction of a circle's circumference inside an axis-aligned rectangle.
pub fn rect_circle_fraction(bbox: &BoundingBox, cx: f64, cy: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    let mut angles = vec![0.0, 2.0 * PI];
    for (edge, vertical) in [(bbox.x_min, true), (bbox.x_max, true), (bbox.y_min, false), (bbox.y_max, false)] {
        let d = if vertical { edge - cx } else { edge - cy };
        if d.abs() < r {
            let a = (d / r).acos();
            // vertical line x = cx + d: angles ±acos(d/r); horizontal y = cy + d: pi/2 ∓ ...
            let pair = if vertical { [a, -a] } else { [PI / 2.0 - a, PI / 2.0 + a] };
            for t in pair {
                angles.push(t.rem_euclid(2.0 * PI));
            }
        }
    }
    angles.sort_by(f64::total_cmp);
    let mut inside = 0.0;
    for w in angles.windows(2) {
        let span = w[1] - w[0];
        if span <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let (x, y) = (cx + r * mid.cos(), cy + r * mid.sin());
        if x >= bbox.x_min && x <= bbox.x_max && y >= bbox.y_min && y <= bbox.y_max {
            inside += span;
        }
    }
    inside / (2.0 * PI)
}

impl Region for Grid {
    fn area(&self) -> f64 {
        Grid::area(self)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.active_pixel_of(x, y).is_some()
    }

    fn bounding_box(&self) -> BoundingBox {
        BoundingBox { x_min: self.lon_min(), x_max: self.lon_max(), y_min: self.lat_min(), y_max: self.lat_max() }
    }

    fn circle_fraction(&self, cx: f64, cy: f64, r: f64) -> f64 {
        if self.is_fully_active() {
            rect_circle_fraction(&self.bounding_box(), cx, cy, r).max(1.0 / ARC_SAMPLES as f64)
        } else {
            arc_sampled_fraction(self, cx, cy, r)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleAxis {
    /// Stretch x (longitude) within each latitude band.
    Horizontal,
    /// Stretch y (latitude) within each longitude band.
    Vertical,
}

/// One band of a rescaled region: for a horizontal rescale the band spans
/// `lo <= y < hi` and admits `0 <= x' <= extent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub extent: f64,
}

/// The transformed window produced by rescaling: a stack of bands, each
/// `[0, T]` long in the rescaled coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledRegion {
    pub axis: RescaleAxis,
    pub bands: Vec<Band>,
}

impl RescaledRegion {
    fn band_of(&self, v: f64) -> Option<&Band> {
        let last = self.bands.last()?;
        if v == last.hi {
            return Some(last);
        }
        let i = self.bands.partition_point(|b| b.hi <= v);
        self.bands.get(i).filter(|b| v >= b.lo && v < b.hi)
    }

    /// Rows as `(lo, hi, extent)`, e.g. for CSV output.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let (lo, hi) = match self.axis {
            RescaleAxis::Horizontal => ("y_lo", "y_hi"),
            RescaleAxis::Vertical => ("x_lo", "x_hi"),
        };
        let mut out = format!("{lo},{hi},t_of_{}\n", if lo == "y_lo" { "y" } else { "x" });
        for b in &self.bands {
            let _ = writeln!(out, "{},{},{}", b.lo, b.hi, b.extent);
        }
        out
    }
}

impl Region for RescaledRegion {
    fn area(&self) -> f64 {
        self.bands.iter().map(|b| b.extent * (b.hi - b.lo)).sum()
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (along, across) = match self.axis {
            RescaleAxis::Horizontal => (x, y),
            RescaleAxis::Vertical => (y, x),
        };
        self.band_of(across).is_some_and(|b| along >= 0.0 && along <= b.extent)
    }

    fn bounding_box(&self) -> BoundingBox {
        let t_max = self.bands.iter().map(|b| b.extent).fold(0.0, f64::max);
        let lo = self.bands.first().map_or(0.0, |b| b.lo);
        let hi = self.bands.last().map_or(0.0, |b| b.hi);
        match self.axis {
            RescaleAxis::Horizontal => BoundingBox { x_min: 0.0, x_max: t_max, y_min: lo, y_max: hi },
            RescaleAxis::Vertical => BoundingBox { x_min: lo, x_max: hi, y_min: 0.0, y_max: t_max },
        }
    }
}
