//! Per-pixel residuals: raw, Pearson and deviance, plus the summed
//! log-likelihood ratio score. All integrals are closed form because the
//! fields are piecewise constant.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::consistency::pixel_counts;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::intensity::IntensityField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Raw,
    Pearson,
    Deviance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualFlag {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "skipped")]
    Skipped,
    #[serde(rename = "+inf")]
    PosInf,
    #[serde(rename = "-inf")]
    NegInf,
}

impl ResidualFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResidualFlag::Ok => "ok",
            ResidualFlag::Skipped => "skipped",
            ResidualFlag::PosInf => "+inf",
            ResidualFlag::NegInf => "-inf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelResidual {
    pub pixel: usize,
    /// NaN when skipped, ±inf for the sentinels.
    pub value: f64,
    pub flag: ResidualFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelResidualMap {
    pub grid: Grid,
    pub kind: ResidualKind,
    pub values: Vec<PixelResidual>,
    pub skipped: Vec<(usize, String)>,
}

impl PixelResidualMap {
    pub fn get(&self, pixel: usize) -> Option<&PixelResidual> {
        self.values.iter().find(|r| r.pixel == pixel)
    }

    /// Largest finite residual.
    pub fn max(&self) -> Option<&PixelResidual> {
        self.values.iter().filter(|r| r.flag == ResidualFlag::Ok).max_by(|a, b| a.value.total_cmp(&b.value))
    }

    /// Sum of the finite values.
    pub fn finite_sum(&self) -> f64 {
        self.values.iter().filter(|r| r.flag == ResidualFlag::Ok).map(|r| r.value).sum()
    }

    /// CSV: `pixel_index,lon_center,lat_center,value,flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pixel_index,lon_center,lat_center,value,flag\n");
        for r in &self.values {
            let (x, y) = self.grid.pixel_center(r.pixel);
            let _ = writeln!(out, "{},{x},{y},{},{}", r.pixel, r.value, r.flag.as_str());
        }
        out
    }
}

fn ok(pixel: usize, value: f64) -> PixelResidual {
    PixelResidual { pixel, value, flag: ResidualFlag::Ok }
}

/// `ω_p − Λ_p` per active pixel.
pub fn raw_residuals(field: &IntensityField, catalog: &Catalog) -> PixelResidualMap {
    let counts = pixel_counts(field, catalog);
    let values = field.grid().active_pixels().map(|p| ok(p, counts[p] as f64 - field.pixel_integral(p))).collect();
    PixelResidualMap { grid: field.grid().clone(), kind: ResidualKind::Raw, values, skipped: Vec::new() }
}

/// `ω_p / √v_p − √v_p · area` per active pixel with `v_p > 0`; zero-rate
/// pixels are listed in `skipped`.
pub fn pearson_residuals(field: &IntensityField, catalog: &Catalog) -> PixelResidualMap {
    let counts = pixel_counts(field, catalog);
    let area = field.grid().pixel_area();
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for p in field.grid().active_pixels() {
        let v = field.value_unchecked(p);
        if v > 0.0 {
            let s = v.sqrt();
            values.push(ok(p, counts[p] as f64 / s - s * area));
        } else {
            values.push(PixelResidual { pixel: p, value: f64::NAN, flag: ResidualFlag::Skipped });
            skipped.push((p, "zero forecast intensity".to_string()));
        }
    }
    PixelResidualMap { grid: field.grid().clone(), kind: ResidualKind::Pearson, values, skipped }
}

/// Per-pixel difference of the two models' log-likelihood contributions,
/// `[ω ln v₁ − Λ₁] − [ω ln v₂ − Λ₂]`. Positive values favour `field_1`.
///
/// The fields must share grid geometry; pixels active in only one of them are
/// dropped and reported. An event in a pixel where exactly one model is zero
/// yields the ±inf sentinel; if both are zero the pixel is skipped.
pub fn deviance_residuals(
    field_1: &IntensityField,
    field_2: &IntensityField,
    catalog: &Catalog,
) -> Result<PixelResidualMap> {
    let (g1, g2) = (field_1.grid(), field_2.grid());
    if !g1.same_geometry(g2) {
        return Err(Error::GridMismatch("deviance residuals need fields on the same grid".into()));
    }
    let counts = pixel_counts(field_1, catalog);
    let area = g1.pixel_area();
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for p in 0..g1.n_pixels() {
        match (g1.is_active(p), g2.is_active(p)) {
            (false, false) => continue,
            (true, true) => {}
            _ => {
                skipped.push((p, "pixel active in only one model".to_string()));
                continue;
            }
        }
        let (v1, v2) = (field_1.value_unchecked(p), field_2.value_unchecked(p));
        let omega = counts[p] as f64;
        let r = if omega == 0.0 {
            ok(p, -v1 * area + v2 * area)
        } else {
            match (v1 > 0.0, v2 > 0.0) {
                (true, true) => ok(p, (omega * v1.ln() - v1 * area) - (omega * v2.ln() - v2 * area)),
                (false, true) => PixelResidual { pixel: p, value: f64::NEG_INFINITY, flag: ResidualFlag::NegInf },
                (true, false) => PixelResidual { pixel: p, value: f64::INFINITY, flag: ResidualFlag::PosInf },
                (false, false) => {
                    skipped.push((p, "events where both models forecast zero".to_string()));
                    PixelResidual { pixel: p, value: f64::NAN, flag: ResidualFlag::Skipped }
                }
            }
        };
        values.push(r);
    }
    let mut grid = g1.clone();
    for p in 0..grid.n_pixels() {
        if !g2.is_active(p) {
            grid.set_active(p, false);
        }
    }
    Ok(PixelResidualMap { grid, kind: ResidualKind::Deviance, values, skipped })
}

/// Sum of deviance residuals. Any sentinel propagates: one sign gives that
/// infinity, both signs together are an error.
pub fn lr_score(map: &PixelResidualMap) -> Result<f64> {
    if map.kind != ResidualKind::Deviance {
        return Err(Error::InvalidArgument("log-likelihood ratio score needs a deviance map".into()));
    }
    let pos = map.values.iter().any(|r| r.flag == ResidualFlag::PosInf);
    let neg = map.values.iter().any(|r| r.flag == ResidualFlag::NegInf);
    match (pos, neg) {
        (true, true) => Err(Error::Validation("deviance map holds both +inf and -inf sentinels".into())),
        (true, false) => Ok(f64::INFINITY),
        (false, true) => Ok(f64::NEG_INFINITY),
        (false, false) => Ok(map.finite_sum()),
    }
}
