//! Ripley's K, the weighted K-function, centered L, normal-approximation
//! bands and simulation envelopes.
//!
//! Estimators are evaluated literally:
//!
//! * plain: `K(r) = A N⁻² Σ_{i<j} s_ij 1{d_ij < r}`
//! * weighted: `K_W(r) = (b / ∫λ₀) Σ_i λ₀(x_i)⁻¹ Σ_{j≠i} λ₀(x_j)⁻¹ s_ij 1{d_ij ≤ r}`
//!
//! where `s_ij` is one, or with isotropic correction the reciprocal of the
//! fraction of the circle about `x_i` through `x_j` inside the region.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::intensity::IntensityField;
use crate::pairs::PairIndex;
use crate::region::Region;
use crate::rng::SeededStream;
use crate::sim::{simulate_homogeneous, Point};

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCorrection {
    #[default]
    None,
    Isotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KKind {
    Plain,
    Weighted,
}

impl KKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KKind::Plain => "plain",
            KKind::Weighted => "weighted",
        }
    }

    pub fn convention(&self) -> &'static str {
        match self {
            KKind::Plain => "unordered pairs i<j, d<r, prefactor A/N^2",
            KKind::Weighted => "ordered pairs j!=i, d<=r, prefactor inf(lambda0)/integral(lambda0)",
        }
    }
}

/// Strictly increasing positive distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiiGrid {
    values: Vec<f64>,
}

impl RadiiGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("radii grid is empty".into()));
        }
        if values.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidArgument("radii must be finite and positive".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("radii must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// `dr, 2dr, ...` up to and including `rmax` (with a small tolerance).
    pub fn regular(dr: f64, rmax: f64) -> Result<Self> {
        if !(dr > 0.0 && rmax >= dr && rmax.is_finite()) {
            return Err(Error::InvalidArgument(format!("need 0 < dr <= rmax, got dr={dr}, rmax={rmax}")));
        }
        let n = (rmax / dr + 1e-9).floor() as usize;
        Self::new((1..=n).map(|k| k as f64 * dr).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("radii grid is never empty")
    }
}

impl Default for RadiiGrid {
    fn default() -> Self {
        Self::regular(0.01, 0.70).expect("default radii are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCurve {
    pub radii: RadiiGrid,
    pub k: Vec<f64>,
    pub centered_l: Vec<f64>,
    /// Normal-approximation variance of `K` per radius, when analytic bands
    /// were requested.
    pub variance: Option<Vec<f64>>,
    /// Per-radius `(lower, upper)` in centered-L units.
    pub bands: Option<Vec<(f64, f64)>>,
    pub kind: KKind,
    pub edge: EdgeCorrection,
    pub convention: String,
}

/// `√(K/π) − r`.
pub fn centered_l(k: f64, r: f64) -> f64 {
    (k.max(0.0) / PI).sqrt() - r
}

impl KCurve {
    fn new(radii: RadiiGrid, k: Vec<f64>, kind: KKind, edge: EdgeCorrection) -> Self {
        let centered_l = radii.values().iter().zip(&k).map(|(r, k)| centered_l(*k, *r)).collect();
        Self { radii, k, centered_l, variance: None, bands: None, kind, edge, convention: kind.convention().to_string() }
    }

    /// Attaches normal-approximation bands for a region of `area` under a
    /// null with total intensity `total_intensity`.
    pub fn with_analytic_bands(mut self, area: f64, total_intensity: f64, level: f64) -> Result<Self> {
        let k_bands = wk_confidence_bands(&self.radii, area, total_intensity, level)?;
        self.variance = Some(self.radii.values().iter().map(|r| wk_variance(*r, area, total_intensity)).collect());
        self.bands =
            Some(self.radii.values().iter().zip(k_bands).map(|(r, band)| bands_to_centered(*r, band)).collect());
        Ok(self)
    }

    pub fn with_bands(mut self, bands: Vec<(f64, f64)>) -> Result<Self> {
        if bands.len() != self.radii.len() {
            return Err(Error::InvalidArgument("band count differs from radii count".into()));
        }
        self.bands = Some(bands);
        Ok(self)
    }

    /// Fraction of radii at which centered L lies within the bands.
    pub fn fraction_inside(&self) -> Option<f64> {
        let bands = self.bands.as_ref()?;
        let inside = self.centered_l.iter().zip(bands).filter(|(l, (lo, hi))| *l >= lo && *l <= hi).count();
        Some(inside as f64 / bands.len() as f64)
    }

    /// Radii at which centered L leaves the bands, as `(r, above)`.
    pub fn exits(&self) -> Vec<(f64, bool)> {
        let Some(bands) = &self.bands else { return Vec::new() };
        self.radii
            .values()
            .iter()
            .zip(&self.centered_l)
            .zip(bands)
            .filter_map(|((r, l), (lo, hi))| {
                if l > hi {
                    Some((*r, true))
                } else if l < lo {
                    Some((*r, false))
                } else {
                    None
                }
            })
            .collect()
    }

    /// CSV: `r,k,centered_l,lower,upper,kind`; band columns are empty when
    /// no bands are attached.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,k,centered_l,lower,upper,kind\n");
        for (i, r) in self.radii.values().iter().enumerate() {
            let (lo, hi) = match &self.bands {
                Some(b) => (b[i].0.to_string(), b[i].1.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{r},{},{},{lo},{hi},{}", self.k[i], self.centered_l[i], self.kind.as_str());
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Pairs {
    /// `i < j`, `d < r`.
    UnorderedStrict,
    /// `j != i`, `d <= r`.
    OrderedInclusive,
}

/// Per-radius sums of `weight(i, j, d)` over the selected pairs. Points are
/// processed in fixed-size chunks whose partial histograms are combined in
/// index order, so the result does not depend on the thread count.
fn pair_sums<W>(points: &[Point], radii: &RadiiGrid, pairs: Pairs, weight: W) -> Vec<f64>
where
    W: Fn(usize, usize, f64) -> f64 + Sync,
{
    let r = radii.values();
    let reach = radii.max();
    let index = PairIndex::new(points, reach);
    let partials: Vec<Vec<f64>> = (0..points.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut bins = vec![0.0; r.len()];
            for &i in chunk {
                index.for_each_neighbor(i, reach, |j, d| {
                    let bin = match pairs {
                        Pairs::UnorderedStrict if j < i => return,
                        Pairs::UnorderedStrict => r.partition_point(|&x| x <= d),
                        Pairs::OrderedInclusive => r.partition_point(|&x| x < d),
                    };
                    if bin < bins.len() {
                        bins[bin] += weight(i, j, d);
                    }
                });
            }
            bins
        })
        .collect();
    let mut total = vec![0.0; r.len()];
    for bins in partials {
        for (t, b) in total.iter_mut().zip(bins) {
            *t += b;
        }
    }
    for k in 1..total.len() {
        total[k] += total[k - 1];
    }
    total
}

fn edge_weight<R: Region + ?Sized>(region: &R, edge: EdgeCorrection, p: &Point, d: f64) -> f64 {
    match edge {
        EdgeCorrection::None => 1.0,
        EdgeCorrection::Isotropic => 1.0 / region.circle_fraction(p.x, p.y, d),
    }
}

fn check_inside<R: Region + ?Sized>(points: &[Point], region: &R) -> Result<()> {
    match points.iter().find(|p| !region.contains(p.x, p.y)) {
        Some(p) => Err(Error::OutsideRegion { x: p.x, y: p.y }),
        None => Ok(()),
    }
}

/// Ripley's K for the points in `region`.
pub fn ripley_k<R: Region + ?Sized>(
    points: &[Point],
    region: &R,
    radii: &RadiiGrid,
    edge: EdgeCorrection,
) -> Result<KCurve> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: points.len() });
    }
    check_inside(points, region)?;
    let n = points.len() as f64;
    let pref = region.area() / (n * n);
    let sums = pair_sums(points, radii, Pairs::UnorderedStrict, |i, _, d| edge_weight(region, edge, &points[i], d));
    Ok(KCurve::new(radii.clone(), sums.into_iter().map(|s| pref * s).collect(), KKind::Plain, edge))
}

fn weighted_core<R: Region + ?Sized>(
    points: &[Point],
    inv_lambda: &[f64],
    infimum: f64,
    integral: f64,
    region: &R,
    radii: &RadiiGrid,
    edge: EdgeCorrection,
) -> KCurve {
    let pref = infimum / integral;
    let sums = pair_sums(points, radii, Pairs::OrderedInclusive, |i, j, d| {
        inv_lambda[i] * inv_lambda[j] * edge_weight(region, edge, &points[i], d)
    });
    KCurve::new(radii.clone(), sums.into_iter().map(|s| pref * s).collect(), KKind::Weighted, edge)
}

/// Weighted K against an inhomogeneous null intensity; the observation
/// region is the field's active pixels.
pub fn weighted_k(
    points: &[Point],
    null_field: &IntensityField,
    radii: &RadiiGrid,
    edge: EdgeCorrection,
) -> Result<KCurve> {
    let mut inv = Vec::with_capacity(points.len());
    let mut zero = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let v = null_field.evaluate(p.x, p.y)?;
        if v > 0.0 {
            inv.push(1.0 / v);
        } else {
            zero.push(i);
            inv.push(0.0);
        }
    }
    if !zero.is_empty() {
        return Err(Error::ZeroIntensity { indices: zero });
    }
    let (inf, _) = null_field.extremes()?;
    if inf <= 0.0 {
        return Err(Error::InvalidArgument(
            "weighted K needs a strictly positive null intensity, but its infimum is zero".into(),
        ));
    }
    Ok(weighted_core(points, &inv, inf, null_field.total(), null_field.grid(), radii, edge))
}

/// Weighted K against a constant null `rate` on `region`. With a constant
/// null every weight equals `1/rate`, so this is the unweighted ordered-pair
/// estimator normalized by `rate² · A`.
pub fn weighted_k_constant<R: Region + ?Sized>(
    points: &[Point],
    rate: f64,
    region: &R,
    radii: &RadiiGrid,
    edge: EdgeCorrection,
) -> Result<KCurve> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("null rate must be positive and finite, got {rate}")));
    }
    check_inside(points, region)?;
    let inv = vec![1.0 / rate; points.len()];
    Ok(weighted_core(points, &inv, rate, rate * region.area(), region, radii, edge))
}

/// `2πr²A / (∫λ)²`.
pub fn wk_variance(r: f64, area: f64, total_intensity: f64) -> f64 {
    2.0 * PI * r * r * area / (total_intensity * total_intensity)
}

/// Two-sided normal bands `πr² ± z √(2πr²A) / ∫λ` on the K scale.
pub fn wk_confidence_bands(
    radii: &RadiiGrid,
    area: f64,
    total_intensity: f64,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(total_intensity > 0.0 && total_intensity.is_finite()) {
        return Err(Error::InvalidArgument(format!("total intensity must be positive, got {total_intensity}")));
    }
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::InvalidArgument(format!("area must be positive, got {area}")));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("coverage level must lie in [0, 1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
    Ok(radii
        .values()
        .iter()
        .map(|r| {
            let mean = PI * r * r;
            let half = z * wk_variance(*r, area, total_intensity).sqrt();
            (mean - half, mean + half)
        })
        .collect())
}

/// Maps a K-scale band to centered-L units; negative K bounds clip to `−r`.
pub fn bands_to_centered(r: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    (centered_l(lo, r), centered_l(hi, r))
}

/// Pointwise middle-`level` range of centered weighted L over `n_sims`
/// homogeneous Poisson patterns of intensity `rate` on `region`. Ranks are
/// `floor(α n)` and `ceil((1 − α) n) − 1` of the sorted values, `α = (1 − level)/2`.
pub fn envelope_bands<R: Region + ?Sized>(
    region: &R,
    rate: f64,
    radii: &RadiiGrid,
    n_sims: usize,
    stream: SeededStream,
    edge: EdgeCorrection,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if n_sims < 2 {
        return Err(Error::InvalidArgument(format!("envelopes need at least 2 simulations, got {n_sims}")));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("coverage level must lie in [0, 1), got {level}")));
    }
    let curves: Vec<Vec<f64>> = (0..n_sims as u64)
        .into_par_iter()
        .map(|j| {
            let pts = simulate_homogeneous(region, rate, stream.substream(j))?;
            Ok(weighted_k_constant(&pts, rate, region, radii, edge)?.centered_l)
        })
        .collect::<Result<_>>()?;
    let alpha = (1.0 - level) / 2.0;
    let lo_rank = (alpha * n_sims as f64).floor() as usize;
    let hi_rank = (((1.0 - alpha) * n_sims as f64).ceil() as usize).clamp(1, n_sims) - 1;
    let mut column = vec![0.0; n_sims];
    Ok((0..radii.len())
        .map(|k| {
            for (c, curve) in column.iter_mut().zip(&curves) {
                *c = curve[k];
            }
            column.sort_by(f64::total_cmp);
            (column[lo_rank], column[hi_rank])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn unit() -> Grid {
        Grid::new(0.0, 1.0, 0.0, 1.0, 0.1, 0.1).unwrap()
    }

    #[test]
    fn radii_validation() {
        assert!(RadiiGrid::new(vec![]).is_err());
        assert!(RadiiGrid::new(vec![0.1, 0.1]).is_err());
        assert!(RadiiGrid::new(vec![0.0, 0.1]).is_err());
        let d = RadiiGrid::default();
        assert_eq!(d.len(), 70);
        assert!((d.max() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn two_points_plain() {
        let pts = [Point::new(0.25, 0.5), Point::new(0.75, 0.5)];
        let k = ripley_k(&pts, &unit(), &RadiiGrid::new(vec![0.4, 0.6]).unwrap(), EdgeCorrection::None).unwrap();
        assert_eq!(k.k[0], 0.0);
        assert!((k.k[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn plain_needs_two_points() {
        let pts = [Point::new(0.25, 0.5)];
        assert!(matches!(
            ripley_k(&pts, &unit(), &RadiiGrid::default(), EdgeCorrection::None),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn two_points_weighted_uniform() {
        let f = IntensityField::uniform(unit(), 2.0).unwrap();
        let pts = [Point::new(0.25, 0.5), Point::new(0.35, 0.5)];
        let k = weighted_k(&pts, &f, &RadiiGrid::new(vec![0.2]).unwrap(), EdgeCorrection::None).unwrap();
        assert!((k.k[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_rejects_zero_and_outside() {
        let f = IntensityField::from_rates(unit(), (0..100).map(|i| if i == 0 { 0.0 } else { 1.0 }).collect()).unwrap();
        let radii = RadiiGrid::default();
        let err = weighted_k(&[Point::new(0.05, 0.05)], &f, &radii, EdgeCorrection::None).unwrap_err();
        assert!(matches!(err, Error::ZeroIntensity { indices } if indices == vec![0]));
        let err = weighted_k(&[Point::new(1.5, 0.5)], &f, &radii, EdgeCorrection::None).unwrap_err();
        assert!(matches!(err, Error::OutsideRegion { .. }));
    }

    #[test]
    fn centered_values() {
        assert!(centered_l(PI * 0.09, 0.3).abs() < 1e-15);
        assert_eq!(centered_l(0.0, 0.4), -0.4);
        assert!((centered_l(4.0 * PI, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eq2_bands_plug_in() {
        let radii = RadiiGrid::new(vec![1.0]).unwrap();
        let (lo, hi) = wk_confidence_bands(&radii, 1.0, 10.0, 0.95).unwrap()[0];
        assert!((lo - 2.650).abs() < 5e-4, "{lo}");
        assert!((hi - 3.633).abs() < 5e-4, "{hi}");
        let (lo, hi) = wk_confidence_bands(&radii, 1.0, 10.0, 0.0).unwrap()[0];
        assert_eq!((lo, hi), (PI, PI));
    }

    #[test]
    fn band_halves_when_total_doubles() {
        let radii = RadiiGrid::default();
        let a = wk_confidence_bands(&radii, 3.0, 17.0, 0.95).unwrap();
        let b = wk_confidence_bands(&radii, 3.0, 34.0, 0.95).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(((x.1 - x.0) - 2.0 * (y.1 - y.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_two_sims_is_min_max() {
        let radii = RadiiGrid::regular(0.05, 0.2).unwrap();
        let s = SeededStream::new(9, 1);
        let env = envelope_bands(&unit(), 50.0, &radii, 2, s, EdgeCorrection::None, 0.95).unwrap();
        let c: Vec<Vec<f64>> = (0..2)
            .map(|j| {
                let pts = simulate_homogeneous(&unit(), 50.0, s.substream(j)).unwrap();
                weighted_k_constant(&pts, 50.0, &unit(), &radii, EdgeCorrection::None).unwrap().centered_l
            })
            .collect();
        for k in 0..radii.len() {
            assert_eq!(env[k], (c[0][k].min(c[1][k]), c[0][k].max(c[1][k])));
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let pts = [Point::new(0.25, 0.5), Point::new(0.75, 0.5)];
        let k = ripley_k(&pts, &unit(), &RadiiGrid::new(vec![0.6]).unwrap(), EdgeCorrection::None).unwrap();
        let csv = k.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("r,k,centered_l,lower,upper,kind"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 6);
        assert_eq!((row[0], row[3], row[4], row[5]), ("0.6", "", "", "plain"));
        assert!(lines.next().is_none());
    }
}
