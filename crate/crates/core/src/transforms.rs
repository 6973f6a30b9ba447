//! Residual point processes: rescaling, thinning, superposition and
//! super-thinning. Each yields a [`ResidualSet`] that is homogeneous Poisson
//! at a known rate when the forecast is correct, and can be checked with
//! [`assess_homogeneity`].

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::intensity::IntensityField;
use crate::region::{Band, BoundingBox, Region, RescaleAxis, RescaledRegion};
use crate::rng::SeededStream;
use crate::second_order::{envelope_bands, weighted_k_constant, EdgeCorrection, KCurve, RadiiGrid};
use crate::sim::{simulate_cox_complement, ComplementMode, Point};

/// Substream used for the simulated component, kept apart from the
/// per-event retention draws.
const COMPLEMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Retained,
    Simulated,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Retained => "retained",
            Label::Simulated => "simulated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub x: f64,
    pub y: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Rescale,
    Thin,
    ThinApprox,
    Superpose,
    Superthin,
}

impl Transform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Transform::Rescale => "rescale",
            Transform::Thin => "thin",
            Transform::ThinApprox => "thin_approx",
            Transform::Superpose => "superpose",
            Transform::Superthin => "superthin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualRegion {
    Grid(Grid),
    Rescaled(RescaledRegion),
}

impl Region for ResidualRegion {
    fn area(&self) -> f64 {
        match self {
            ResidualRegion::Grid(g) => Region::area(g),
            ResidualRegion::Rescaled(r) => r.area(),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            ResidualRegion::Grid(g) => g.contains(x, y),
            ResidualRegion::Rescaled(r) => r.contains(x, y),
        }
    }

    fn bounding_box(&self) -> BoundingBox {
        match self {
            ResidualRegion::Grid(g) => g.bounding_box(),
            ResidualRegion::Rescaled(r) => r.bounding_box(),
        }
    }

    fn circle_fraction(&self, cx: f64, cy: f64, r: f64) -> f64 {
        match self {
            ResidualRegion::Grid(g) => g.circle_fraction(cx, cy, r),
            ResidualRegion::Rescaled(reg) => reg.circle_fraction(cx, cy, r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub points: Vec<ResidualPoint>,
    /// Intensity, in points per unit area of `region`, under a correct model.
    pub null_rate: f64,
    pub region: ResidualRegion,
    pub transform: Transform,
    pub seed: Option<u64>,
    /// Retention probabilities that exceeded one and were clamped.
    pub clamped: usize,
    pub notes: Vec<String>,
}

impl ResidualSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    /// Share of simulated points; zero for an empty set.
    pub fn simulated_fraction(&self) -> f64 {
        if self.points.is_empty() {
            0.0
        } else {
            self.count(Label::Simulated) as f64 / self.points.len() as f64
        }
    }

    pub fn locations(&self) -> Vec<Point> {
        self.points.iter().map(|p| Point::new(p.x, p.y)).collect()
    }

    /// CSV: `x,y,label,transform,seed`.
    pub fn to_csv(&self) -> String {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        let mut out = String::from("x,y,label,transform,seed\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{},{seed}", p.x, p.y, p.label.as_str(), self.transform.as_str());
        }
        out
    }
}

/// Active pixel and rate for every event, in catalog order.
fn event_rates(catalog: &Catalog, field: &IntensityField) -> Result<Vec<(Point, f64)>> {
    let grid = field.grid();
    catalog
        .events()
        .iter()
        .map(|e| match grid.active_pixel_of(e.lon, e.lat) {
            Some(p) => Ok((Point::new(e.lon, e.lat), field.value_unchecked(p))),
            None => Err(Error::OutsideRegion { x: e.lon, y: e.lat }),
        })
        .collect()
}

/// Integral of the field from the region's start to `along`, following one
/// row (horizontal) or column (vertical). Inactive pixels contribute nothing.
fn line_integral(field: &IntensityField, axis: RescaleAxis, line: usize, along: Option<f64>) -> f64 {
    let g = field.grid();
    let (n, edge): (usize, &dyn Fn(usize) -> f64) = match axis {
        RescaleAxis::Horizontal => (g.n_x(), &|i| g.x_edge(i)),
        RescaleAxis::Vertical => (g.n_y(), &|i| g.y_edge(i)),
    };
    let pixel = |i: usize| match axis {
        RescaleAxis::Horizontal => g.index(i, line),
        RescaleAxis::Vertical => g.index(line, i),
    };
    let mut total = 0.0;
    for i in 0..n {
        let (lo, hi) = (edge(i), edge(i + 1));
        let p = pixel(i);
        let v = if g.is_active(p) { field.value_unchecked(p) } else { 0.0 };
        match along {
            Some(a) if a < hi || i + 1 == n => {
                total += v * (a - lo);
                break;
            }
            _ => total += v * (hi - lo),
        }
    }
    total
}

/// Moves each event to `(∫λ̄ dx, y)` along its row (or the transposed map for
/// [`RescaleAxis::Vertical`]), where `λ̄` is the time-integrated rate. The
/// result is unit-rate homogeneous on the returned stack of bands.
pub fn rescale(catalog: &Catalog, field: &IntensityField, axis: RescaleAxis) -> Result<ResidualSet> {
    let g = field.grid();
    let lines = match axis {
        RescaleAxis::Horizontal => g.n_y(),
        RescaleAxis::Vertical => g.n_x(),
    };
    let across_edge = |j: usize| match axis {
        RescaleAxis::Horizontal => g.y_edge(j),
        RescaleAxis::Vertical => g.x_edge(j),
    };
    let bands = (0..lines)
        .map(|j| Band { lo: across_edge(j), hi: across_edge(j + 1), extent: line_integral(field, axis, j, None) })
        .collect();
    let mut points = Vec::with_capacity(catalog.len());
    for e in catalog.events() {
        let p = g.active_pixel_of(e.lon, e.lat).ok_or(Error::OutsideRegion { x: e.lon, y: e.lat })?;
        let (col, row) = g.col_row(p);
        let (x, y) = match axis {
            RescaleAxis::Horizontal => (line_integral(field, axis, row, Some(e.lon)), e.lat),
            RescaleAxis::Vertical => (e.lon, line_integral(field, axis, col, Some(e.lat))),
        };
        points.push(ResidualPoint { x, y, label: Label::Retained });
    }
    Ok(ResidualSet {
        points,
        null_rate: 1.0,
        region: ResidualRegion::Rescaled(RescaledRegion { axis, bands }),
        transform: Transform::Rescale,
        seed: None,
        clamped: 0,
        notes: vec!["rescaled with the time-integrated intensity".into()],
    })
}

fn bernoulli_keep(probabilities: &[f64], stream: SeededStream) -> Vec<bool> {
    let mut rng = stream.rng();
    probabilities.iter().enumerate().map(|(i, p)| rng.uniform_at(i as u64) < *p).collect()
}

fn grid_set(
    points: Vec<ResidualPoint>,
    null_rate: f64,
    field: &IntensityField,
    transform: Transform,
    stream: SeededStream,
) -> ResidualSet {
    ResidualSet {
        points,
        null_rate,
        region: ResidualRegion::Grid(field.grid().clone()),
        transform,
        seed: Some(stream.seed),
        clamped: 0,
        notes: Vec::new(),
    }
}

fn retained(located: &[(Point, f64)], keep: &[bool]) -> Vec<ResidualPoint> {
    located
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|((p, _), _)| ResidualPoint { x: p.x, y: p.y, label: Label::Retained })
        .collect()
}

/// Keeps each event with probability `b / λ̂(x_i)`, `b = inf λ̂`.
pub fn thin_exact(catalog: &Catalog, field: &IntensityField, stream: SeededStream) -> Result<ResidualSet> {
    let (b, _) = field.extremes()?;
    if b <= 0.0 {
        return Err(Error::DegenerateInfimum);
    }
    let located = event_rates(catalog, field)?;
    let probs: Vec<f64> = located.iter().map(|(_, v)| b / v).collect();
    let keep = bernoulli_keep(&probs, stream);
    Ok(grid_set(retained(&located, &keep), b, field, Transform::Thin, stream))
}

/// Keeps each event with probability `k / (λ̂(x_i) Σ_j λ̂(x_j)⁻¹)`, so about
/// `k_count` events survive. Probabilities above one are clamped.
pub fn thin_approx(
    catalog: &Catalog,
    field: &IntensityField,
    k_count: f64,
    stream: SeededStream,
) -> Result<ResidualSet> {
    if !(k_count > 0.0 && k_count.is_finite()) {
        return Err(Error::InvalidArgument(format!("k_count must be positive, got {k_count}")));
    }
    let located = event_rates(catalog, field)?;
    let zero: Vec<usize> = located.iter().enumerate().filter(|(_, (_, v))| *v <= 0.0).map(|(i, _)| i).collect();
    if !zero.is_empty() {
        return Err(Error::ZeroIntensity { indices: zero });
    }
    let inv_sum: f64 = located.iter().map(|(_, v)| 1.0 / v).sum();
    let mut clamped = 0;
    let probs: Vec<f64> = located
        .iter()
        .map(|(_, v)| {
            let p = k_count / (v * inv_sum);
            if p > 1.0 {
                clamped += 1;
                1.0
            } else {
                p
            }
        })
        .collect();
    if clamped > 0 {
        warn!("{clamped} retention probabilities exceeded 1 and were clamped");
    }
    let keep = bernoulli_keep(&probs, stream);
    let area = field.grid().area();
    let mut set = grid_set(retained(&located, &keep), k_count / area, field, Transform::ThinApprox, stream);
    set.clamped = clamped;
    if clamped > 0 {
        set.notes.push(format!("{clamped} retention probabilities clamped to 1"));
    }
    Ok(set)
}

fn simulated(points: Vec<(Point, usize)>) -> impl Iterator<Item = ResidualPoint> {
    points.into_iter().map(|(p, _)| ResidualPoint { x: p.x, y: p.y, label: Label::Simulated })
}

/// All events plus a Cox process of rate `c − λ̂`, `c = sup λ̂`.
pub fn superpose(catalog: &Catalog, field: &IntensityField, stream: SeededStream) -> Result<ResidualSet> {
    let (_, c) = field.extremes()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("superposition needs a positive finite supremum, got {c}")));
    }
    let located = event_rates(catalog, field)?;
    let mut points = retained(&located, &vec![true; located.len()]);
    let extra = simulate_cox_complement(field, c, ComplementMode::Superpose, stream.substream(COMPLEMENT_STREAM))?;
    points.extend(simulated(extra));
    Ok(grid_set(points, c, field, Transform::Superpose, stream))
}

/// Default super-thinning rate: expected event count per unit area.
pub fn default_k_rate(field: &IntensityField) -> f64 {
    field.total() / field.grid().area()
}

/// Keeps each event with probability `min(1, k/λ̂)` and adds a Cox process of
/// rate `max(0, k − λ̂)`. `k_rate` defaults to [`default_k_rate`].
pub fn super_thin(
    catalog: &Catalog,
    field: &IntensityField,
    k_rate: Option<f64>,
    stream: SeededStream,
) -> Result<ResidualSet> {
    let k = k_rate.unwrap_or_else(|| default_k_rate(field));
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("k_rate must be positive, got {k}")));
    }
    let located = event_rates(catalog, field)?;
    let probs: Vec<f64> = located.iter().map(|(_, v)| if *v <= k { 1.0 } else { k / v }).collect();
    let keep = bernoulli_keep(&probs, stream);
    let mut points = retained(&located, &keep);
    let extra = simulate_cox_complement(field, k, ComplementMode::Superthin, stream.substream(COMPLEMENT_STREAM))?;
    points.extend(simulated(extra));
    let mut set = grid_set(points, k, field, Transform::Superthin, stream);
    if k_rate.is_none() {
        set.notes.push(format!("k_rate defaulted to expected count / area = {k}"));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMethod {
    /// Normal approximation; not available on rescaled regions.
    Analytic,
    /// Pointwise envelopes from homogeneous simulations on the same region.
    Envelope { n_sims: usize },
}

/// Weighted K of the residual points against the constant null `null_rate`
/// on the set's region, with bands at coverage `level`.
pub fn assess_homogeneity(
    set: &ResidualSet,
    radii: &RadiiGrid,
    bands: BandMethod,
    edge: EdgeCorrection,
    level: f64,
    stream: SeededStream,
) -> Result<KCurve> {
    if set.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let curve = weighted_k_constant(&set.locations(), set.null_rate, &set.region, radii, edge)?;
    match bands {
        BandMethod::Analytic => {
            if matches!(set.region, ResidualRegion::Rescaled(_)) {
                return Err(Error::InvalidArgument(
                    "rescaled regions are irregular; use envelope bands for rescaled residuals".into(),
                ));
            }
            let area = set.region.area();
            curve.with_analytic_bands(area, set.null_rate * area, level)
        }
        BandMethod::Envelope { n_sims } => {
            let env = envelope_bands(&set.region, set.null_rate, radii, n_sims, stream, edge, level)?;
            curve.with_bands(env)
        }
    }
}
