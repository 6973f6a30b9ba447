//! Verification toolkit for gridded earthquake rate forecasts: consistency
//! tests, pixel residuals, weighted second-order statistics and residual
//! point-process transforms.

pub mod catalog;
pub mod consistency;
pub mod error;
pub mod forecast;
pub mod grid;
pub mod intensity;
pub mod magnitude;
mod pairs;
pub mod region;
pub mod residuals;
pub mod rng;
pub mod second_order;
pub mod sim;
pub mod transforms;

pub use catalog::{filter_catalog, filter_catalog_with, parse_catalog, Catalog, CatalogFilter, Event, FilterReport};
pub use consistency::{l_test, log_likelihood, n_test, Method, QuantileScore, Statistic};
pub use error::{Error, Result};
pub use forecast::{parse_forecast, Forecast, ForecastBin, TimeWindow};
pub use grid::Grid;
pub use intensity::IntensityField;
pub use magnitude::{gr_extrapolate, SpecialRegion, TaperedGr};
pub use region::{Region, RescaledRegion};
pub use residuals::{deviance_residuals, lr_score, pearson_residuals, raw_residuals, PixelResidualMap, ResidualKind};
pub use rng::SeededStream;
pub use sim::{simulate_catalog, simulate_counts, Point};
pub use second_order::{
    centered_l, envelope_bands, ripley_k, weighted_k, weighted_k_constant, wk_confidence_bands, EdgeCorrection,
    KCurve, KKind, RadiiGrid,
};
pub use transforms::{
    assess_homogeneity, rescale, super_thin, superpose, thin_approx, thin_exact, BandMethod, Label, ResidualSet,
    Transform,
};
