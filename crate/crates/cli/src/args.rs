use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "quakeres", version, about = "Residual diagnostics for gridded earthquake rate forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Number test: quantile of the observed count under the forecast.
    Ntest(NtestArgs),
    /// Likelihood test: quantile of the observed log-likelihood.
    Ltest(LtestArgs),
    /// Per-pixel raw, Pearson or deviance residuals.
    Resid(ResidArgs),
    /// Ripley's K or the weighted K-function with normal-approximation bands.
    K(KArgs),
    /// Residual point process: rescale, thin, thin-approx, superpose, superthin.
    Transform(TransformArgs),
    /// Simulate a catalog from a forecast.
    Simulate(SimulateArgs),
    /// Run the standard suite and write every artifact to one directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FieldArgs {
    /// Forecast file; repeat to sum several forecasts on one grid.
    #[arg(long = "forecast", value_name = "PATH")]
    pub forecast: Vec<PathBuf>,
    /// Lower magnitude bound for bins and events.
    #[arg(long, default_value_t = 3.95)]
    pub mag_min: f64,
    /// Fraction of the forecast window that has elapsed.
    #[arg(long, default_value_t = 1.0)]
    pub window_fraction: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CatalogArgs {
    #[arg(long, value_name = "PATH")]
    pub catalog: Option<PathBuf>,
    /// Deepest hypocenter kept, km.
    #[arg(long, default_value_t = 30.0)]
    pub depth_max: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutArgs {
    /// Output file (directory for `report`); stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NtestArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exact Poisson probability instead of simulation.
    #[arg(long)]
    pub analytic: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LtestArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidKind {
    Raw,
    Pearson,
    Deviance,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ResidArgs {
    #[arg(long, value_enum)]
    pub kind: ResidKind,
    #[command(flatten)]
    pub field: FieldArgs,
    /// First model for deviance residuals (positive values favour it).
    #[arg(long, value_name = "PATH")]
    pub forecast_a: Option<PathBuf>,
    /// Second model for deviance residuals.
    #[arg(long, value_name = "PATH")]
    pub forecast_b: Option<PathBuf>,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Pixel map with event locations.
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    #[default]
    None,
    Isotropic,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RadiiArgs {
    #[arg(long, default_value_t = 0.7)]
    pub rmax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dr: f64,
    #[arg(long, value_enum, default_value_t = Edge::None)]
    pub edge: Edge,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct KArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    /// Weight points by the forecast intensity.
    #[arg(long)]
    pub weighted: bool,
    #[command(flatten)]
    pub radii: RadiiArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Rescale,
    Thin,
    ThinApprox,
    Superpose,
    Superthin,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TransformArgs {
    #[arg(long, value_enum)]
    pub kind: TransformKind,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    /// Expected number of retained events (thin-approx).
    #[arg(long)]
    pub k_count: Option<f64>,
    /// Target rate in events per square degree (superthin).
    #[arg(long)]
    pub k_rate: Option<f64>,
    #[arg(long, hide = true)]
    #[serde(skip)]
    pub k: Option<String>,
    /// Compute the weighted K of the residuals with bands.
    #[arg(long)]
    pub assess: bool,
    /// Normal-approximation bands instead of simulation envelopes.
    #[arg(long)]
    pub analytic: bool,
    /// Simulations for envelope bands.
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub radii: RadiiArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub radii: RadiiArgs,
    #[command(flatten)]
    pub out: OutArgs,
}
