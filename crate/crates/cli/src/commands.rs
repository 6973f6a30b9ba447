use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::Duration;
use log::warn;
use quakeres_core::catalog::{CatalogFilter, FilterReport};
use quakeres_core::consistency::{l_test, n_test, Method, QuantileScore};
use quakeres_core::region::{Region, RescaleAxis};
use quakeres_core::residuals::PixelResidualMap;
use quakeres_core::sim::{nominal_window, simulate_catalog, to_catalog};
use quakeres_core::transforms::{default_k_rate, Label, ResidualRegion, ResidualSet};
use quakeres_core::{
    assess_homogeneity, deviance_residuals, filter_catalog_with, lr_score, parse_catalog, parse_forecast,
    pearson_residuals, raw_residuals, rescale, ripley_k, super_thin, superpose, thin_approx, thin_exact, weighted_k,
    BandMethod, Catalog, EdgeCorrection, Forecast, IntensityField, KCurve, Point, RadiiGrid, SeededStream,
};
use serde_json::{json, Value};

use crate::args::{
    CatalogArgs, Command, Edge, FieldArgs, KArgs, LtestArgs, NtestArgs, RadiiArgs, ReportArgs, ResidArgs, ResidKind,
    SimulateArgs, TransformArgs, TransformKind,
};
use crate::manifest::{write_with_manifest, RunManifest};
use crate::{svg, UsageError};

const BAND_LEVEL: f64 = 0.95;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ntest(a) => ntest(&a),
        Command::Ltest(a) => ltest(&a),
        Command::Resid(a) => resid(&a),
        Command::K(a) => k(&a),
        Command::Transform(a) => transform(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Report(a) => report(&a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// JSON number, or a string for non-finite values.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values always serialize") + "\n"
}

fn load_forecast(m: &mut RunManifest, paths: &[PathBuf]) -> Result<Forecast> {
    if paths.is_empty() {
        return Err(usage("--forecast is required"));
    }
    let mut parsed = Vec::with_capacity(paths.len());
    for p in paths {
        let text = m.read_input(p)?;
        parsed.push(parse_forecast(&text).with_context(|| format!("in forecast {}", p.display()))?);
    }
    if parsed.len() == 1 {
        Ok(parsed.pop().expect("one forecast"))
    } else {
        Ok(Forecast::merge_sum(&parsed)?)
    }
}

fn build_field(forecast: &Forecast, args: &FieldArgs) -> Result<IntensityField> {
    if let Some(lo) = forecast.min_magnitude() {
        if args.mag_min < lo - 1e-9 {
            warn!("--mag-min {} is below the forecast's lowest bin ({lo}); events below {lo} have no forecast", args.mag_min);
        }
    }
    if !(args.window_fraction > 0.0 && args.window_fraction <= 1.0) {
        return Err(usage(format!("--window-fraction must lie in (0, 1], got {}", args.window_fraction)));
    }
    Ok(IntensityField::aggregate(forecast, args.mag_min).scale_window(args.window_fraction)?)
}

fn load_catalog(
    m: &mut RunManifest,
    args: &CatalogArgs,
    forecast: &Forecast,
    mag_min: f64,
) -> Result<(Catalog, FilterReport)> {
    let path = args.catalog.as_ref().ok_or_else(|| usage("--catalog is required"))?;
    let text = m.read_input(path)?;
    let catalog = parse_catalog(&text).with_context(|| format!("in catalog {}", path.display()))?;
    Ok(filter_catalog_with(&catalog, forecast, &CatalogFilter { mag_min, depth_max: args.depth_max }))
}

fn points_of(catalog: &Catalog) -> Vec<Point> {
    catalog.events().iter().map(|e| Point::new(e.lon, e.lat)).collect()
}

fn radii_of(args: &RadiiArgs) -> Result<RadiiGrid> {
    RadiiGrid::regular(args.dr, args.rmax).map_err(|e| usage(e.to_string()))
}

fn edge_of(edge: Edge) -> EdgeCorrection {
    match edge {
        Edge::None => EdgeCorrection::None,
        Edge::Isotropic => EdgeCorrection::Isotropic,
    }
}

/// `a.csv` + `assess` -> `a.assess.csv`; the extension is kept.
fn derived(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

/// Data goes to `--out` (with a manifest sidecar) and the summary to stdout,
/// or the data to stdout and the summary to stderr.
fn emit(out: Option<&Path>, data: &str, manifest: &RunManifest, summary: &Value) -> Result<()> {
    match out {
        Some(p) => {
            write_with_manifest(p, data, manifest)?;
            print!("{}", pretty(summary));
        }
        None => {
            print!("{data}");
            eprint!("{}", pretty(summary));
        }
    }
    Ok(())
}

fn score_json(score: &QuantileScore, extra: Value) -> Value {
    let mut v = json!({
        "statistic": score.statistic,
        "value": score.value,
        "reject_at_5pct": score.rejects_at_5pct(),
        "method": score.method,
        "n_sims": score.n_sims,
        "seed": score.seed,
    });
    if let (Some(obj), Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}

fn ntest(a: &NtestArgs) -> Result<()> {
    let mut m = RunManifest::new("ntest", (!a.analytic).then_some(a.seed), serde_json::to_value(a)?);
    let forecast = load_forecast(&mut m, &a.field.forecast)?;
    let field = build_field(&forecast, &a.field)?;
    let (cat, filter) = load_catalog(&mut m, &a.catalog, &forecast, a.field.mag_min)?;
    let method = if a.analytic { Method::Analytic } else { Method::Simulation };
    let score = n_test(&field, &cat, a.sims, SeededStream::new(a.seed, 0), method)?;
    let v = score_json(
        &score,
        json!({"n_obs": score.observed_stat, "expected": field.total(), "filter": filter, "manifest": m}),
    );
    let text = pretty(&v);
    if let Some(p) = &a.out.out {
        write_with_manifest(p, &text, &m)?;
    }
    print!("{text}");
    Ok(())
}

fn ltest(a: &LtestArgs) -> Result<()> {
    let mut m = RunManifest::new("ltest", Some(a.seed), serde_json::to_value(a)?);
    let forecast = load_forecast(&mut m, &a.field.forecast)?;
    let field = build_field(&forecast, &a.field)?;
    let (cat, filter) = load_catalog(&mut m, &a.catalog, &forecast, a.field.mag_min)?;
    let score = l_test(&field, &cat, a.sims, SeededStream::new(a.seed, 0))?;
    let v = score_json(
        &score,
        json!({"observed_log_likelihood": num(score.observed_stat), "n_obs": cat.len(), "filter": filter, "manifest": m}),
    );
    let text = pretty(&v);
    if let Some(p) = &a.out.out {
        write_with_manifest(p, &text, &m)?;
    }
    print!("{text}");
    Ok(())
}

fn resid_summary(map: &PixelResidualMap, filter: &FilterReport) -> Value {
    let max = map.max().map(|r| {
        let (lon, lat) = map.grid.pixel_center(r.pixel);
        json!({"pixel": r.pixel, "value": r.value, "lon_center": lon, "lat_center": lat})
    });
    let skipped: Vec<Value> = map.skipped.iter().map(|(p, why)| json!({"pixel": p, "reason": why})).collect();
    json!({
        "kind": map.kind,
        "pixels": map.values.len(),
        "finite_sum": map.finite_sum(),
        "max": max,
        "skipped": skipped,
        "filter": filter,
    })
}

fn resid(a: &ResidArgs) -> Result<()> {
    let mut m = RunManifest::new("resid", None, serde_json::to_value(a)?);
    let (map, cat, filter, lr) = if a.kind == ResidKind::Deviance {
        let (Some(fa), Some(fb)) = (&a.forecast_a, &a.forecast_b) else {
            return Err(usage("deviance residuals need both --forecast-a and --forecast-b"));
        };
        if !a.field.forecast.is_empty() {
            return Err(usage("--forecast is not used with --kind deviance; give --forecast-a and --forecast-b"));
        }
        let fa = load_forecast(&mut m, std::slice::from_ref(fa))?;
        let fb = load_forecast(&mut m, std::slice::from_ref(fb))?;
        let (field_a, field_b) = (build_field(&fa, &a.field)?, build_field(&fb, &a.field)?);
        let (cat, filter) = load_catalog(&mut m, &a.catalog, &fa, a.field.mag_min)?;
        let map = deviance_residuals(&field_a, &field_b, &cat)?;
        let lr = lr_score(&map)?;
        (map, cat, filter, Some(lr))
    } else {
        if a.forecast_a.is_some() || a.forecast_b.is_some() {
            return Err(usage("--forecast-a/--forecast-b are only used with --kind deviance"));
        }
        let forecast = load_forecast(&mut m, &a.field.forecast)?;
        let field = build_field(&forecast, &a.field)?;
        let (cat, filter) = load_catalog(&mut m, &a.catalog, &forecast, a.field.mag_min)?;
        let map = if a.kind == ResidKind::Raw { raw_residuals(&field, &cat) } else { pearson_residuals(&field, &cat) };
        (map, cat, filter, None)
    };
    let mut summary = resid_summary(&map, &filter);
    if let Some(lr) = lr {
        summary["lr_score"] = num(lr);
    }
    if let Some(path) = &a.svg {
        let events: Vec<(f64, f64)> = cat.events().iter().map(|e| (e.lon, e.lat)).collect();
        let title = format!("{} residuals", serde_json::to_value(a.kind)?.as_str().unwrap_or("pixel"));
        write_with_manifest(path, &svg::pixel_map(&map, &events, &title), &m)?;
    }
    emit(a.out.out.as_deref(), &map.to_csv(), &m, &summary)
}

fn curve_summary(curve: &KCurve) -> Value {
    let exits: Vec<Value> =
        curve.exits().iter().map(|(r, above)| json!({"r": r, "side": if *above { "above" } else { "below" }})).collect();
    json!({
        "kind": curve.kind,
        "edge": curve.edge,
        "convention": curve.convention,
        "fraction_inside": curve.fraction_inside(),
        "exits": exits,
    })
}

fn k_curve(a: &KArgs, field: &IntensityField, cat: &Catalog) -> Result<KCurve> {
    let pts = points_of(cat);
    if pts.len() < 2 {
        return Err(quakeres_core::Error::TooFewPoints { needed: 2, got: pts.len() }.into());
    }
    let radii = radii_of(&a.radii)?;
    let edge = edge_of(a.radii.edge);
    let area = field.grid().area();
    Ok(if a.weighted {
        weighted_k(&pts, field, &radii, edge)?.with_analytic_bands(area, field.total(), BAND_LEVEL)?
    } else {
        ripley_k(&pts, field.grid(), &radii, edge)?.with_analytic_bands(area, pts.len() as f64, BAND_LEVEL)?
    })
}

fn k(a: &KArgs) -> Result<()> {
    let mut m = RunManifest::new("k", None, serde_json::to_value(a)?);
    let forecast = load_forecast(&mut m, &a.field.forecast)?;
    let field = build_field(&forecast, &a.field)?;
    let (cat, filter) = load_catalog(&mut m, &a.catalog, &forecast, a.field.mag_min)?;
    let curve = k_curve(a, &field, &cat)?;
    let mut summary = curve_summary(&curve);
    summary["n_points"] = json!(cat.len());
    summary["filter"] = json!(filter);
    if let Some(path) = &a.svg {
        let title = if a.weighted { "Weighted centered L" } else { "Centered L" };
        write_with_manifest(path, &svg::l_curve(&curve, title), &m)?;
    }
    emit(a.out.out.as_deref(), &curve.to_csv(), &m, &summary)
}

fn check_k_flags(a: &TransformArgs) -> Result<()> {
    if a.k.is_some() {
        return Err(usage(
            "--k is ambiguous; use --k-count (expected retained events, thin-approx) \
             or --k-rate (events per square degree, superthin)",
        ));
    }
    match a.kind {
        TransformKind::ThinApprox => {
            if a.k_count.is_none() {
                return Err(usage("--kind thin-approx needs --k-count"));
            }
            if a.k_rate.is_some() {
                return Err(usage("--k-rate applies to superthin; thin-approx takes --k-count"));
            }
        }
        TransformKind::Superthin => {
            if a.k_count.is_some() {
                return Err(usage("--k-count applies to thin-approx; superthin takes --k-rate"));
            }
        }
        _ => {
            if a.k_count.is_some() || a.k_rate.is_some() {
                return Err(usage("--k-count/--k-rate only apply to thin-approx/superthin"));
            }
        }
    }
    if a.assess && a.out.out.is_none() {
        return Err(usage("--assess writes an assessment CSV next to --out; give --out"));
    }
    if a.kind == TransformKind::Rescale && a.assess && a.analytic {
        return Err(usage("rescaled residuals are assessed with simulation envelopes only; drop --analytic"));
    }
    Ok(())
}

fn residual_set(a: &TransformArgs, field: &IntensityField, cat: &Catalog) -> Result<ResidualSet> {
    let stream = SeededStream::new(a.seed, 0);
    Ok(match a.kind {
        TransformKind::Rescale => rescale(cat, field, RescaleAxis::Horizontal)?,
        TransformKind::Thin => thin_exact(cat, field, stream)?,
        TransformKind::ThinApprox => thin_approx(cat, field, a.k_count.expect("checked"), stream)?,
        TransformKind::Superpose => superpose(cat, field, stream)?,
        TransformKind::Superthin => super_thin(cat, field, a.k_rate, stream)?,
    })
}

fn set_summary(set: &ResidualSet) -> Value {
    json!({
        "transform": set.transform,
        "points": set.len(),
        "retained": set.count(Label::Retained),
        "simulated": set.count(Label::Simulated),
        "simulated_fraction": set.simulated_fraction(),
        "null_rate": set.null_rate,
        "region_area": set.region.area(),
        "clamped": set.clamped,
        "notes": set.notes,
    })
}

fn set_svg(set: &ResidualSet, title: &str) -> String {
    let pick = |l: Label| -> Vec<(f64, f64)> { set.points.iter().filter(|p| p.label == l).map(|p| (p.x, p.y)).collect() };
    let keep_aspect = matches!(set.region, ResidualRegion::Grid(_));
    svg::point_map(&set.region.bounding_box(), &pick(Label::Retained), &pick(Label::Simulated), keep_aspect, title)
}

fn transform(a: &TransformArgs) -> Result<()> {
    check_k_flags(a)?;
    let mut m = RunManifest::new("transform", Some(a.seed), serde_json::to_value(a)?);
    let forecast = load_forecast(&mut m, &a.field.forecast)?;
    let field = build_field(&forecast, &a.field)?;
    let (cat, filter) = load_catalog(&mut m, &a.catalog, &forecast, a.field.mag_min)?;
    let set = residual_set(a, &field, &cat)?;
    let mut summary = set_summary(&set);
    summary["filter"] = json!(filter);
    if a.kind == TransformKind::Superthin && a.k_rate.is_none() {
        summary["k_rate_default"] = json!(default_k_rate(&field));
    }
    let title = format!("{} residuals", set.transform.as_str());
    if let Some(path) = &a.svg {
        write_with_manifest(path, &set_svg(&set, &title), &m)?;
    }
    if let (Some(out), ResidualRegion::Rescaled(region)) = (&a.out.out, &set.region) {
        write_with_manifest(&derived(out, "region"), &region.to_csv(), &m)?;
    }
    if a.assess {
        let bands = if a.analytic { BandMethod::Analytic } else { BandMethod::Envelope { n_sims: a.sims } };
        let radii = radii_of(&a.radii)?;
        let curve = assess_homogeneity(&set, &radii, bands, edge_of(a.radii.edge), BAND_LEVEL, SeededStream::new(a.seed, 1))?;
        let out = a.out.out.as_ref().expect("checked");
        write_with_manifest(&derived(out, "assess"), &curve.to_csv(), &m)?;
        if let Some(path) = &a.svg {
            write_with_manifest(&derived(path, "assess"), &svg::l_curve(&curve, &format!("{title}: centered L")), &m)?;
        }
        summary["assessment"] = curve_summary(&curve);
    }
    emit(a.out.out.as_deref(), &set.to_csv(), &m, &summary)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut m = RunManifest::new("simulate", Some(a.seed), serde_json::to_value(a)?);
    let forecast = load_forecast(&mut m, &a.field.forecast)?;
    let field = build_field(&forecast, &a.field)?;
    let mut window = forecast.window.unwrap_or_else(nominal_window);
    let span = (window.end - window.start).num_milliseconds() as f64;
    window.end = window.start + Duration::milliseconds((span * a.field.window_fraction).round() as i64);
    let events = simulate_catalog(&field, SeededStream::new(a.seed, 0));
    let catalog = to_catalog(&events, &window, a.field.mag_min);
    let summary = json!({"events": catalog.len(), "expected": field.total()});
    emit(a.out.out.as_deref(), &catalog.to_csv(), &m, &summary)
}

fn report(a: &ReportArgs) -> Result<()> {
    let dir = a.out.out.as_ref().ok_or_else(|| usage("report writes a directory; give --out"))?;
    let mut m = RunManifest::new("report", Some(a.seed), serde_json::to_value(a)?);
    let forecast = load_forecast(&mut m, &a.field.forecast)?;
    let field = build_field(&forecast, &a.field)?;
    let (cat, filter) = load_catalog(&mut m, &a.catalog, &forecast, a.field.mag_min)?;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    };
    let events: Vec<(f64, f64)> = cat.events().iter().map(|e| (e.lon, e.lat)).collect();
    let mut summary = json!({"filter": filter, "expected": field.total(), "n_obs": cat.len()});

    let n = n_test(&field, &cat, a.sims, SeededStream::new(a.seed, 0), Method::Simulation)?;
    let l = l_test(&field, &cat, a.sims, SeededStream::new(a.seed, 1))?;
    let n_json = score_json(&n, json!({"n_obs": n.observed_stat, "expected": field.total()}));
    let l_json = score_json(&l, json!({"observed_log_likelihood": num(l.observed_stat)}));
    write("ntest.json", &pretty(&n_json))?;
    write("ltest.json", &pretty(&l_json))?;
    summary["ntest"] = n_json;
    summary["ltest"] = l_json;

    for (name, map) in [("raw", raw_residuals(&field, &cat)), ("pearson", pearson_residuals(&field, &cat))] {
        write(&format!("{name}.csv"), &map.to_csv())?;
        write(&format!("{name}.svg"), &svg::pixel_map(&map, &events, &format!("{name} residuals")))?;
        summary[name] = resid_summary(&map, &filter);
    }

    let radii = radii_of(&a.radii)?;
    let edge = edge_of(a.radii.edge);
    let k_args = KArgs {
        field: a.field.clone(),
        catalog: a.catalog.clone(),
        weighted: true,
        radii: a.radii.clone(),
        out: a.out.clone(),
        svg: None,
    };
    summary["weighted_k"] = match k_curve(&k_args, &field, &cat) {
        Ok(curve) => {
            write("weighted_k.csv", &curve.to_csv())?;
            write("weighted_k.svg", &svg::l_curve(&curve, "Weighted centered L"))?;
            curve_summary(&curve)
        }
        Err(e) => json!({"skipped": format!("{e:#}")}),
    };

    let set = super_thin(&cat, &field, None, SeededStream::new(a.seed, 2))?;
    write("superthin.csv", &set.to_csv())?;
    write("superthin.svg", &set_svg(&set, "superthin residuals"))?;
    let mut st = set_summary(&set);
    match assess_homogeneity(&set, &radii, BandMethod::Envelope { n_sims: a.sims }, edge, BAND_LEVEL, SeededStream::new(a.seed, 3)) {
        Ok(curve) => {
            write("superthin_assess.csv", &curve.to_csv())?;
            write("superthin_assess.svg", &svg::l_curve(&curve, "superthin residuals: centered L"))?;
            st["assessment"] = curve_summary(&curve);
        }
        Err(e) => st["assessment"] = json!({"skipped": format!("{e:#}")}),
    }
    summary["superthin"] = st;

    write("report.json", &pretty(&summary))?;
    write("manifest.json", &pretty(&serde_json::to_value(m.stamped())?))?;
    print!("{}", pretty(&summary));
    Ok(())
}
