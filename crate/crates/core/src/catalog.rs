//! Event catalogs: CSV with header `time,lon,lat,depth,mag`, times in
//! ISO-8601 UTC.

use std::fmt::Write as _;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{parse_number, Forecast};

pub const CATALOG_HEADER: &str = "time,lon,lat,depth,mag";
pub const DEFAULT_DEPTH_MAX: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: DateTime<Utc>,
    pub lon: f64,
    pub lat: f64,
    /// km
    pub depth: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    events: Vec<Event>,
}

impl Catalog {
    /// Sorts by time (stable, so equal times keep input order).
    pub fn new(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| e.time);
        Self { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Epicenters as `(lon, lat)`.
    pub fn locations(&self) -> Vec<(f64, f64)> {
        self.events.iter().map(|e| (e.lon, e.lat)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * (self.events.len() + 1));
        out.push_str(CATALOG_HEADER);
        out.push('\n');
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.time.to_rfc3339_opts(SecondsFormat::AutoSi, true),
                e.lon,
                e.lat,
                e.depth,
                e.magnitude
            );
        }
        out
    }
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    // Timestamps without an offset are taken as UTC.
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

/// Parses catalog CSV. Rows out of time order are sorted, not rejected.
pub fn parse_catalog(text: &str) -> Result<Catalog> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != ["time", "lon", "lat", "depth", "mag"] {
        if text.trim().is_empty() {
            return Err(Error::Parse { line: 1, message: format!("missing header {CATALOG_HEADER:?}") });
        }
        return Err(Error::Parse { line: 1, message: format!("expected header {CATALOG_HEADER:?}, got {:?}", got.join(",")) });
    }
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 5 {
            return Err(Error::Parse { line, message: format!("expected 5 fields, found {}", record.len()) });
        }
        let time = parse_time(&record[0])
            .ok_or_else(|| Error::Parse { line, message: format!("unparseable timestamp {:?}", &record[0]) })?;
        let mut v = [0.0; 4];
        for (i, name) in ["lon", "lat", "depth", "mag"].iter().enumerate() {
            v[i] = parse_number(&record[i + 1])
                .ok_or_else(|| Error::Parse { line, message: format!("bad {name} value {:?}", &record[i + 1]) })?;
        }
        events.push(Event { time, lon: v[0], lat: v[1], depth: v[2], magnitude: v[3] });
    }
    Ok(Catalog::new(events))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogFilter {
    pub mag_min: f64,
    pub depth_max: f64,
}

impl CatalogFilter {
    pub fn new(mag_min: f64) -> Self {
        Self { mag_min, depth_max: DEFAULT_DEPTH_MAX }
    }
}

/// Counts of events dropped by each filter stage (first failing stage wins).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub below_magnitude: usize,
    pub outside_window: usize,
    pub too_deep: usize,
    pub outside_region: usize,
}

/// Keeps events with magnitude >= `mag_min`, depth <= 30 km, inside the
/// forecast window (when the forecast has one), and inside an active pixel
/// with at least one forecast bin.
pub fn filter_catalog(catalog: &Catalog, forecast: &Forecast, mag_min: f64) -> Catalog {
    filter_catalog_with(catalog, forecast, &CatalogFilter::new(mag_min)).0
}

pub fn filter_catalog_with(catalog: &Catalog, forecast: &Forecast, filter: &CatalogFilter) -> (Catalog, FilterReport) {
    let grid = &forecast.grid;
    let mut has_bin = vec![false; grid.n_pixels()];
    for b in &forecast.bins {
        has_bin[b.pixel_index] = true;
    }
    let mut report = FilterReport { input: catalog.len(), ..Default::default() };
    let mut kept = Vec::new();
    for e in catalog.events() {
        if !(e.magnitude >= filter.mag_min) {
            report.below_magnitude += 1;
        } else if forecast.window.is_some_and(|w| !w.contains(e.time)) {
            report.outside_window += 1;
        } else if !(e.depth <= filter.depth_max) {
            report.too_deep += 1;
        } else if !grid.active_pixel_of(e.lon, e.lat).is_some_and(|p| has_bin[p]) {
            report.outside_region += 1;
        } else {
            kept.push(e.clone());
        }
    }
    report.kept = kept.len();
    (Catalog::new(kept), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::parse_forecast;

    const TWO_PIXELS: &str = "# window: 2006-01-01T00:00:00Z 2009-09-01T00:00:00Z\n\
        -115.4 -115.3 32.4 32.5 0 30 3.95 4.05 0.1 1\n\
        -115.3 -115.2 32.4 32.5 0 30 3.95 4.05 0.1 1\n";

    #[test]
    fn single_event() {
        let c = parse_catalog("time,lon,lat,depth,mag\n2006-01-02T03:04:05Z,\u{2212}115.3,32.4,6.0,4.2\n").unwrap();
        assert_eq!(c.len(), 1);
        let e = &c.events()[0];
        assert_eq!(e.lon, -115.3);
        assert_eq!(e.magnitude, 4.2);
        assert_eq!(e.time.to_rfc3339(), "2006-01-02T03:04:05+00:00");
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let c = parse_catalog(
            "time,lon,lat,depth,mag\n2007-01-01T00:00:00Z,0,0,1,4\n2006-01-01T00:00:00Z,1,1,1,5\n",
        )
        .unwrap();
        assert_eq!(c.events()[0].lon, 1.0);
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let err = parse_catalog("time,lon,lat,depth,mag\n2006-01-01T00:00:00Z,0,0,1,4\nyesterday,0,0,1,4\n")
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wrong_header() {
        assert!(parse_catalog("t,x,y,z,m\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "time,lon,lat,depth,mag\n2006-01-02T03:04:05.250Z,-115.3,32.4,6,4.2\n";
        let c = parse_catalog(text).unwrap();
        assert_eq!(c.to_csv(), text);
    }

    #[test]
    fn all_inside_is_identity() {
        let f = parse_forecast(TWO_PIXELS).unwrap();
        let c = parse_catalog(
            "time,lon,lat,depth,mag\n2007-01-01T00:00:00Z,-115.35,32.45,5,4.0\n2008-01-01T00:00:00Z,-115.25,32.41,5,4.5\n",
        )
        .unwrap();
        assert_eq!(filter_catalog(&c, &f, 3.95), c);
    }

    #[test]
    fn filter_stages_are_counted() {
        let f = parse_forecast(TWO_PIXELS).unwrap();
        let c = parse_catalog(
            "time,lon,lat,depth,mag\n\
             2007-01-01T00:00:00Z,-115.35,32.45,5,3.0\n\
             2010-01-01T00:00:00Z,-115.35,32.45,5,4.0\n\
             2007-01-01T00:00:00Z,-115.35,32.45,45,4.0\n\
             2007-01-01T00:00:00Z,-110.0,32.45,5,4.0\n\
             2007-01-01T00:00:00Z,-115.35,32.45,5,4.0\n",
        )
        .unwrap();
        let (out, report) = filter_catalog_with(&c, &f, &CatalogFilter::new(3.95));
        assert_eq!(out.len(), 1);
        assert_eq!(
            report,
            FilterReport { input: 5, kept: 1, below_magnitude: 1, outside_window: 1, too_deep: 1, outside_region: 1 }
        );
    }

    #[test]
    fn shared_edge_counts_once() {
        let f = parse_forecast(TWO_PIXELS).unwrap();
        let c = parse_catalog("time,lon,lat,depth,mag\n2007-01-01T00:00:00Z,-115.3,32.45,5,4.0\n").unwrap();
        let out = filter_catalog(&c, &f, 3.95);
        assert_eq!(out.len(), 1);
        assert_eq!(f.grid.active_pixel_of(-115.3, 32.45), Some(1));
    }

    #[test]
    fn filtering_is_idempotent() {
        let f = parse_forecast(TWO_PIXELS).unwrap();
        let c = parse_catalog(
            "time,lon,lat,depth,mag\n2007-01-01T00:00:00Z,-115.35,32.45,5,3.0\n2007-03-01T00:00:00Z,-115.25,32.45,5,4.1\n",
        )
        .unwrap();
        let once = filter_catalog(&c, &f, 3.95);
        assert_eq!(filter_catalog(&once, &f, 3.95), once);
    }
}
