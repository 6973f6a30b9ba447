use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const WINDOW: &str = "# window: 2006-01-01T00:00:00Z 2011-01-01T00:00:00Z\n";

fn quakeres(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quakeres")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// `n×n` grid of 0.1° pixels starting at (-120, 35); one magnitude bin per
/// pixel with rate `rate(i, j)`.
fn forecast(n: usize, rate: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::from(WINDOW);
    for i in 0..n {
        for j in 0..n {
            let x = -120.0 + 0.1 * i as f64;
            let y = 35.0 + 0.1 * j as f64;
            s += &format!("{x:.1} {:.1} {y:.1} {:.1} 0 30 4.95 5.05 {} 1\n", x + 0.1, y + 0.1, rate(i, j));
        }
    }
    s
}

fn catalog(points: &[(f64, f64)]) -> String {
    let mut s = String::from("time,lon,lat,depth,mag\n");
    for (k, (x, y)) in points.iter().enumerate() {
        s += &format!("2007-01-{:02}T00:00:00Z,{x},{y},5,5.0\n", k % 28 + 1);
    }
    s
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn put(&self, name: &str, text: &str) -> &Self {
        fs::write(self.dir.path().join(name), text).unwrap();
        self
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        quakeres(args, self.dir.path())
    }
}

fn scattered(n: usize) -> Vec<(f64, f64)> {
    // Deterministic, well spread points inside the 10×10 fixture grid.
    (0..n)
        .map(|k| {
            let u = (k as f64 * 0.618_033_988_75).fract();
            let v = (k as f64 * 0.754_877_666_25 + 0.1).fract();
            (-120.0 + 0.995 * u, 35.0 + 0.995 * v)
        })
        .collect()
}

fn standard() -> Fixture {
    let f = Fixture::new();
    f.put("f.dat", &forecast(10, |i, j| 0.2 + 0.05 * (i + j) as f64));
    f.put("cat.csv", &catalog(&scattered(60)));
    f
}

const MAG: [&str; 2] = ["--mag-min", "4.95"];

#[test]
fn exit_codes() {
    let f = standard();
    f.put("one.csv", &catalog(&[(-119.95, 35.05)]));
    let code = |args: &[&str]| f.run(args).status.code();
    assert_eq!(code(&["ntest", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95"]), Some(0));
    assert_eq!(code(&["ntest", "--forecast", "missing.dat", "--catalog", "cat.csv"]), Some(3));
    assert_eq!(code(&["ntest", "--forecast", "f.dat"]), Some(2));
    assert_eq!(code(&["ntest", "--bogus"]), Some(2));
    assert_eq!(code(&["resid", "--kind", "deviance", "--forecast-a", "f.dat", "--catalog", "cat.csv"]), Some(2));
    assert_eq!(code(&["k", "--forecast", "f.dat", "--catalog", "one.csv", "--mag-min", "4.95"]), Some(3));
    assert_eq!(code(&["transform", "--kind", "thin-approx", "--forecast", "f.dat", "--catalog", "cat.csv"]), Some(2));
    assert_eq!(code(&["report", "--forecast", "f.dat", "--catalog", "cat.csv"]), Some(2));
}

#[test]
fn bare_k_is_a_usage_error() {
    let f = standard();
    let o = f.run(&["transform", "--kind", "superthin", "--k", "3", "--forecast", "f.dat", "--catalog", "cat.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--k-count") && err.contains("--k-rate"), "{err}");
}

#[test]
fn same_seed_same_bytes() {
    let f = standard();
    let args = |out: &'static str| {
        vec!["transform", "--kind", "superthin", "--forecast", "f.dat", "--catalog", "cat.csv", "--seed", "11", "--out", out]
    };
    for out in ["a.csv", "b.csv"] {
        let mut a = args(out);
        a.extend(MAG);
        assert!(f.run(&a).status.success());
    }
    assert_eq!(f.read("a.csv"), f.read("b.csv"));
    let mut c = args("c.csv");
    c[8] = "12";
    c.extend(MAG);
    assert!(f.run(&c).status.success());
    assert_ne!(f.read("a.csv"), f.read("c.csv"));

    let n = |seed: &str| {
        let o = f.run(&["ntest", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95", "--seed", seed]);
        serde_json::from_str::<Value>(&stdout(&o)).unwrap()["value"].clone()
    };
    assert_eq!(n("5"), n("5"));
}

#[test]
fn manifest_records_inputs_and_seed() {
    let f = standard();
    let o = f.run(&["simulate", "--forecast", "f.dat", "--seed", "9", "--out", "sim.csv", "--mag-min", "4.95"]);
    assert!(o.status.success());
    let m: Value = serde_json::from_str(&f.read("sim.csv.manifest.json")).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["timestamp"].is_string());
}

#[test]
fn raw_residuals_match_hand_counts() {
    let f = Fixture::new();
    f.put("f.dat", &forecast(2, |i, j| [0.5, 1.0, 2.0, 4.0][2 * i + j]));
    // Two events in the first pixel, one in the last.
    f.put("cat.csv", &catalog(&[(-119.95, 35.05), (-119.92, 35.08), (-119.85, 35.15)]));
    let o = f.run(&["resid", "--kind", "raw", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut values = [f64::NAN; 4];
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        values[cols[0].parse::<usize>().unwrap()] = cols[3].parse().unwrap();
    }
    // Pixel index is row-major with rows along latitude: (i, j) -> j*2 + i.
    let expected_counts = [2.0, 0.0, 0.0, 1.0];
    let rates = [0.5, 2.0, 1.0, 4.0];
    for p in 0..4 {
        assert!((values[p] - (expected_counts[p] - rates[p])).abs() < 1e-12, "pixel {p}: {}", values[p]);
    }
}

#[test]
fn identical_models_give_zero_deviance() {
    let f = standard();
    let o = f.run(&[
        "resid", "--kind", "deviance", "--forecast-a", "f.dat", "--forecast-b", "f.dat", "--catalog", "cat.csv",
        "--mag-min", "4.95", "--out", "d.csv",
    ]);
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["lr_score"].as_f64(), Some(0.0));
    for line in f.read("d.csv").lines().skip(1) {
        assert_eq!(line.split(',').nth(3).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn zero_forecast_simulates_nothing() {
    let f = Fixture::new();
    f.put("z.dat", &forecast(3, |_, _| 0.0));
    let o = f.run(&["simulate", "--forecast", "z.dat", "--mag-min", "4.95"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "time,lon,lat,depth,mag\n");
}

#[test]
fn simulated_catalog_round_trips_through_ntest() {
    let f = standard();
    assert!(f.run(&["simulate", "--forecast", "f.dat", "--mag-min", "4.95", "--out", "sim.csv"]).status.success());
    let o = f.run(&["ntest", "--forecast", "f.dat", "--catalog", "sim.csv", "--mag-min", "4.95", "--analytic"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let n = f.read("sim.csv").lines().count() - 1;
    assert_eq!(v["filter"]["kept"].as_u64(), Some(n as u64));
    assert_eq!(v["method"], "analytic");
}

fn upper_band_excess(f: &Fixture, forecast: &str) -> Vec<(f64, f64)> {
    let o = f.run(&["k", "--weighted", "--forecast", forecast, "--catalog", "cat.csv", "--mag-min", "4.95", "--rmax", "0.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
        .lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<f64> = line.split(',').take(5).map(|c| c.parse().unwrap()).collect();
            let r = cols[0];
            let upper_k = std::f64::consts::PI * (cols[4] + r).powi(2);
            (r, upper_k - std::f64::consts::PI * r * r)
        })
        .collect()
}

#[test]
fn band_width_halves_when_the_forecast_doubles() {
    let f = standard();
    f.put("u1.dat", &forecast(10, |_, _| 0.5));
    f.put("u2.dat", &forecast(10, |_, _| 1.0));
    let one = upper_band_excess(&f, "u1.dat");
    let two = upper_band_excess(&f, "u2.dat");
    for ((r, a), (_, b)) in one.iter().zip(&two) {
        assert!((b / a - 0.5).abs() < 1e-9, "r = {r}: {a} vs {b}");
    }
}

#[test]
fn report_writes_every_artifact() {
    let f = standard();
    let o = f.run(&[
        "report", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95", "--sims", "39", "--rmax", "0.2",
        "--out", "rep",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "ntest.json", "ltest.json", "raw.csv", "raw.svg", "pearson.csv", "pearson.svg", "weighted_k.csv",
        "weighted_k.svg", "superthin.csv", "superthin.svg", "superthin_assess.csv", "superthin_assess.svg",
        "manifest.json", "report.json",
    ] {
        assert!(f.path("rep").join(name).exists(), "{name}");
    }
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["n_obs"].as_u64(), Some(60));
}

#[test]
fn rescale_writes_its_region() {
    let f = standard();
    let o = f.run(&[
        "transform", "--kind", "rescale", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95", "--out",
        "r.csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(f.path("r.region.csv").exists());
    let bad = f.run(&[
        "transform", "--kind", "rescale", "--forecast", "f.dat", "--catalog", "cat.csv", "--assess", "--analytic",
        "--out", "r.csv",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

fn check_svg(text: &str) {
    let doc = roxmltree::Document::parse(text).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("viewBox"), Some("0 0 800 600"));
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("QUAKERES_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "{name} differs from its golden copy");
}

#[test]
fn svg_outputs_match_golden_files() {
    let f = Fixture::new();
    f.put("f.dat", &forecast(4, |i, j| 0.5 + 0.25 * i as f64 + 0.1 * j as f64));
    f.put("cat.csv", &catalog(&[(-119.95, 35.05), (-119.83, 35.12), (-119.71, 35.33), (-119.64, 35.02), (-119.77, 35.26)]));
    let ok = |args: &[&str]| {
        let o = f.run(args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["resid", "--kind", "pearson", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95", "--svg", "p.svg"]);
    ok(&["k", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95", "--rmax", "0.2", "--svg", "k.svg"]);
    ok(&[
        "transform", "--kind", "superpose", "--forecast", "f.dat", "--catalog", "cat.csv", "--mag-min", "4.95",
        "--seed", "4", "--svg", "t.svg",
    ]);
    for (file, gold) in [("p.svg", "pearson_map.svg"), ("k.svg", "centered_l.svg"), ("t.svg", "superpose_points.svg")] {
        let text = f.read(file);
        check_svg(&text);
        golden(gold, &text);
    }
}
