use std::fs;
use std::path::Path;
use std::process::Command;

use greenlight::recipe::{dli, LightingRecipe};
use greenlight::simulator::write_weather_csv;
use greenlight::synth::{generate, SynthConfig};
use greenlight::tariff::PriceSeries;
use serde_json::Value;
use tempfile::TempDir;

const WEEK: &str = "[synthetic]\nhistory_days = 2\n[period]\ndays = 7\n";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn greenlight(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_greenlight"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Run {
    let r = greenlight(dir, args);
    assert_eq!(r.code, 0, "{args:?}\nstdout:\n{}\nstderr:\n{}", r.stdout, r.stderr);
    r
}

fn config(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Columns of the CSV table embedded in an SVG chart.
fn svg_columns(path: &Path) -> Vec<(String, Vec<f64>)> {
    let svg = fs::read_to_string(path).unwrap();
    let start = svg.find("<!-- data\n").expect("data comment") + "<!-- data\n".len();
    let end = start + svg[start..].find("-->").unwrap();
    assert!(!svg[start..end].contains("--"));
    let mut lines = svg[start..end].lines();
    let mut cols: Vec<(String, Vec<f64>)> =
        lines.next().unwrap().split(',').skip(1).map(|n| (n.to_string(), Vec::new())).collect();
    for line in lines {
        for (j, cell) in line.split(',').skip(1).enumerate() {
            cols[j].1.push(cell.parse().unwrap());
        }
    }
    cols
}

#[test]
fn simulate_is_byte_for_byte_repeatable() {
    let dir = TempDir::new().unwrap();
    config(dir.path(), "run.toml", WEEK);
    ok(dir.path(), &["--config", "run.toml", "--out", "a", "simulate"]);
    ok(dir.path(), &["--config", "run.toml", "--out", "b", "simulate"]);
    for f in ["energy.csv", "costs.csv", "recipe.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs between runs");
    }
    let recipe = LightingRecipe::read_csv(fs::File::open(dir.path().join("a/recipe.csv")).unwrap()).unwrap();
    assert!((dli(&recipe) - 15.0336).abs() < 1e-9);
    let energy = fs::read_to_string(dir.path().join("a/energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 1 + 7 * 24);

    let m = json(&dir.path().join("a/manifest-simulate.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["files"].as_array().unwrap().len(), 3);
    let mb = json(&dir.path().join("b/manifest-simulate.json"));
    assert_ne!(m["config_hash"], mb["config_hash"], "the output directory is part of the config");
}

#[test]
fn seed_changes_the_synthetic_data() {
    let dir = TempDir::new().unwrap();
    config(dir.path(), "run.toml", "[synthetic]\nhistory_days = 0\n[period]\ndays = 1\n");
    ok(dir.path(), &["--config", "run.toml", "--out", "a", "simulate"]);
    ok(dir.path(), &["--config", "run.toml", "--out", "b", "--seed", "8", "simulate"]);
    let a = fs::read(dir.path().join("a/costs.csv")).unwrap();
    let b = fs::read(dir.path().join("b/costs.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(json(&dir.path().join("b/manifest-simulate.json"))["seed"], 8);
}

#[test]
fn config_problems_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    config(p, "bad.toml", "seed = \"seven\"\n");
    config(p, "unknown.toml", "[period]\nday = 3\n");
    config(p, "missing.toml", "[paths]\nweather = \"w.csv\"\nmarket = \"nope.csv\"\n");
    fs::write(p.join("w.csv"), "timestamp\n").unwrap();
    config(p, "half.toml", "[paths]\nweather = \"w.csv\"\n");
    config(p, "bounds.toml", "[bounds]\nppfd_min = 500.0\nppfd_max = 100.0\n");
    for c in ["bad.toml", "unknown.toml", "missing.toml", "half.toml", "bounds.toml", "absent.toml"] {
        let r = greenlight(p, &["--config", c, "simulate"]);
        assert_eq!(r.code, 2, "{c}: {}", r.stderr);
        assert!(r.stderr.contains("config error"), "{c}: {}", r.stderr);
    }
    assert_eq!(greenlight(p, &["--mode", "crystal-ball", "optimize"]).code, 2);
    assert_eq!(greenlight(p, &["frobnicate"]).code, 2);
    config(p, "tf.toml", WEEK);
    let r = greenlight(p, &["--config", "tf.toml", "--mode", "transformer", "optimize"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("greenlight train"));
}

fn write_inputs(dir: &Path, drop_weather_row: Option<usize>) {
    let d = generate(&SynthConfig {
        history_days: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut weather = d.weather;
    weather.truncate(24 * 6);
    if let Some(i) = drop_weather_row {
        weather.remove(i);
    }
    let mut buf = Vec::new();
    write_weather_csv(&weather, &mut buf).unwrap();
    fs::write(dir.join("weather.csv"), buf).unwrap();
    let mut buf = Vec::new();
    let mut market = d.market;
    market.truncate(24 * 6);
    PriceSeries::from_points(market).unwrap().write_csv(&mut buf).unwrap();
    fs::write(dir.join("market.csv"), buf).unwrap();
    config(dir, "files.toml", "[paths]\nweather = \"weather.csv\"\nmarket = \"market.csv\"\n");
}

#[test]
fn csv_inputs_are_read() {
    let dir = TempDir::new().unwrap();
    write_inputs(dir.path(), None);
    ok(dir.path(), &["--config", "files.toml", "simulate"]);
    // the default period starts after two days of history and runs to the end
    let m = json(&dir.path().join("out/manifest-simulate.json"));
    assert_eq!(m["metrics"]["first_day"], "2023-01-01T00:00:00");
    assert_eq!(m["metrics"]["days"], 4);
}

#[test]
fn a_weather_gap_exits_with_3() {
    let dir = TempDir::new().unwrap();
    write_inputs(dir.path(), Some(60));
    let r = greenlight(dir.path(), &["--config", "files.toml", "simulate"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("data error"));
}

#[test]
fn too_short_a_period_exits_with_3() {
    let dir = TempDir::new().unwrap();
    config(dir.path(), "run.toml", "[synthetic]\nhistory_days = 0\n[period]\nstart = \"2023-12-30\"\ndays = 5\n");
    assert_eq!(greenlight(dir.path(), &["--config", "run.toml", "simulate"]).code, 3);
    config(dir.path(), "p.toml", "[synthetic]\nhistory_days = 0\n[period]\ndays = 2\n");
    let r = greenlight(dir.path(), &["--config", "p.toml", "--mode", "persistence", "optimize"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn optimize_writes_a_consistent_report() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    config(p, "run.toml", WEEK);
    let r = ok(p, &["--config", "run.toml", "optimize"]);
    assert!(r.stdout.contains("0 repaired days, 0 recipe violations"), "{}", r.stdout);
    let out = p.join("out");

    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3, "header, January, annual");
    let m = json(&out.join("manifest-optimize.json"));
    assert_eq!(m["mode"], "oracle");
    assert!(m["metrics"]["cost_reduction_pct"].as_f64().unwrap() > 0.0);
    assert!(m["metrics"]["energy_mwh"]["optimized"].as_f64().unwrap() <= m["metrics"]["energy_mwh"]["baseline"].as_f64().unwrap());
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }

    let mut recipes: Vec<_> = fs::read_dir(out.join("recipes")).unwrap().map(|e| e.unwrap().path()).collect();
    recipes.sort();
    assert_eq!(recipes.len(), 7);
    assert!(recipes[0].ends_with("2023-01-01.csv"));
    let mut lit = Vec::new();
    for path in &recipes {
        let r = LightingRecipe::read_csv(fs::File::open(path).unwrap()).unwrap();
        assert!((dli(&r) - 12.96).abs() < 1e-4, "{}: {}", path.display(), dli(&r));
        lit.extend_from_slice(r.artificial());
    }
    let chart = svg_columns(&out.join("plots/recipe.svg"));
    assert_eq!(chart[1].0, "optimized");
    assert_eq!(chart[1].1.len(), lit.len());
    for (a, b) in chart[1].1.iter().zip(&lit) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
    for svg in ["price.svg", "solar.svg", "energy.svg"] {
        let cols = svg_columns(&out.join("plots").join(svg));
        assert_eq!(cols.len(), 2);
        assert!(cols.iter().all(|c| c.1.len() == 7 * 24));
    }
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 7 * 24);

    let r = ok(p, &["--config", "run.toml", "report"]);
    assert!(r.stdout.contains("| Annual |"));
    assert!(out.join("report.md").is_file());

    let tampered: String = report
        .lines()
        .map(|line| {
            if line.starts_with("Annual") {
                let mut cells: Vec<&str> = line.split(',').collect();
                cells[14] = "99.000000";
                cells.join(",")
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(out.join("report.csv"), tampered + "\n").unwrap();
    let r = greenlight(p, &["--config", "run.toml", "report"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn report_without_a_run_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let r = greenlight(dir.path(), &["report"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn training_is_repeatable_and_feeds_the_transformer_mode() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    config(
        p,
        "run.toml",
        "[synthetic]\nhistory_days = 20\n[period]\ndays = 2\n[forecaster]\nsize = \"reduced\"\n[forecaster.training]\nmax_epochs = 2\n",
    );
    ok(p, &["--config", "run.toml", "--out", "a", "train"]);
    ok(p, &["--config", "run.toml", "--out", "b", "train"]);
    for f in ["metrics_price.csv", "metrics_solar.csv", "models/price.glfc", "models/solar.glfc"] {
        let a = fs::read(p.join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(p.join("b").join(f)).unwrap(), "{f} differs between runs");
    }
    let report = json(&p.join("a/train_report.json"));
    assert!(report["price"]["test_rmse"].as_f64().unwrap().is_finite());
    assert_eq!(report["solar"]["history"].as_array().unwrap().len(), 2);

    ok(p, &["--config", "run.toml", "--out", "a", "--mode", "transformer", "forecast"]);
    let fc = fs::read_to_string(p.join("a/forecasts.csv")).unwrap();
    assert_eq!(fc.lines().count(), 1 + 2 * 24);
    let m = json(&p.join("a/forecast_metrics.json"));
    assert_eq!(m["mode"], "transformer");
    assert!(m["price"]["rmse"].as_f64().unwrap().is_finite());

    let r = ok(p, &["--config", "run.toml", "--out", "a", "--mode", "transformer", "optimize"]);
    assert!(r.stdout.contains("Transformer"));
    assert_eq!(json(&p.join("a/manifest-optimize.json"))["metrics"]["verify_issues"], 0);
}

#[test]
fn training_without_history_exits_with_3() {
    let dir = TempDir::new().unwrap();
    config(dir.path(), "run.toml", "[synthetic]\nhistory_days = 2\n[period]\ndays = 1\n");
    assert_eq!(greenlight(dir.path(), &["--config", "run.toml", "train"]).code, 3);
}
