use std::fs::File;
use std::io::BufReader;

use greenlight::forecast::checkpoint;
use greenlight::forecast::train::write_metrics_csv;
use greenlight::forecast::{mae, rmse, FeatureTable, ForecastMode, Forecaster, Target};
use greenlight::mpc::StepDiagnostics;
use greenlight::pipeline::{bill, run_year, simulate_hours, ForecastSource, YearData};
use greenlight::recipe::{dli, validate, LightingRecipe};
use greenlight::simulator::{hourly_artificial, SimulationOutput};
use greenlight::tariff::{reduction_pct, CostBreakdown};
use greenlight::timeseries::format_timestamp;
use serde_json::json;

use crate::config::Loaded;
use crate::data::{load_series, year_data, HISTORY_HOURS};
use crate::error::CliError;
use crate::manifest::Outputs;
use crate::plot::{line_chart, Series};

/// Days shown in the plots.
const PLOT_DAYS: usize = 14;
/// Allowed drift between stored and recomputed reductions, percentage points.
const REPORT_TOLERANCE_PP: f64 = 0.01;
/// Training needs at least this many days before the evaluated period.
const MIN_TRAIN_DAYS: usize = 10;

fn load_period(loaded: &Loaded) -> Result<YearData, CliError> {
    year_data(loaded, load_series(loaded)?)
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn write_costs(costs: &[CostBreakdown], buf: &mut Vec<u8>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(buf);
    for c in costs {
        w.serialize(c).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn write_energy(sim: &SimulationOutput, buf: &mut Vec<u8>) -> Result<(), CliError> {
    Ok(sim.write_energy_csv(buf)?)
}

fn totals(costs: &[CostBreakdown]) -> (f64, f64, f64) {
    let cost = costs.iter().map(|c| c.total).sum();
    let kwh = costs.iter().map(|c| c.energy_kwh).sum();
    let peak = costs.iter().map(|c| c.peak_kw).fold(0.0, f64::max);
    (cost, kwh, peak)
}

/// Simulates a fixed daily recipe over the period and bills it.
pub fn simulate(loaded: &Loaded) -> Result<(), CliError> {
    let recipe = match loaded.recipe_path() {
        Some(p) => {
            let f = File::open(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            LightingRecipe::read_csv(BufReader::new(f)).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => LightingRecipe::baseline(),
    };
    let violations = validate(&recipe, &loaded.config.bounds);
    for v in &violations {
        eprintln!("warning: recipe violates {}: {v:?}", v.constraint());
    }
    let data = load_period(loaded)?;
    let cfg = loaded.pipeline();
    let day = hourly_artificial(std::slice::from_ref(&recipe));
    let ppfd: Vec<f64> = (0..data.days).flat_map(|_| day.iter().copied()).collect();
    let sim = simulate_hours(&cfg, &data, &ppfd)?;
    let costs = bill(&cfg, &data, &sim)?;

    let mut out = Outputs::create(loaded.out_dir())?;
    out.write("energy.csv", |b| write_energy(&sim, b))?;
    out.write("costs.csv", |b| write_costs(&costs, b))?;
    out.write("recipe.csv", |b| recipe.write_csv(b).map_err(csv_err))?;
    let (cost, kwh, peak) = totals(&costs);
    let metrics = json!({
        "days": data.days,
        "first_day": format_timestamp(&data.day_start(0)),
        "recipe_dli": dli(&recipe),
        "recipe_violations": violations.len(),
        "energy_kwh": kwh,
        "total_cost": cost,
        "peak_kw": peak,
        "shortfall_hours": sim.shortfall_hours(),
    });
    println!(
        "simulated {} days: {:.1} kWh, ${:.2}, peak {:.1} kW, DLI {:.4}, {} band shortfall hours",
        data.days,
        kwh,
        cost,
        peak,
        dli(&recipe),
        sim.shortfall_hours()
    );
    let m = out.finish("simulate", loaded, metrics)?;
    println!("wrote {}", m.display());
    Ok(())
}

/// Forecast source for the configured mode over `data`.
fn forecast_source(loaded: &Loaded, data: &YearData) -> Result<ForecastSource, CliError> {
    match loaded.config.mode {
        ForecastMode::Oracle => Ok(ForecastSource::Oracle),
        ForecastMode::Persistence => Ok(ForecastSource::Persistence),
        ForecastMode::Transformer => {
            loaded.require_models()?;
            if (data.start as i64) < HISTORY_HOURS {
                return Err(CliError::Data(format!(
                    "transformer forecasts need {HISTORY_HOURS} hours before the first day, {} available",
                    data.start
                )));
            }
            let price_model = load_model(&loaded.price_model_path(), Target::Price)?;
            let solar_model = load_model(&loaded.solar_model_path(), Target::Solar)?;
            let iqr = &loaded.config.forecaster.iqr;
            let price_table = FeatureTable::price(&data.market, &data.weather, iqr)?;
            let solar_table = FeatureTable::solar(&data.weather, iqr)?;
            let rows = data.start - 23..data.rows().end;
            let exec = loaded.execution();
            Ok(ForecastSource::Transformer {
                price: price_model.issue_all(&price_table, rows.clone(), exec)?,
                solar: solar_model.issue_all(&solar_table, rows, exec)?,
            })
        }
    }
}

fn load_model(path: &std::path::Path, target: Target) -> Result<Forecaster, CliError> {
    let f = checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if f.target != target {
        return Err(CliError::Config(format!(
            "{} holds a {} model, expected {}",
            path.display(),
            f.target.name(),
            target.name()
        )));
    }
    Ok(f)
}

fn write_diagnostics(days: &[(String, &[StepDiagnostics])], buf: &mut Vec<u8>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "day",
        "step",
        "objective",
        "gap",
        "nodes",
        "dli_committed",
        "peak_ra",
        "price_mae",
        "solar_mae",
        "verify_issues",
    ])
    .map_err(csv_err)?;
    for (day, steps) in days {
        for s in *steps {
            w.write_record([
                day.clone(),
                s.step.to_string(),
                s.objective.to_string(),
                s.gap.to_string(),
                s.nodes.to_string(),
                s.dli_committed.to_string(),
                s.peak_ra.to_string(),
                s.price_mae.to_string(),
                s.solar_mae.to_string(),
                s.verify_issues.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// Receding-horizon MPC over the period, compared with the baseline.
pub fn optimize(loaded: &Loaded) -> Result<(), CliError> {
    let data = load_period(loaded)?;
    let cfg = loaded.pipeline();
    let source = forecast_source(loaded, &data)?;
    let year = run_year(&cfg, &data, &source)?;

    let mut out = Outputs::create(loaded.out_dir())?;
    out.write("report.csv", |b| year.report.write_csv(b).map_err(csv_err))?;
    out.write_json("report.json", &year.report)?;
    let mut violations = 0;
    for day in &year.days {
        let recipe = day
            .recipe()
            .map_err(|e| CliError::Solver(format!("{}: {e}", format_timestamp(&day.start))))?;
        violations += validate(&recipe, &cfg.bounds).len();
        let name = format!("recipes/{}.csv", day.start.format("%Y-%m-%d"));
        out.write(&name, |b| recipe.write_csv(b).map_err(csv_err))?;
    }
    let diag: Vec<(String, &[StepDiagnostics])> = year
        .days
        .iter()
        .map(|d| (d.start.format("%Y-%m-%d").to_string(), d.result.steps.as_slice()))
        .collect();
    out.write("diagnostics.csv", |b| write_diagnostics(&diag, b))?;
    out.write("energy_baseline.csv", |b| write_energy(&year.baseline, b))?;
    out.write("energy_optimized.csv", |b| write_energy(&year.optimized, b))?;
    out.write("costs_baseline.csv", |b| write_costs(&year.baseline_costs, b))?;
    out.write("costs_optimized.csv", |b| write_costs(&year.optimized_costs, b))?;

    let shown = data.days.min(PLOT_DAYS);
    let hours = data.start..data.start + 24 * shown;
    let price_actual = data.prices()[hours.clone()].to_vec();
    let solar_actual = data.solar_ppfd(&cfg.greenhouse)[hours].to_vec();
    let days = &year.days[..shown];
    let price_fc: Vec<f64> = days.iter().flat_map(|d| d.price_forecast.iter().copied()).collect();
    let solar_fc: Vec<f64> = days.iter().flat_map(|d| d.solar_forecast.iter().copied()).collect();
    let base_ppfd: Vec<f64> = (0..shown).flat_map(|_| hourly_artificial(&[LightingRecipe::baseline()])).collect();
    let opt_ppfd: Vec<f64> = days.iter().flat_map(|d| d.result.schedule.artificial()).collect();
    let kwh = |s: &SimulationOutput| s.total_kwh()[..24 * shown].to_vec();
    let (base_kwh, opt_kwh) = (kwh(&year.baseline), kwh(&year.optimized));
    let x = "hour from the first day";
    let charts = [
        (
            "plots/price.svg",
            line_chart(
                "Market price, actual vs forecast at midnight",
                x,
                "$/kWh",
                &[Series { name: "actual", values: &price_actual }, Series { name: "forecast", values: &price_fc }],
            ),
        ),
        (
            "plots/solar.svg",
            line_chart(
                "Solar PPFD, actual vs forecast at midnight",
                x,
                "µmol/m²/s",
                &[Series { name: "actual", values: &solar_actual }, Series { name: "forecast", values: &solar_fc }],
            ),
        ),
        (
            "plots/recipe.svg",
            line_chart(
                "Artificial PPFD",
                x,
                "µmol/m²/s",
                &[Series { name: "baseline", values: &base_ppfd }, Series { name: "optimized", values: &opt_ppfd }],
            ),
        ),
        (
            "plots/energy.svg",
            line_chart(
                "Facility energy",
                x,
                "kWh",
                &[Series { name: "baseline", values: &base_kwh }, Series { name: "optimized", values: &opt_kwh }],
            ),
        ),
    ];
    for (name, svg) in &charts {
        out.write_bytes(name, svg.as_bytes())?;
    }

    let a = &year.report.annual;
    let repaired: Vec<String> = year.repaired_days().iter().map(format_timestamp).collect();
    let metrics = json!({
        "days": data.days,
        "first_day": format_timestamp(&data.day_start(0)),
        "mode": year.mode,
        "cost_reduction_pct": a.cost_reduction_pct,
        "energy_reduction_pct": a.energy_reduction_pct,
        "peak_reduction_pct": a.peak_reduction_pct,
        "total_cost_k": { "baseline": a.total_cost_k.0, "optimized": a.total_cost_k.1 },
        "energy_mwh": { "baseline": a.energy_mwh.0, "optimized": a.energy_mwh.1 },
        "peak_mw": { "baseline": a.peak_mw.0, "optimized": a.peak_mw.1 },
        "repaired_days": repaired,
        "recipe_violations": violations,
        "verify_issues": year.verify_issues(),
        "shortfall_hours": { "baseline": year.baseline.shortfall_hours(), "optimized": year.optimized.shortfall_hours() },
    });
    println!(
        "{} days, {:?} forecasts: cost {:.2}% lower, energy {:.2}% lower, peak {:.2}% lower",
        data.days, year.mode, a.cost_reduction_pct, a.energy_reduction_pct, a.peak_reduction_pct
    );
    println!(
        "{} repaired days, {} recipe violations, {} verification issues",
        repaired.len(),
        violations,
        year.verify_issues()
    );
    let m = out.finish("optimize", loaded, metrics)?;
    println!("wrote {}", m.display());
    Ok(())
}

/// Trains the price and solar models on the rows before the period.
pub fn train(loaded: &Loaded) -> Result<(), CliError> {
    let data = load_period(loaded)?;
    let h = data.start;
    if h < 24 * MIN_TRAIN_DAYS {
        return Err(CliError::Data(format!(
            "training needs at least {MIN_TRAIN_DAYS} days before the period start, {h} hours available"
        )));
    }
    let iqr = &loaded.config.forecaster.iqr;
    let tcfg = loaded.training();
    let price_table = FeatureTable::price(&data.market[..h], &data.weather[..h], iqr)?;
    let solar_table = FeatureTable::solar(&data.weather[..h], iqr)?;
    let (price, price_report) = Forecaster::fit(&price_table, loaded.config.forecaster.model(true), &tcfg)?;
    let (solar, solar_report) = Forecaster::fit(&solar_table, loaded.config.forecaster.model(false), &tcfg)?;

    let mut out = Outputs::create(loaded.out_dir())?;
    for (model, path) in [(&price, loaded.price_model_path()), (&solar, loaded.solar_model_path())] {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        checkpoint::save(model, &path)?;
        out.record(path);
    }
    out.write("metrics_price.csv", |b| write_metrics_csv(&price_report.history, b).map_err(CliError::from))?;
    out.write("metrics_solar.csv", |b| write_metrics_csv(&solar_report.history, b).map_err(CliError::from))?;
    let report = json!({ "price": price_report, "solar": solar_report });
    out.write_json("train_report.json", &report)?;
    for (name, r) in [("price", &price_report), ("solar", &solar_report)] {
        println!(
            "{name}: best epoch {} of {}, test RMSE {:.6} (persistence {:.6}), MAE {:.6} (persistence {:.6})",
            r.best_epoch,
            r.history.len(),
            r.test_rmse,
            r.persistence_test_rmse,
            r.test_mae,
            r.persistence_test_mae
        );
    }
    let metrics = json!({
        "training_rows": h,
        "price": { "test_rmse": price_report.test_rmse, "test_mae": price_report.test_mae,
                   "persistence_rmse": price_report.persistence_test_rmse, "best_epoch": price_report.best_epoch },
        "solar": { "test_rmse": solar_report.test_rmse, "test_mae": solar_report.test_mae,
                   "persistence_rmse": solar_report.persistence_test_rmse, "best_epoch": solar_report.best_epoch },
    });
    let m = out.finish("train", loaded, metrics)?;
    println!("wrote {}", m.display());
    Ok(())
}

/// Day-ahead forecasts issued at each midnight of the period.
pub fn forecast(loaded: &Loaded) -> Result<(), CliError> {
    let data = load_period(loaded)?;
    let cfg = loaded.pipeline();
    let source = forecast_source(loaded, &data)?;
    let prices = data.prices();
    let solar = data.solar_ppfd(&cfg.greenhouse);
    let mut price_fc = Vec::with_capacity(24 * data.days);
    let mut solar_fc = Vec::with_capacity(24 * data.days);
    for day in 0..data.days {
        let d0 = data.start + 24 * day;
        let (p, s) = source.forecast(&prices, &solar, d0, d0..d0 + 24, cfg.lambda, &cfg.greenhouse)?;
        price_fc.extend(p);
        solar_fc.extend(s);
    }
    let rows = data.rows();
    let (price_actual, solar_actual) = (&prices[rows.clone()], &solar[rows.clone()]);

    let mut out = Outputs::create(loaded.out_dir())?;
    out.write("forecasts.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["timestamp", "price_actual", "price_forecast", "solar_ppfd_actual", "solar_ppfd_forecast"])
            .map_err(csv_err)?;
        for (i, r) in rows.clone().enumerate() {
            w.write_record([
                format_timestamp(&data.weather[r].timestamp),
                price_actual[i].to_string(),
                price_fc[i].to_string(),
                solar_actual[i].to_string(),
                solar_fc[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)
    })?;
    let metrics = json!({
        "mode": loaded.config.mode,
        "days": data.days,
        "first_day": format_timestamp(&data.day_start(0)),
        "price": { "rmse": rmse(&price_fc, price_actual), "mae": mae(&price_fc, price_actual) },
        "solar_ppfd": { "rmse": rmse(&solar_fc, solar_actual), "mae": mae(&solar_fc, solar_actual) },
    });
    out.write_json("forecast_metrics.json", &metrics)?;
    let shown = 24 * data.days.min(PLOT_DAYS);
    let x = "hour from the first day";
    let price_svg = line_chart(
        "Market price, day-ahead forecast",
        x,
        "$/kWh",
        &[
            Series { name: "actual", values: &price_actual[..shown] },
            Series { name: "forecast", values: &price_fc[..shown] },
        ],
    );
    let solar_svg = line_chart(
        "Solar PPFD, day-ahead forecast",
        x,
        "µmol/m²/s",
        &[
            Series { name: "actual", values: &solar_actual[..shown] },
            Series { name: "forecast", values: &solar_fc[..shown] },
        ],
    );
    out.write_bytes("plots/forecast_price.svg", price_svg.as_bytes())?;
    out.write_bytes("plots/forecast_solar.svg", solar_svg.as_bytes())?;
    println!(
        "{} days: price RMSE {:.6}, MAE {:.6}; solar PPFD RMSE {:.3}, MAE {:.3}",
        data.days,
        metrics["price"]["rmse"].as_f64().unwrap_or(f64::NAN),
        metrics["price"]["mae"].as_f64().unwrap_or(f64::NAN),
        metrics["solar_ppfd"]["rmse"].as_f64().unwrap_or(f64::NAN),
        metrics["solar_ppfd"]["mae"].as_f64().unwrap_or(f64::NAN),
    );
    let m = out.finish("forecast", loaded, metrics)?;
    println!("wrote {}", m.display());
    Ok(())
}

struct ReportLine {
    label: String,
    values: Vec<f64>,
}

fn read_report(path: &std::path::Path) -> Result<Vec<ReportLine>, CliError> {
    let f = File::open(path)
        .map_err(|e| CliError::Data(format!("{}: {e} (run `greenlight optimize` first)", path.display())))?;
    let mut r = csv::Reader::from_reader(BufReader::new(f));
    let headers = r.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    if headers.len() != 16 || &headers[0] != "month" {
        return Err(CliError::Data(format!("{}: unexpected header {headers:?}", path.display())));
    }
    let mut lines = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        if values.len() != 15 {
            return Err(CliError::Data(format!("{} row {}: expected 16 fields", path.display(), i + 2)));
        }
        lines.push(ReportLine {
            label: rec[0].to_string(),
            values,
        });
    }
    if lines.is_empty() {
        return Err(CliError::Data(format!("{}: no rows", path.display())));
    }
    Ok(lines)
}

/// Re-derives the reductions in `report.csv` and writes `report.md`.
pub fn report(loaded: &Loaded) -> Result<(), CliError> {
    let dir = loaded.out_dir();
    let path = dir.join("report.csv");
    let lines = read_report(&path)?;
    let mut md = String::from(
        "| Month | Energy MWh (base / opt) | Peak MW (base / opt) | Total k$ (base / opt) | Energy red. % | Cost red. % | Peak red. % |\n\
         |---|---|---|---|---|---|---|\n",
    );
    let mut worst: f64 = 0.0;
    for l in &lines {
        let v = &l.values;
        // energy, peak and total cost pairs sit at 0/1, 2/3 and 10/11
        let recomputed = [reduction_pct(v[0], v[1]), reduction_pct(v[10], v[11]), reduction_pct(v[2], v[3])];
        for (stored, re) in v[12..15].iter().zip(recomputed) {
            let d = (stored - re).abs();
            worst = worst.max(d);
            if !(d <= REPORT_TOLERANCE_PP) {
                return Err(CliError::Data(format!(
                    "{}: {} stores a reduction of {stored:.4}% but its totals give {re:.4}%",
                    path.display(),
                    l.label
                )));
            }
        }
        md.push_str(&format!(
            "| {} | {:.1} / {:.1} | {:.3} / {:.3} | {:.2} / {:.2} | {:.2} | {:.2} | {:.2} |\n",
            l.label, v[0], v[1], v[2], v[3], v[10], v[11], recomputed[0], recomputed[1], recomputed[2]
        ));
    }
    print!("{md}");
    println!("reductions recomputed from the totals; largest difference {worst:.2e} percentage points");
    let mut out = Outputs::create(dir)?;
    out.record(path);
    out.write_bytes("report.md", md.as_bytes())?;
    let annual = lines.last().expect("non-empty");
    let metrics = json!({
        "rows": lines.len(),
        "max_recompute_difference_pp": worst,
        "energy_reduction_pct": annual.values[12],
        "cost_reduction_pct": annual.values[13],
        "peak_reduction_pct": annual.values[14],
    });
    let m = out.finish("report", loaded, metrics)?;
    println!("wrote {}", m.display());
    Ok(())
}
