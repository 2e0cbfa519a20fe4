use greenlight::par::Execution;
use greenlight::pipeline::{optimize_days, run_year, ForecastSource, PipelineConfig, YearData};
use greenlight::recipe::validate;
use greenlight::synth::{generate, SynthConfig};
use greenlight::timeseries::year_start;

fn data(days: usize) -> YearData {
    let d = generate(&SynthConfig {
        history_days: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    YearData::new(d.weather, d.market, year_start(2023), days).unwrap()
}

#[test]
fn oracle_week_is_valid_and_cheaper() {
    let cfg = PipelineConfig::default();
    let out = run_year(&cfg, &data(7), &ForecastSource::Oracle).unwrap();
    assert_eq!(out.days.len(), 7);
    assert_eq!(out.verify_issues(), 0);
    assert!(out.repaired_days().is_empty());
    for day in &out.days {
        let recipe = day.recipe().unwrap();
        assert!(validate(&recipe, &cfg.bounds).is_empty(), "{:?}", validate(&recipe, &cfg.bounds));
    }
    let row = &out.report.annual;
    assert!(row.energy_mwh.1 <= row.energy_mwh.0);
    assert!(row.total_cost_k.1 < row.total_cost_k.0);
}

#[test]
fn oracle_is_no_dearer_than_persistence() {
    let cfg = PipelineConfig::default();
    let d = data(31);
    let oracle = run_year(&cfg, &d, &ForecastSource::Oracle).unwrap();
    let persistence = run_year(&cfg, &d, &ForecastSource::Persistence).unwrap();
    let (o, p) = (oracle.report.annual.total_cost_k.1, persistence.report.annual.total_cost_k.1);
    assert!(o <= p * 1.005, "oracle {o} persistence {p}");
    assert_eq!(persistence.verify_issues(), 0);
}

#[test]
fn sequential_and_parallel_days_agree() {
    let d = data(3);
    let seq = PipelineConfig {
        execution: Execution::Sequential,
        ..PipelineConfig::default()
    };
    let par = PipelineConfig::default();
    let a = optimize_days(&seq, &d, &ForecastSource::Oracle).unwrap();
    let b = optimize_days(&par, &d, &ForecastSource::Oracle).unwrap();
    assert_eq!(a, b);
}

#[test]
fn persistence_without_history_is_a_data_error() {
    let d = generate(&SynthConfig {
        history_days: 0,
        ..SynthConfig::default()
    })
    .unwrap();
    let d = YearData::new(d.weather, d.market, year_start(2023), 2).unwrap();
    assert!(optimize_days(&PipelineConfig::default(), &d, &ForecastSource::Persistence).is_err());
}

#[test]
fn misaligned_rows_are_rejected() {
    let mut d = generate(&SynthConfig {
        history_days: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    d.market.remove(30);
    assert!(YearData::new(d.weather.clone(), d.market.clone(), year_start(2023), 2).is_err());
    let d = generate(&SynthConfig {
        history_days: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(YearData::new(d.weather, d.market, year_start(2024), 2).is_err());
}
