use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use greenlight::forecast::{FeatureTable, Forecaster, ModelConfig, Target, TrainConfig};
use greenlight::par::Execution;
use greenlight::pipeline::{optimize_days, ForecastSource, PipelineConfig, YearData};
use greenlight::synth::{generate, sinusoid, SynthConfig};
use greenlight::timeseries::year_start;

fn mpc_days(c: &mut Criterion) {
    let d = generate(&SynthConfig {
        history_days: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let data = YearData::new(d.weather, d.market, year_start(2023), 4).unwrap();
    let mut group = c.benchmark_group("mpc_days");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let cfg = PipelineConfig {
            execution,
            ..PipelineConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{execution:?}")), &cfg, |b, cfg| {
            b.iter(|| optimize_days(cfg, &data, &ForecastSource::Oracle).unwrap())
        });
    }
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let (ts, v) = sinusoid(2023, 20, 10.0, 5.0, 0.5, 1);
    let table = FeatureTable::univariate(Target::Price, ts, v).unwrap();
    let mut group = c.benchmark_group("training_epoch");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let cfg = TrainConfig {
            max_epochs: 1,
            execution,
            ..TrainConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{execution:?}")), &cfg, |b, cfg| {
            b.iter(|| Forecaster::fit(&table, ModelConfig::reduced(1), cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mpc_days, training_epoch);
criterion_main!(benches);
