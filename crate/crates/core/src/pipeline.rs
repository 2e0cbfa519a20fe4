//! Baseline vs optimised lighting over a run of days.
//!
//! The baseline lights 348 µmol·m⁻²·s⁻¹ from 06:00 to 18:00 every day. The
//! optimised run solves each day with receding-horizon MPC against the
//! chosen forecasts, commits against actuals, and then both runs go through
//! the same greenhouse simulation and tariff.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ForecastError, ForecastMode, IssuedForecasts};
use crate::mpc::{run_day, DayResult, MpcError, MpcWeights, SolverSettings};
use crate::par::Execution;
use crate::recipe::{LightingRecipe, PhysiologyBounds};
use crate::simulator::{hourly_artificial, simulate, EnvironmentState, GreenhouseConfig, SimError, SimulationOutput, WeatherRecord};
use crate::tariff::{annual_report, monthly_costs, AnnualReport, CostBreakdown, MarketPoint, PriceSeries, TariffConfig, TariffError};
use crate::timeseries::{format_timestamp, hours_between, Timestamp};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("solver, day starting {day}: {source}")]
    Solver { day: String, source: MpcError },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Tariff(#[from] TariffError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub greenhouse: GreenhouseConfig,
    pub tariff: TariffConfig,
    pub bounds: PhysiologyBounds,
    pub weights: MpcWeights,
    pub solver: SolverSettings,
    /// Ensemble decay per hour of forecast age.
    pub lambda: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            greenhouse: GreenhouseConfig::default(),
            tariff: TariffConfig::default(),
            bounds: PhysiologyBounds::default(),
            weights: MpcWeights::default(),
            solver: SolverSettings::default(),
            lambda: 0.15,
            execution: Execution::Parallel,
        }
    }
}

/// Aligned hourly weather and market rows, and the days to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct YearData {
    pub weather: Vec<WeatherRecord>,
    pub market: Vec<MarketPoint>,
    /// Row of the first evaluated hour (a midnight).
    pub start: usize,
    pub days: usize,
}

impl YearData {
    /// Trims both series to their common span and checks that it is
    /// contiguous and covers `days` days from `first_day`.
    pub fn new(
        weather: Vec<WeatherRecord>,
        market: Vec<MarketPoint>,
        first_day: Timestamp,
        days: usize,
    ) -> Result<Self, PipelineError> {
        let (Some(w0), Some(m0)) = (weather.first(), market.first()) else {
            return Err(PipelineError::Data("weather or market data is empty".into()));
        };
        let begin = w0.timestamp.max(m0.timestamp);
        let skip_w = hours_between(&w0.timestamp, &begin) as usize;
        let skip_m = hours_between(&m0.timestamp, &begin) as usize;
        let n = (weather.len().saturating_sub(skip_w)).min(market.len().saturating_sub(skip_m));
        let weather: Vec<WeatherRecord> = weather.into_iter().skip(skip_w).take(n).collect();
        let market: Vec<MarketPoint> = market.into_iter().skip(skip_m).take(n).collect();
        for (i, (w, m)) in weather.iter().zip(&market).enumerate() {
            let expected = crate::timeseries::add_hours(&begin, i as i64);
            if w.timestamp != expected || m.timestamp != expected {
                return Err(PipelineError::Data(format!(
                    "weather and market rows must be hourly and aligned; row {i} has {} and {}, expected {}",
                    format_timestamp(&w.timestamp),
                    format_timestamp(&m.timestamp),
                    format_timestamp(&expected)
                )));
            }
        }
        let offset = hours_between(&begin, &first_day);
        if offset < 0 {
            return Err(PipelineError::Data(format!(
                "data start at {} after the first evaluated day {}",
                format_timestamp(&begin),
                format_timestamp(&first_day)
            )));
        }
        if crate::timeseries::hour_of_day(&first_day) != 0 {
            return Err(PipelineError::Config("the first evaluated day must start at midnight".into()));
        }
        let start = offset as usize;
        if days == 0 || start + 24 * days > n {
            return Err(PipelineError::Data(format!(
                "{days} days from {} need {} rows, {} available",
                format_timestamp(&first_day),
                start + 24 * days,
                n
            )));
        }
        Ok(Self {
            weather,
            market,
            start,
            days,
        })
    }

    pub fn rows(&self) -> Range<usize> {
        self.start..self.start + 24 * self.days
    }

    pub fn prices(&self) -> Vec<f64> {
        self.market.iter().map(|m| m.price).collect()
    }

    pub fn solar_ppfd(&self, config: &GreenhouseConfig) -> Vec<f64> {
        self.weather.iter().map(|w| config.solar_ppfd(w.ghi)).collect()
    }

    pub fn day_start(&self, day: usize) -> Timestamp {
        self.weather[self.start + 24 * day].timestamp
    }
}

/// Where MPC gets its forecasts.
#[derive(Debug, Clone)]
pub enum ForecastSource {
    Oracle,
    Persistence,
    /// Issued forecasts indexed by data row; solar in W·m⁻².
    Transformer {
        price: IssuedForecasts,
        solar: IssuedForecasts,
    },
}

impl ForecastSource {
    pub fn mode(&self) -> ForecastMode {
        match self {
            Self::Oracle => ForecastMode::Oracle,
            Self::Persistence => ForecastMode::Persistence,
            Self::Transformer { .. } => ForecastMode::Transformer,
        }
    }

    /// Rows of history needed before the first evaluated hour.
    pub fn history_needed(&self) -> usize {
        match self {
            Self::Oracle => 0,
            Self::Persistence => 24,
            Self::Transformer { .. } => 47,
        }
    }

    /// Price and solar PPFD forecasts for `hours`, as known at row `now`.
    pub fn forecast(
        &self,
        prices: &[f64],
        solar: &[f64],
        now: usize,
        hours: Range<usize>,
        lambda: f64,
        config: &GreenhouseConfig,
    ) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
        match self {
            Self::Oracle => Ok((prices[hours.clone()].to_vec(), solar[hours].to_vec())),
            Self::Persistence => {
                let back = hours.start - 24..hours.end - 24;
                Ok((prices[back.clone()].to_vec(), solar[back].to_vec()))
            }
            Self::Transformer { price, solar: ghi } => {
                let p = price.combined(now, hours.clone(), lambda)?;
                let s = ghi
                    .combined(now, hours, lambda)?
                    .into_iter()
                    .map(|g| config.solar_ppfd(g.max(0.0)))
                    .collect();
                Ok((p, s))
            }
        }
    }
}

/// One optimised day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub start: Timestamp,
    pub result: DayResult,
    /// Forecasts as seen at midnight.
    pub price_forecast: Vec<f64>,
    pub solar_forecast: Vec<f64>,
}

impl DayOutcome {
    pub fn recipe(&self) -> Result<LightingRecipe, MpcError> {
        self.result.schedule.recipe()
    }
}

#[derive(Debug, Clone)]
pub struct YearOutcome {
    pub mode: ForecastMode,
    pub days: Vec<DayOutcome>,
    pub baseline: SimulationOutput,
    pub optimized: SimulationOutput,
    pub baseline_costs: Vec<CostBreakdown>,
    pub optimized_costs: Vec<CostBreakdown>,
    pub report: AnnualReport,
}

impl YearOutcome {
    /// Start timestamps of days whose DLI target had to be repaired.
    pub fn repaired_days(&self) -> Vec<Timestamp> {
        self.days
            .iter()
            .filter(|d| !d.result.repairs.is_empty())
            .map(|d| d.start)
            .collect()
    }

    pub fn verify_issues(&self) -> usize {
        self.days.iter().map(|d| d.result.verify_issues()).sum()
    }
}

/// Runs MPC for each day in `data`, independently and in parallel.
pub fn optimize_days(
    cfg: &PipelineConfig,
    data: &YearData,
    source: &ForecastSource,
) -> Result<Vec<DayOutcome>, PipelineError> {
    if data.start < source.history_needed() {
        return Err(PipelineError::Data(format!(
            "{} forecasts need {} hours of history before the first day, {} available",
            format!("{:?}", source.mode()).to_lowercase(),
            source.history_needed(),
            data.start
        )));
    }
    let prices = data.prices();
    let solar = data.solar_ppfd(&cfg.greenhouse);
    let outcomes = cfg.execution.map_range(data.days, |day| -> Result<DayOutcome, PipelineError> {
        let d0 = data.start + 24 * day;
        let hours = d0..d0 + 24;
        let start = data.day_start(day);
        let per_step = (0..24)
            .map(|step| source.forecast(&prices, &solar, d0 + step, hours.clone(), cfg.lambda, &cfg.greenhouse))
            .collect::<Result<Vec<_>, _>>()?;
        let forecast = |step: usize| per_step[step].clone();
        let result = run_day(
            &prices[hours.clone()],
            &solar[hours.clone()],
            &forecast,
            &cfg.bounds,
            cfg.weights,
            cfg.solver,
        )
        .map_err(|source| PipelineError::Solver {
            day: format_timestamp(&start),
            source,
        })?;
        let (price_forecast, solar_forecast) = per_step[0].clone();
        Ok(DayOutcome {
            start,
            result,
            price_forecast,
            solar_forecast,
        })
    });
    outcomes.into_iter().collect()
}

/// Simulates `artificial` (one PPFD per hour) from the first evaluated hour.
pub fn simulate_hours(
    cfg: &PipelineConfig,
    data: &YearData,
    artificial: &[f64],
) -> Result<SimulationOutput, PipelineError> {
    let weather = &data.weather[data.start..];
    let initial = EnvironmentState::settled(&cfg.greenhouse, weather[0].timestamp);
    Ok(simulate(&cfg.greenhouse, weather, artificial, &initial)?)
}

/// Monthly bills of a simulation.
pub fn bill(
    cfg: &PipelineConfig,
    data: &YearData,
    sim: &SimulationOutput,
) -> Result<Vec<CostBreakdown>, PipelineError> {
    let prices = PriceSeries::from_points(data.market.clone())?;
    let energy: Vec<(Timestamp, f64)> = sim.hours.iter().map(|h| (h.timestamp, h.energy.total())).collect();
    Ok(monthly_costs(&energy, &prices, &cfg.tariff, cfg.execution)?)
}

/// Baseline and optimised runs over every day of `data`, with the
/// comparison report.
pub fn run_year(cfg: &PipelineConfig, data: &YearData, source: &ForecastSource) -> Result<YearOutcome, PipelineError> {
    cfg.bounds.check().map_err(|e| PipelineError::Config(e.to_string()))?;
    cfg.greenhouse.check()?;
    cfg.tariff.check().map_err(PipelineError::Config)?;
    let days = optimize_days(cfg, data, source)?;
    let baseline_day = hourly_artificial(&[LightingRecipe::baseline()]);
    let baseline_ppfd: Vec<f64> = (0..data.days).flat_map(|_| baseline_day.iter().copied()).collect();
    let optimized_ppfd: Vec<f64> = days.iter().flat_map(|d| d.result.schedule.artificial()).collect();
    let baseline = simulate_hours(cfg, data, &baseline_ppfd)?;
    let optimized = simulate_hours(cfg, data, &optimized_ppfd)?;
    let baseline_costs = bill(cfg, data, &baseline)?;
    let optimized_costs = bill(cfg, data, &optimized)?;
    let report = annual_report(&baseline_costs, &optimized_costs)?;
    Ok(YearOutcome {
        mode: source.mode(),
        days,
        baseline,
        optimized,
        baseline_costs,
        optimized_costs,
        report,
    })
}
