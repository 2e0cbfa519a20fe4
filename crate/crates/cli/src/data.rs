//! Input series: CSV files when configured, synthetic otherwise.

use std::fs::File;
use std::io::BufReader;

use greenlight::pipeline::YearData;
use greenlight::simulator::{read_weather_csv, WeatherRecord};
use greenlight::synth::generate;
use greenlight::tariff::{ingest_market_csv, MarketPoint};
use greenlight::timeseries::{add_hours, format_timestamp, hour_of_day, hours_between, year_start, Timestamp};

use crate::config::Loaded;
use crate::error::CliError;

/// Rows of history the transformer needs before the first evaluated hour.
pub const HISTORY_HOURS: i64 = 47;

pub struct Series {
    pub weather: Vec<WeatherRecord>,
    pub market: Vec<MarketPoint>,
    /// Default first evaluated day.
    pub default_start: Timestamp,
}

pub fn load_series(loaded: &Loaded) -> Result<Series, CliError> {
    match (loaded.weather_path(), loaded.market_path()) {
        (Some(w), Some(m)) => {
            let file = File::open(&w).map_err(|e| CliError::Data(format!("{}: {e}", w.display())))?;
            let weather = read_weather_csv(BufReader::new(file))
                .map_err(|e| CliError::Data(format!("{}: {e}", w.display())))?;
            let market = ingest_market_csv(&m)
                .map_err(|e| CliError::Data(format!("{}: {e}", m.display())))?
                .points;
            let (Some(w0), Some(m0)) = (weather.first(), market.first()) else {
                return Err(CliError::Data("weather or market file has no rows".into()));
            };
            let earliest = add_hours(&w0.timestamp.max(m0.timestamp), HISTORY_HOURS);
            let mut start = earliest.date().and_hms_opt(0, 0, 0).expect("midnight");
            if start < earliest {
                start = add_hours(&start, 24);
            }
            Ok(Series {
                weather,
                market,
                default_start: start,
            })
        }
        _ => {
            let d = generate(&loaded.config.synthetic).map_err(CliError::Config)?;
            Ok(Series {
                weather: d.weather,
                market: d.market,
                default_start: year_start(loaded.config.synthetic.year),
            })
        }
    }
}

/// The evaluated period over the loaded series.
pub fn year_data(loaded: &Loaded, series: Series) -> Result<YearData, CliError> {
    let start = loaded.start()?.unwrap_or(series.default_start);
    if hour_of_day(&start) != 0 {
        return Err(CliError::Config(format!(
            "period.start {} is not a midnight",
            format_timestamp(&start)
        )));
    }
    let days = match loaded.config.period.days {
        Some(d) => d,
        None => {
            let end = series
                .weather
                .last()
                .map(|w| w.timestamp)
                .min(series.market.last().map(|m| m.timestamp))
                .ok_or_else(|| CliError::Data("no rows".into()))?;
            let hours = hours_between(&start, &end) + 1;
            if hours < 24 {
                return Err(CliError::Data(format!(
                    "no whole day of data from {}",
                    format_timestamp(&start)
                )));
            }
            hours as usize / 24
        }
    };
    Ok(YearData::new(series.weather, series.market, start, days)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn loaded(days: Option<usize>) -> Loaded {
        let mut config = RunConfig::default();
        config.synthetic.history_days = 2;
        config.period.days = days;
        Loaded {
            config,
            base_dir: ".".into(),
        }
    }

    #[test]
    fn synthetic_defaults_cover_the_year() {
        let l = loaded(None);
        let s = load_series(&l).unwrap();
        let d = year_data(&l, s).unwrap();
        assert_eq!(d.start, 48);
        assert_eq!(d.days, 365);
        assert_eq!(d.day_start(0), year_start(2023));
    }

    #[test]
    fn explicit_period() {
        let mut l = loaded(Some(3));
        l.config.period.start = Some("2023-03-01".into());
        let s = load_series(&l).unwrap();
        let d = year_data(&l, s).unwrap();
        assert_eq!(d.days, 3);
        assert_eq!(format_timestamp(&d.day_start(0)), "2023-03-01T00:00:00");
    }
}
