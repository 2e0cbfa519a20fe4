//! Feature tables, sliding windows and chronological splits.
//!
//! A [`FeatureTable`] is column-major with the target in column 0, so the
//! model always sees the target's own history. A window starting at row `s`
//! takes rows `s..s+24` as input and the target at rows `s+24..s+48` as
//! output. Windows never cross a timestamp gap or a split boundary, and the
//! boundaries sit on day edges.

use std::ops::Range;

use chrono::{Datelike, Timelike};

use super::clean::{clean_and_fill, IqrRule};
use super::{ForecastError, Normalizer, Target, HORIZON, WINDOW};
use crate::simulator::WeatherRecord;
use crate::tariff::MarketPoint;
use crate::timeseries::{hours_between, Timestamp};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub target: Target,
    pub timestamps: Vec<Timestamp>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// Outliers removed per column.
    pub removed: Vec<usize>,
}

fn calendar(t: &Timestamp) -> [(&'static str, f64); 7] {
    let hour = t.hour() as f64 / 24.0;
    let dow = t.weekday().num_days_from_monday() as f64 / 7.0;
    let season = (t.ordinal0() as f64) / 365.25;
    [
        ("hour_sin", (TAU * hour).sin()),
        ("hour_cos", (TAU * hour).cos()),
        ("dow_sin", (TAU * dow).sin()),
        ("dow_cos", (TAU * dow).cos()),
        ("season_sin", (TAU * season).sin()),
        ("season_cos", (TAU * season).cos()),
        ("year", t.year() as f64),
    ]
}

struct Builder {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    removed: Vec<usize>,
}

impl Builder {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
            removed: Vec::new(),
        }
    }

    fn raw(&mut self, name: &str, values: Vec<f64>) {
        self.names.push(name.to_string());
        self.columns.push(values);
        self.removed.push(0);
    }

    fn cleaned(&mut self, name: &str, values: Vec<f64>, rule: &IqrRule) -> Result<(), ForecastError> {
        let (filled, removed) = clean_and_fill(&values, rule)
            .map_err(|e| ForecastError::Data(format!("column {name}: {e}")))?;
        self.names.push(name.to_string());
        self.columns.push(filled);
        self.removed.push(removed);
        Ok(())
    }

    fn calendar(&mut self, timestamps: &[Timestamp]) {
        let rows: Vec<_> = timestamps.iter().map(calendar).collect();
        for j in 0..7 {
            let name = rows.first().map_or("", |r| r[j].0);
            self.raw(name, rows.iter().map(|r| r[j].1).collect());
        }
    }

    fn finish(self, target: Target, timestamps: Vec<Timestamp>) -> FeatureTable {
        FeatureTable {
            target,
            timestamps,
            names: self.names,
            columns: self.columns,
            removed: self.removed,
        }
    }
}

fn check_hourly(timestamps: &[Timestamp]) -> Result<(), ForecastError> {
    for w in timestamps.windows(2) {
        if hours_between(&w[0], &w[1]) < 1 {
            return Err(ForecastError::Data(format!("timestamps not increasing at {}", w[1])));
        }
    }
    Ok(())
}

impl FeatureTable {
    /// Price model inputs: price history, calendar, temperature, wind speed,
    /// demand, holiday flag and the six generation series. `market` and
    /// `weather` must share timestamps.
    pub fn price(market: &[MarketPoint], weather: &[WeatherRecord], rule: &IqrRule) -> Result<Self, ForecastError> {
        if market.len() != weather.len() {
            return Err(ForecastError::Data(format!(
                "{} market rows but {} weather rows",
                market.len(),
                weather.len()
            )));
        }
        if let Some((m, w)) = market.iter().zip(weather).find(|(m, w)| m.timestamp != w.timestamp) {
            return Err(ForecastError::Data(format!(
                "market row {} has no matching weather row (found {})",
                m.timestamp, w.timestamp
            )));
        }
        let timestamps: Vec<Timestamp> = market.iter().map(|m| m.timestamp).collect();
        check_hourly(&timestamps)?;
        let mut b = Builder::new();
        b.cleaned("price", market.iter().map(|m| m.price).collect(), rule)?;
        b.calendar(&timestamps);
        b.cleaned("temperature", weather.iter().map(|w| w.t_out).collect(), rule)?;
        b.cleaned("wind_speed", weather.iter().map(|w| w.wind_speed).collect(), rule)?;
        b.cleaned("demand", market.iter().map(|m| m.market_demand_mw).collect(), rule)?;
        b.raw("holiday", market.iter().map(|m| f64::from(u8::from(m.is_holiday))).collect());
        for (j, fuel) in ["nuclear", "gas", "hydro", "wind", "solar", "biofuel"].iter().enumerate() {
            b.raw(&format!("gen_{fuel}"), market.iter().map(|m| m.generation_mw[j]).collect());
        }
        Ok(b.finish(Target::Price, timestamps))
    }

    /// Solar model inputs: irradiance history, calendar and the station
    /// weather fields. Irradiance is not IQR-cleaned: with the night hours at
    /// zero, the lower percentile is zero and the fences would clip clear-sky
    /// noon values.
    pub fn solar(weather: &[WeatherRecord], rule: &IqrRule) -> Result<Self, ForecastError> {
        let timestamps: Vec<Timestamp> = weather.iter().map(|w| w.timestamp).collect();
        check_hourly(&timestamps)?;
        let mut b = Builder::new();
        b.raw("ghi", weather.iter().map(|w| w.ghi).collect());
        b.calendar(&timestamps);
        b.cleaned("temperature", weather.iter().map(|w| w.t_out).collect(), rule)?;
        b.cleaned("dew_point", weather.iter().map(|w| w.dew_point).collect(), rule)?;
        b.cleaned("wind_speed", weather.iter().map(|w| w.wind_speed).collect(), rule)?;
        b.cleaned("station_pressure", weather.iter().map(|w| w.station_pressure).collect(), rule)?;
        b.cleaned("sea_level_pressure", weather.iter().map(|w| w.sea_level_pressure).collect(), rule)?;
        b.raw("wind_direction", weather.iter().map(|w| w.wind_direction).collect());
        b.cleaned("rh", weather.iter().map(|w| w.rh_out).collect(), rule)?;
        Ok(b.finish(Target::Solar, timestamps))
    }

    /// Single-column table, target only.
    pub fn univariate(target: Target, timestamps: Vec<Timestamp>, values: Vec<f64>) -> Result<Self, ForecastError> {
        if timestamps.len() != values.len() {
            return Err(ForecastError::Data("timestamps and values differ in length".into()));
        }
        check_hourly(&timestamps)?;
        let mut b = Builder::new();
        b.raw(target.name(), values);
        Ok(b.finish(target, timestamps))
    }

    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn target_values(&self) -> &[f64] {
        &self.columns[0]
    }

    /// Row-major normalised matrix and the normalised target.
    pub fn normalized(&self, norm: &Normalizer) -> (Vec<f64>, Vec<f64>) {
        let f = self.n_features();
        let mut rows = vec![0.0; self.rows() * f];
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                rows[i * f + j] = norm.normalize(j, v);
            }
        }
        let target = self.columns[0].iter().map(|&v| norm.normalize(0, v)).collect();
        (rows, target)
    }

    /// For each row, one past the last row of its contiguous hourly run.
    fn contiguous_run_ends(&self) -> Vec<usize> {
        let n = self.rows();
        let mut end = vec![n; n];
        for i in (0..n.saturating_sub(1)).rev() {
            end[i] = if hours_between(&self.timestamps[i], &self.timestamps[i + 1]) == 1 {
                end[i + 1]
            } else {
                i + 1
            };
        }
        end
    }

    /// Start rows of every window lying inside `rows` without crossing a gap.
    pub fn window_starts(&self, rows: Range<usize>) -> Vec<usize> {
        let span = WINDOW + HORIZON;
        let end = self.contiguous_run_ends();
        (rows.start..rows.end.saturating_sub(span - 1))
            .filter(|&s| s + span <= rows.end && end[s] >= s + span)
            .collect()
    }

    /// 70/20/10 split of whole days, counted from the first midnight.
    pub fn split(&self) -> Split {
        let n = self.rows();
        let first = self.timestamps.iter().position(|t| t.hour() == 0).unwrap_or(0);
        let days = (n - first) / 24;
        let train_days = (days as f64 * 0.7).round() as usize;
        let val_days = (days as f64 * 0.2).round() as usize;
        let b1 = first + 24 * train_days;
        let b2 = (b1 + 24 * val_days).min(n);
        Split {
            train: self.window_starts(0..b1),
            val: self.window_starts(b1..b2),
            test: self.window_starts(b2..n),
            boundaries: [b1, b2],
        }
    }
}

/// Window start rows per split; `boundaries` are the first rows of the
/// validation and test segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub boundaries: [usize; 2],
}

/// Normalised windows ready for the model.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub n_features: usize,
    pub rows: Vec<f64>,
    pub target: Vec<f64>,
}

impl WindowSet {
    pub fn new(table: &FeatureTable, norm: &Normalizer) -> Self {
        let (rows, target) = table.normalized(norm);
        Self {
            n_features: table.n_features(),
            rows,
            target,
        }
    }

    pub fn input(&self, start: usize) -> &[f64] {
        &self.rows[start * self.n_features..(start + WINDOW) * self.n_features]
    }

    pub fn output(&self, start: usize) -> &[f64] {
        &self.target[start + WINDOW..start + WINDOW + HORIZON]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{add_hours, year_start};

    fn hours(n: usize) -> Vec<Timestamp> {
        (0..n).map(|i| add_hours(&year_start(2023), i as i64)).collect()
    }

    fn table(ts: Vec<Timestamp>) -> FeatureTable {
        let v = (0..ts.len()).map(|i| i as f64).collect();
        FeatureTable::univariate(Target::Price, ts, v).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(table(hours(72)).window_starts(0..72).len(), 25);
        assert_eq!(table(hours(48)).window_starts(0..48), vec![0]);
        assert!(table(hours(47)).window_starts(0..47).is_empty());
    }

    #[test]
    fn gap_breaks_windows() {
        let mut ts = hours(120);
        ts.remove(30);
        let t = table(ts);
        let gap_row = 30;
        for s in t.window_starts(0..t.rows()) {
            let covered = t.timestamps[s];
            let last = t.timestamps[s + 47];
            assert_eq!(hours_between(&covered, &last), 47);
            assert!(!(s < gap_row && s + 48 > gap_row));
        }
        // 0..30 holds no window; 30..119 holds 89 − 48 + 1
        assert_eq!(t.window_starts(0..t.rows()).len(), 42);
    }

    #[test]
    fn window_slices_line_up() {
        let t = table(hours(72));
        let norm = Normalizer {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let w = WindowSet::new(&t, &norm);
        assert_eq!(w.input(3), (3..27).map(|i| i as f64).collect::<Vec<_>>().as_slice());
        assert_eq!(w.output(3), (27..51).map(|i| i as f64).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn splits_sit_on_day_edges_and_windows_stay_inside() {
        let mut ts = hours(24 * 40 + 5);
        ts.drain(..5);
        let t = table(ts);
        let s = t.split();
        // first midnight is row 19, leaving 39 whole days: 27 / 8 / rest
        assert_eq!(s.boundaries, [19 + 24 * 27, 19 + 24 * 35]);
        for b in s.boundaries {
            assert_eq!(t.timestamps[b].hour(), 0);
        }
        assert!(s.train.iter().all(|&i| i + 48 <= s.boundaries[0]));
        assert!(s.val.iter().all(|&i| i >= s.boundaries[0] && i + 48 <= s.boundaries[1]));
        assert!(s.test.iter().all(|&i| i >= s.boundaries[1]));
        assert_eq!(s.test.len(), 960 - (19 + 24 * 35) - 47);
    }

    #[test]
    fn price_table_requires_aligned_inputs() {
        let ts = hours(30);
        let market: Vec<MarketPoint> = ts
            .iter()
            .map(|&t| MarketPoint {
                timestamp: t,
                price: 0.05,
                market_demand_mw: 15000.0,
                generation_mw: [1.0; 6],
                is_holiday: false,
                interpolated: false,
            })
            .collect();
        let weather: Vec<WeatherRecord> = ts.iter().map(|&t| WeatherRecord::still(t, 5.0)).collect();
        let t = FeatureTable::price(&market, &weather, &IqrRule::default()).unwrap();
        assert_eq!(t.n_features(), 18);
        assert_eq!(t.names[0], "price");
        assert!(FeatureTable::price(&market[1..], &weather, &IqrRule::default()).is_err());
        let s = FeatureTable::solar(&weather, &IqrRule::default()).unwrap();
        assert_eq!(s.n_features(), 15);
    }
}
