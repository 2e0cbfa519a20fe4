//! Seeded synthetic weather and market data.
//!
//! Irradiance is a clear-sky curve for the configured latitude scaled by a
//! persistent daily cloud factor and hourly noise. Temperature follows an
//! annual and a diurnal cycle plus an AR(1) anomaly. The price is two-tier:
//! weekday hours in the peak window cost `peak_ratio` times the off-peak
//! level, with small noise and occasional spikes. Data start
//! `history_days` before 1 January of `year`, so forecasters have history
//! to issue from and to train on.

use chrono::{Datelike, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::simulator::climate::relative_humidity;
use crate::simulator::WeatherRecord;
use crate::tariff::MarketPoint;
use crate::timeseries::{add_hours, year_start, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub year: i32,
    pub seed: u64,
    pub history_days: usize,
    /// degrees north
    pub latitude: f64,
    /// °C
    pub mean_temp: f64,
    pub annual_temp_amplitude: f64,
    pub diurnal_temp_amplitude: f64,
    /// $/kWh
    pub off_peak_price: f64,
    pub peak_ratio: f64,
    /// First and last+1 hour of the weekday peak window.
    pub peak_start_hour: u32,
    pub peak_end_hour: u32,
    pub price_noise: f64,
    /// Per-hour spike probability and multiplier range.
    pub spike_probability: f64,
    pub spike_multiplier: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            year: 2023,
            seed: 7,
            history_days: 365,
            latitude: 43.7,
            mean_temp: 8.0,
            annual_temp_amplitude: 14.0,
            diurnal_temp_amplitude: 4.0,
            off_peak_price: 0.025,
            peak_ratio: 2.0,
            peak_start_hour: 7,
            peak_end_hour: 23,
            price_noise: 0.002,
            spike_probability: 0.005,
            spike_multiplier: (2.0, 5.0),
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(-66.0..=66.0).contains(&self.latitude) {
            return Err("latitude must lie within the polar circles".into());
        }
        if !(self.off_peak_price > 0.0) || !(self.peak_ratio >= 1.0) {
            return Err("off-peak price must be positive and peak ratio at least 1".into());
        }
        if self.peak_start_hour >= self.peak_end_hour || self.peak_end_hour > 24 {
            return Err("bad peak window".into());
        }
        if !(0.0..=1.0).contains(&self.spike_probability) || self.spike_multiplier.0 > self.spike_multiplier.1 {
            return Err("bad spike settings".into());
        }
        Ok(())
    }

    pub fn first_hour(&self) -> Timestamp {
        add_hours(&year_start(self.year), -24 * self.history_days as i64)
    }

    /// Hours from the first generated hour to 1 January.
    pub fn history_hours(&self) -> usize {
        24 * self.history_days
    }

    pub fn hours_in_year(&self) -> usize {
        let days = if NaiveDate::from_ymd_opt(self.year, 2, 29).is_some() { 366 } else { 365 };
        24 * days
    }

    pub fn is_peak(&self, t: &Timestamp, holiday: bool) -> bool {
        let weekday = t.weekday().num_days_from_monday() < 5;
        weekday && !holiday && (self.peak_start_hour..self.peak_end_hour).contains(&t.hour())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub weather: Vec<WeatherRecord>,
    pub market: Vec<MarketPoint>,
}

fn is_holiday(t: &Timestamp) -> bool {
    matches!((t.month(), t.day()), (1, 1) | (7, 1) | (12, 25) | (12, 26))
}

/// Clear-sky global horizontal irradiance at the middle of hour `t`, W·m⁻².
pub fn clear_sky_ghi(t: &Timestamp, latitude: f64) -> f64 {
    let doy = t.ordinal() as f64;
    let decl = 23.45_f64.to_radians() * (std::f64::consts::TAU * (284.0 + doy) / 365.0).sin();
    let hour_angle = (15.0 * (t.hour() as f64 + 0.5 - 12.0)).to_radians();
    let lat = latitude.to_radians();
    let sin_el = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    if sin_el <= 0.0 {
        0.0
    } else {
        1050.0 * sin_el.powf(1.15)
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, String> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n = cfg.history_hours() + cfg.hours_in_year();
    let start = cfg.first_hour();
    let mut weather = Vec::with_capacity(n);
    let mut market = Vec::with_capacity(n);
    let (mut cloud, mut anomaly, mut pressure, mut wind_dir, mut wind) = (0.8, 0.0, 0.0, 200.0, 4.0);
    let (mut wind_gen, mut hydro) = (0.4, 4000.0);
    for i in 0..n {
        let t = add_hours(&start, i as i64);
        if t.hour() == 0 {
            // daily cloud factor: persistent, occasionally overcast
            let target: f64 = if rng.random_bool(0.25) { 0.3 } else { 0.95 };
            cloud = (0.5 * cloud + 0.5 * target + 0.08 * unit.sample(&mut rng)).clamp(0.1, 1.0);
        }
        let ghi = (clear_sky_ghi(&t, cfg.latitude) * (cloud + 0.05 * unit.sample(&mut rng)).clamp(0.05, 1.0)).max(0.0);
        let season = (std::f64::consts::TAU * (t.ordinal() as f64 - 200.0) / 365.25).cos();
        let diurnal = (std::f64::consts::TAU * (t.hour() as f64 - 15.0) / 24.0).cos();
        anomaly = 0.97 * anomaly + 0.5 * unit.sample(&mut rng);
        let t_out = cfg.mean_temp + cfg.annual_temp_amplitude * season + cfg.diurnal_temp_amplitude * diurnal * (0.5 + 0.5 * cloud) + anomaly;
        let depression = (4.0 + 3.0 * cloud + 1.5 * diurnal + 0.8 * unit.sample(&mut rng)).max(0.2);
        let dew_point = t_out - depression;
        pressure = 0.98 * pressure + 0.1 * unit.sample(&mut rng);
        wind = (0.9 * wind + 0.1 * 4.0 + 0.6 * unit.sample(&mut rng)).clamp(0.0, 25.0);
        wind_dir = (wind_dir + 10.0 * unit.sample(&mut rng)).rem_euclid(360.0);
        weather.push(WeatherRecord {
            timestamp: t,
            ghi,
            t_out,
            dew_point,
            wind_speed: wind,
            station_pressure: 99.5 + pressure,
            sea_level_pressure: 101.3 + pressure,
            wind_direction: wind_dir,
            rh_out: relative_humidity(t_out, dew_point),
        });

        let holiday = is_holiday(&t);
        let peak = cfg.is_peak(&t, holiday);
        let mut price = cfg.off_peak_price * if peak { cfg.peak_ratio } else { 1.0 };
        price += cfg.price_noise * unit.sample(&mut rng);
        if rng.random_bool(cfg.spike_probability) {
            price *= rng.random_range(cfg.spike_multiplier.0..=cfg.spike_multiplier.1);
        }
        let heating_load = (15.0 - t_out).max(0.0) * 150.0;
        let cooling_load = (t_out - 22.0).max(0.0) * 250.0;
        let demand = 13_000.0 + if peak { 3_000.0 } else { 0.0 } + heating_load + cooling_load + 300.0 * unit.sample(&mut rng);
        wind_gen = (0.95 * wind_gen + 0.05 * (wind / 12.0) + 0.02 * unit.sample(&mut rng)).clamp(0.0, 1.0);
        hydro = (0.99 * hydro + 0.01 * 4000.0 + 50.0 * unit.sample(&mut rng)).max(1000.0);
        let nuclear = 9_500.0 + 100.0 * unit.sample(&mut rng);
        let wind_mw = 4_900.0 * wind_gen;
        let solar_mw = 0.45 * ghi;
        let biofuel = 200.0;
        let gas = (demand - nuclear - hydro - wind_mw - solar_mw - biofuel).max(0.0);
        market.push(MarketPoint {
            timestamp: t,
            price,
            market_demand_mw: demand,
            generation_mw: [nuclear, gas, hydro, wind_mw, solar_mw, biofuel],
            is_holiday: holiday,
            interpolated: false,
        });
    }
    Ok(SynthData { weather, market })
}

/// `days` days of `base + amplitude·sin(2πh/24) + noise`, hourly from
/// 1 January of `year`.
pub fn sinusoid(year: i32, days: usize, base: f64, amplitude: f64, noise: f64, seed: u64) -> (Vec<Timestamp>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("non-negative noise");
    let start = year_start(year);
    (0..days * 24)
        .map(|i| {
            let v = base + amplitude * (std::f64::consts::TAU * i as f64 / 24.0).sin() + normal.sample(&mut rng);
            (add_hours(&start, i as i64), v)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tariff::PriceSeries;

    fn small() -> SynthConfig {
        SynthConfig {
            history_days: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.market[100].price, c.market[100].price);
    }

    #[test]
    fn covers_history_and_year_and_is_valid() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.weather.len(), 24 * 3 + 24 * 365);
        assert_eq!(d.weather[72].timestamp, year_start(2023));
        assert!(d.weather.iter().all(|w| w.check().is_ok()));
        assert!(PriceSeries::from_points(d.market.clone()).is_ok());
        // night is dark, summer noon is bright
        let night = &d.weather[72 + 24 * 170 + 1];
        let noon = (0..10).map(|k| d.weather[72 + 24 * (165 + k) + 12].ghi).fold(0.0, f64::max);
        assert_eq!(night.ghi, 0.0);
        assert!(noon > 700.0, "{noon}");
    }

    #[test]
    fn two_to_one_tariff() {
        let cfg = SynthConfig {
            price_noise: 0.0,
            spike_probability: 0.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        // 2023-01-03 is a Tuesday
        let tue = 72 + 48;
        assert_eq!(d.market[tue + 3].price, 0.025);
        assert_eq!(d.market[tue + 12].price, 0.05);
        // 2023-01-07 is a Saturday
        assert_eq!(d.market[72 + 24 * 6 + 12].price, 0.025);
    }

    #[test]
    fn winter_is_colder_than_summer() {
        let d = generate(&small()).unwrap();
        let mean = |r: std::ops::Range<usize>| d.weather[r.clone()].iter().map(|w| w.t_out).sum::<f64>() / r.len() as f64;
        assert!(mean(72..72 + 24 * 31) + 15.0 < mean(72 + 24 * 181..72 + 24 * 212));
    }

    #[test]
    fn sinusoid_shape() {
        let (ts, v) = sinusoid(2023, 2, 10.0, 5.0, 0.0, 1);
        assert_eq!(ts.len(), 48);
        assert!((v[6] - 15.0).abs() < 1e-12);
        assert!((v[30] - 15.0).abs() < 1e-12);
    }
}
