//! Discrete-time greenhouse climate and electrical load simulation.
//!
//! Each hourly interval is split into `substeps` explicit-Euler steps. Per
//! step the thermal controller runs first (it sets the ventilation rate),
//! then humidity and CO₂, then the LED fleet is dispatched for the
//! requested artificial PPFD. Device energies are accumulated per load
//! class and reported per hour.

pub mod climate;
pub mod loads;
pub mod weather;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use climate::{
    relative_humidity, step_co2, step_humidity, step_thermal, Co2Flows, HumidityMode,
    MoistureFlows, ThermalFlows,
};
pub use loads::{interval_energy, lighting_power, LoadDispatch, Scaling};
pub use weather::{read_weather_csv, write_weather_csv, WeatherRecord};

use crate::recipe::LightingRecipe;
use crate::timeseries::{format_timestamp, hour_of_day, hours_between, Timestamp};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid greenhouse config: {0}")]
    Config(String),
    #[error("weather covers {available} h from the start, {required} h needed")]
    MissingWeather { required: usize, available: usize },
    #[error("{0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
}

/// Electrical load classes of the facility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadClass {
    Fans,
    Dehumidifier,
    Fogging,
    Led,
    Co2Injector,
    Chiller,
    Heater,
}

impl LoadClass {
    pub const ALL: [LoadClass; 7] = [
        LoadClass::Fans,
        LoadClass::Dehumidifier,
        LoadClass::Fogging,
        LoadClass::Led,
        LoadClass::Co2Injector,
        LoadClass::Chiller,
        LoadClass::Heater,
    ];
}

/// `count` identical devices rated at `rated_kw` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceClass {
    pub class: LoadClass,
    pub count: usize,
    pub rated_kw: f64,
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band(pub f64, pub f64);

impl Band {
    pub fn min(&self) -> f64 {
        self.0
    }
    pub fn max(&self) -> f64 {
        self.1
    }
    pub fn mid(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }
    pub fn contains_with(&self, x: f64, tol: f64) -> bool {
        x >= self.0 - tol && x <= self.1 + tol
    }
}

/// Static plant and building parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenhouseConfig {
    /// m²
    pub area: f64,
    /// Mean indoor height, m; sets the ventilated volume.
    pub mean_height: f64,
    pub cover_transmittance: f64,
    /// Lumped indoor heat capacity, kJ·°C⁻¹.
    pub c_air: f64,
    pub day_temp_band: Band,
    pub night_temp_band: Band,
    /// First and last+1 hour of the day-time temperature band.
    pub day_start_hour: u32,
    pub day_end_hour: u32,
    /// %
    pub rh_band: Band,
    /// ppm
    pub co2_setpoint: f64,
    pub co2_ambient: f64,
    pub co2_deadband: f64,
    pub device_inventory: Vec<DeviceClass>,
    /// µmol·J⁻¹
    pub led_efficacy: f64,
    /// µmol·J⁻¹ for transmitted sunlight.
    pub solar_to_ppfd: f64,
    /// kW·°C⁻¹
    pub envelope_ua: f64,
    /// air changes per hour
    pub vent_rate_max: f64,
    pub infiltration_ach: f64,
    pub heater_cop: f64,
    pub chiller_cop: f64,
    /// %RH·h⁻¹ per running fogger / dehumidifier.
    pub fog_rate_per_unit: f64,
    pub dehum_rate_per_unit: f64,
    /// ppm·h⁻¹ per running injector.
    pub co2_rate_per_unit: f64,
    pub substeps: usize,
}

impl Default for GreenhouseConfig {
    /// One-hectare lettuce house: 60 % cover transmittance, day band
    /// 20–24 °C, night band 12–16 °C, RH 60–70 %, CO₂ 820 ppm, and device
    /// ratings of 0.13 (fans), 2.2 (dehumidifier), 2.2 (fogging), 0.6 (LED),
    /// 8 (CO₂), 6.6 (chiller) and 3.3 kW (heater).
    fn default() -> Self {
        use LoadClass::*;
        let dev = |class, count, rated_kw| DeviceClass {
            class,
            count,
            rated_kw,
        };
        Self {
            area: 10_000.0,
            mean_height: 4.0,
            cover_transmittance: 0.6,
            c_air: 120_000.0,
            day_temp_band: Band(20.0, 24.0),
            night_temp_band: Band(12.0, 16.0),
            day_start_hour: 6,
            day_end_hour: 18,
            rh_band: Band(60.0, 70.0),
            co2_setpoint: 820.0,
            co2_ambient: 380.0,
            co2_deadband: 20.0,
            device_inventory: vec![
                dev(Fans, 100, 0.13),
                dev(Dehumidifier, 40, 2.2),
                dev(Fogging, 40, 2.2),
                dev(Led, 6000, 0.6),
                dev(Co2Injector, 10, 8.0),
                dev(Chiller, 300, 6.6),
                dev(Heater, 1000, 3.3),
            ],
            led_efficacy: 2.5,
            solar_to_ppfd: 2.02,
            envelope_ua: 52.0,
            vent_rate_max: 30.0,
            infiltration_ach: 0.5,
            heater_cop: 0.95,
            chiller_cop: 3.0,
            fog_rate_per_unit: 1.5,
            dehum_rate_per_unit: 1.0,
            co2_rate_per_unit: 150.0,
            substeps: 6,
        }
    }
}

impl GreenhouseConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let positive = [
            ("area", self.area),
            ("mean_height", self.mean_height),
            ("c_air", self.c_air),
            ("led_efficacy", self.led_efficacy),
            ("solar_to_ppfd", self.solar_to_ppfd),
            ("envelope_ua", self.envelope_ua),
            ("vent_rate_max", self.vent_rate_max),
            ("heater_cop", self.heater_cop),
            ("chiller_cop", self.chiller_cop),
            ("fog_rate_per_unit", self.fog_rate_per_unit),
            ("dehum_rate_per_unit", self.dehum_rate_per_unit),
            ("co2_rate_per_unit", self.co2_rate_per_unit),
            ("co2_setpoint", self.co2_setpoint),
            ("co2_ambient", self.co2_ambient),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.cover_transmittance > 0.0 && self.cover_transmittance <= 1.0) {
            return Err(SimError::Config(format!(
                "cover_transmittance {} outside (0, 1]",
                self.cover_transmittance
            )));
        }
        if self.infiltration_ach < 0.0 || self.infiltration_ach > self.vent_rate_max {
            return Err(SimError::Config("infiltration_ach outside [0, vent_rate_max]".into()));
        }
        for (name, band) in [
            ("day_temp_band", self.day_temp_band),
            ("night_temp_band", self.night_temp_band),
            ("rh_band", self.rh_band),
        ] {
            if !(band.min() < band.max()) {
                return Err(SimError::Config(format!("{name} must have min < max")));
            }
        }
        if self.rh_band.min() < 0.0 || self.rh_band.max() > 100.0 {
            return Err(SimError::Config("rh_band outside [0, 100]".into()));
        }
        if self.substeps == 0 || self.day_start_hour >= self.day_end_hour || self.day_end_hour > 24
        {
            return Err(SimError::Config("bad substeps or day hours".into()));
        }
        for d in &self.device_inventory {
            if !(d.rated_kw > 0.0) {
                return Err(SimError::Config(format!("{:?} rated power must be positive", d.class)));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.area * self.mean_height
    }

    pub fn device(&self, class: LoadClass) -> Option<&DeviceClass> {
        self.device_inventory.iter().find(|d| d.class == class)
    }

    pub fn count(&self, class: LoadClass) -> usize {
        self.device(class).map_or(0, |d| d.count)
    }

    pub fn rated_kw(&self, class: LoadClass) -> f64 {
        self.device(class).map_or(0.0, |d| d.rated_kw)
    }

    /// Installed electrical capacity of a class, kW.
    pub fn capacity_kw(&self, class: LoadClass) -> f64 {
        self.device(class)
            .map_or(0.0, |d| d.count as f64 * d.rated_kw)
    }

    pub fn set_count(&mut self, class: LoadClass, count: usize) {
        if let Some(d) = self.device_inventory.iter_mut().find(|d| d.class == class) {
            d.count = count;
        }
    }

    pub fn temp_band_at(&self, hour: u32) -> Band {
        if (self.day_start_hour..self.day_end_hour).contains(&hour) {
            self.day_temp_band
        } else {
            self.night_temp_band
        }
    }

    /// Transmitted sunlight as PPFD, µmol·m⁻²·s⁻¹.
    pub fn solar_ppfd(&self, ghi: f64) -> f64 {
        ghi * self.cover_transmittance * self.solar_to_ppfd
    }
}

/// Indoor climate plus controller latches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentState {
    /// °C
    pub t_in: f64,
    /// %
    pub rh_in: f64,
    /// ppm
    pub co2: f64,
    pub timestamp: Timestamp,
    pub humidity_mode: HumidityMode,
    pub co2_injecting: bool,
}

impl EnvironmentState {
    /// Band midpoints at `timestamp`.
    pub fn settled(config: &GreenhouseConfig, timestamp: Timestamp) -> Self {
        Self {
            t_in: config.temp_band_at(hour_of_day(&timestamp)).mid(),
            rh_in: config.rh_band.mid(),
            co2: config.co2_setpoint,
            timestamp,
            humidity_mode: HumidityMode::Idle,
            co2_injecting: false,
        }
    }
}

/// kWh per category for one hour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub lighting: f64,
    pub heating: f64,
    pub cooling: f64,
    pub humidity: f64,
    pub co2: f64,
    pub fans: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.lighting + self.heating + self.cooling + self.humidity + self.co2 + self.fans
    }

    fn add_class(&mut self, class: LoadClass, kwh: f64) {
        match class {
            LoadClass::Led => self.lighting += kwh,
            LoadClass::Heater => self.heating += kwh,
            LoadClass::Chiller => self.cooling += kwh,
            LoadClass::Fogging | LoadClass::Dehumidifier => self.humidity += kwh,
            LoadClass::Co2Injector => self.co2 += kwh,
            LoadClass::Fans => self.fans += kwh,
        }
    }
}

/// One simulated hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub timestamp: Timestamp,
    pub energy: EnergyBreakdown,
    /// State at the end of the hour.
    pub state: EnvironmentState,
    pub temp_band: Band,
    /// End-of-hour temperature outside the band.
    pub temp_shortfall: bool,
    /// Requested artificial light exceeded the LED fleet.
    pub led_overload: bool,
    /// Highest instantaneous electrical demand within the hour, kW.
    pub peak_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub hours: Vec<HourRecord>,
}

impl SimulationOutput {
    pub fn total_kwh(&self) -> Vec<f64> {
        self.hours.iter().map(|h| h.energy.total()).collect()
    }

    pub fn timestamps(&self) -> Vec<Timestamp> {
        self.hours.iter().map(|h| h.timestamp).collect()
    }

    pub fn shortfall_hours(&self) -> usize {
        self.hours.iter().filter(|h| h.temp_shortfall).count()
    }

    /// `timestamp, lighting_kwh, heating_kwh, cooling_kwh, humidity_kwh,
    /// co2_kwh, fans_kwh, total_kwh`
    pub fn write_energy_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        w.write_record([
            "timestamp",
            "lighting_kwh",
            "heating_kwh",
            "cooling_kwh",
            "humidity_kwh",
            "co2_kwh",
            "fans_kwh",
            "total_kwh",
        ])
        .map_err(io)?;
        for h in &self.hours {
            let e = &h.energy;
            w.write_record([
                format_timestamp(&h.timestamp),
                e.lighting.to_string(),
                e.heating.to_string(),
                e.cooling.to_string(),
                e.humidity.to_string(),
                e.co2.to_string(),
                e.fans.to_string(),
                e.total().to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Reads `timestamp,…,total_kwh` rows back as `(timestamp, total_kwh)`.
pub fn read_energy_csv<R: std::io::Read>(reader: R) -> Result<Vec<(Timestamp, f64)>, SimError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers().map_err(|e| SimError::Data(e.to_string()))?.clone();
    let ts_col = headers.iter().position(|h| h == "timestamp");
    let total_col = headers.iter().position(|h| h == "total_kwh");
    let (Some(ts_col), Some(total_col)) = (ts_col, total_col) else {
        return Err(SimError::Data("energy csv needs timestamp and total_kwh columns".into()));
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| SimError::Data(format!("energy line {line}: {e}")))?;
        let t = crate::timeseries::parse_timestamp(&rec[ts_col])
            .map_err(|e| SimError::Data(format!("energy line {line}: {e}")))?;
        let v: f64 = rec[total_col]
            .parse()
            .map_err(|e| SimError::Data(format!("energy line {line}: {e}")))?;
        out.push((t, v));
    }
    Ok(out)
}

/// Hourly artificial PPFD for consecutive days of recipes (exact hour
/// averages of each piecewise-constant recipe).
pub fn hourly_artificial(recipes: &[LightingRecipe]) -> Vec<f64> {
    let mut out = Vec::with_capacity(recipes.len() * 24);
    for r in recipes {
        let step = r.interval_hours();
        for h in 0..24 {
            let (a, b) = (h as f64, h as f64 + 1.0);
            let mut acc = 0.0;
            for (n, v) in r.artificial().iter().enumerate() {
                let lo = (n as f64 * step).max(a);
                let hi = ((n + 1) as f64 * step).min(b);
                if hi > lo {
                    acc += v * (hi - lo);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Runs the facility for `artificial_ppfd.len()` hours starting at
/// `weather[0]`, from `initial` state.
pub fn simulate(
    config: &GreenhouseConfig,
    weather: &[WeatherRecord],
    artificial_ppfd: &[f64],
    initial: &EnvironmentState,
) -> Result<SimulationOutput, SimError> {
    config.check()?;
    let horizon = artificial_ppfd.len();
    if weather.len() < horizon {
        return Err(SimError::MissingWeather {
            required: horizon,
            available: weather.len(),
        });
    }
    for (k, pair) in weather[..horizon].windows(2).enumerate() {
        if hours_between(&pair[0].timestamp, &pair[1].timestamp) != 1 {
            return Err(SimError::MissingWeather {
                required: horizon,
                available: k + 1,
            });
        }
    }

    let dt = 1.0 / config.substeps as f64;
    let led = config.device(LoadClass::Led).cloned();
    let mut state = initial.clone();
    let mut hours = Vec::with_capacity(horizon);
    for (w, &ppfd) in weather.iter().zip(artificial_ppfd) {
        if !(ppfd >= 0.0) {
            return Err(SimError::Data(format!(
                "negative artificial PPFD at {}",
                format_timestamp(&w.timestamp)
            )));
        }
        let band = config.temp_band_at(hour_of_day(&w.timestamp));
        let led_kw = lighting_power(ppfd, config);
        let (led_scaling, led_overload) = match &led {
            Some(d) => loads::stage(led_kw, d.count, d.rated_kw),
            None => (Scaling::off(), led_kw > 0.0),
        };
        let mut energy = EnergyBreakdown::default();
        let mut peak_kw: f64 = 0.0;
        let mut shortfall = false;
        for _ in 0..config.substeps {
            let thermal = step_thermal(&state, w, config, band, dt);
            let humidity = step_humidity(&state, w, config, config.rh_band, thermal.vent_ach, dt);
            let co2 = step_co2(&state, config, thermal.vent_ach, dt);
            let forced_vent = thermal.vent_ach > config.infiltration_ach + 1e-12;
            let fans_on = forced_vent || led_kw > 0.0;

            let mut dispatch = LoadDispatch {
                thermal: thermal.flows,
                moisture: humidity.flows,
                co2: co2.flows,
                ..Default::default()
            };
            let staged = |class: LoadClass, kw: f64| {
                loads::stage(kw, config.count(class), config.rated_kw(class)).0
            };
            dispatch.set(LoadClass::Led, led_scaling.clone());
            dispatch.set(LoadClass::Heater, staged(LoadClass::Heater, thermal.heater_kw));
            dispatch.set(LoadClass::Chiller, staged(LoadClass::Chiller, thermal.chiller_kw));
            dispatch.set(LoadClass::Fogging, staged(LoadClass::Fogging, humidity.fog_kw));
            dispatch.set(
                LoadClass::Dehumidifier,
                staged(LoadClass::Dehumidifier, humidity.dehum_kw),
            );
            dispatch.set(LoadClass::Co2Injector, staged(LoadClass::Co2Injector, co2.injector_kw));
            dispatch.set(
                LoadClass::Fans,
                if fans_on {
                    Scaling::Staged {
                        on: config.count(LoadClass::Fans),
                        partial: 0.0,
                    }
                } else {
                    Scaling::off()
                },
            );
            debug_assert!(dispatch.is_valid());

            let mut step_kwh = 0.0;
            for class in LoadClass::ALL {
                let kwh = loads::class_energy(&dispatch, config, class, dt);
                energy.add_class(class, kwh);
                step_kwh += kwh;
            }
            peak_kw = peak_kw.max(step_kwh / dt);

            state.t_in = thermal.t_in;
            state.rh_in = humidity.rh_in;
            state.humidity_mode = humidity.mode;
            state.co2 = co2.co2;
            state.co2_injecting = co2.injecting;
            shortfall = thermal.shortfall;
        }
        state.timestamp = crate::timeseries::add_hours(&w.timestamp, 1);
        hours.push(HourRecord {
            timestamp: w.timestamp,
            energy,
            state: state.clone(),
            temp_band: band,
            temp_shortfall: shortfall,
            led_overload,
            peak_kw,
        });
    }
    Ok(SimulationOutput { hours })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{add_hours, year_start};
    use approx::assert_relative_eq;

    fn still_day(t_out: f64) -> Vec<WeatherRecord> {
        let t0 = year_start(2024);
        (0..24)
            .map(|h| WeatherRecord::still(add_hours(&t0, h), t_out))
            .collect()
    }

    #[test]
    fn quiet_day_uses_only_lights_and_fans() {
        let mut config = GreenhouseConfig::default();
        config.night_temp_band = config.day_temp_band;
        config.infiltration_ach = 0.0;
        let weather = still_day(config.day_temp_band.mid());
        let recipe = LightingRecipe::baseline();
        let ppfd = hourly_artificial(std::slice::from_ref(&recipe));
        let init = EnvironmentState::settled(&config, weather[0].timestamp);
        let out = simulate(&config, &weather, &ppfd, &init).unwrap();
        let total: f64 = out.total_kwh().iter().sum();
        let lights = 12.0 * lighting_power(348.0, &config);
        let fans = 12.0 * config.capacity_kw(LoadClass::Fans);
        assert_relative_eq!(total, lights + fans, max_relative = 1e-9);
        assert_eq!(out.shortfall_hours(), 0);
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let config = GreenhouseConfig::default();
        let mut weather = still_day(-5.0);
        for (h, w) in weather.iter_mut().enumerate() {
            w.ghi = (h as f64 - 12.0).abs().mul_add(-60.0, 400.0).max(0.0);
        }
        let ppfd = hourly_artificial(&[LightingRecipe::baseline()]);
        let init = EnvironmentState::settled(&config, weather[0].timestamp);
        let a = simulate(&config, &weather, &ppfd, &init).unwrap();
        let b = simulate(&config, &weather, &ppfd, &init).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn led_fleet_size_does_not_change_lighting_energy() {
        let config = GreenhouseConfig::default();
        let mut doubled = config.clone();
        doubled.set_count(LoadClass::Led, 2 * config.count(LoadClass::Led));
        let weather = still_day(5.0);
        let ppfd = hourly_artificial(&[LightingRecipe::baseline()]);
        let init = EnvironmentState::settled(&config, weather[0].timestamp);
        let a = simulate(&config, &weather, &ppfd, &init).unwrap();
        let b = simulate(&doubled, &weather, &ppfd, &init).unwrap();
        let la: f64 = a.hours.iter().map(|h| h.energy.lighting).sum();
        let lb: f64 = b.hours.iter().map(|h| h.energy.lighting).sum();
        assert_eq!(la, lb);
    }

    #[test]
    fn missing_weather_is_fatal() {
        let config = GreenhouseConfig::default();
        let weather = still_day(5.0);
        let ppfd = vec![0.0; 30];
        let init = EnvironmentState::settled(&config, weather[0].timestamp);
        assert!(matches!(
            simulate(&config, &weather, &ppfd, &init),
            Err(SimError::MissingWeather { required: 30, available: 24 })
        ));
    }

    #[test]
    fn led_overload_flagged() {
        let config = GreenhouseConfig::default();
        let weather = still_day(20.0);
        let init = EnvironmentState::settled(&config, weather[0].timestamp);
        let out = simulate(&config, &weather[..1], &[1000.0], &init).unwrap();
        assert!(out.hours[0].led_overload);
    }

    #[test]
    fn hourly_artificial_averages_sub_hour_recipes() {
        let values: Vec<f64> = (0..48).map(|k| if k % 2 == 0 { 100.0 } else { 300.0 }).collect();
        let r = LightingRecipe::artificial_only(0.5, values).unwrap();
        let h = hourly_artificial(&[r]);
        assert_eq!(h.len(), 24);
        assert!(h.iter().all(|&v| (v - 200.0).abs() < 1e-12));
    }

    #[test]
    fn config_validation() {
        let mut c = GreenhouseConfig::default();
        assert!(c.check().is_ok());
        c.cover_transmittance = 1.5;
        assert!(c.check().is_err());
        let mut c = GreenhouseConfig::default();
        c.area = 0.0;
        assert!(c.check().is_err());
    }
}
