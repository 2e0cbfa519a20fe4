//! Indoor climate balances and their on/off controllers.
//!
//! Temperature follows `C_air dT/dt = Q_solar + Q_heater − Q_chil − Q_vent −
//! Q_conv`, humidity `dRH/dt = G_fog + G_dehum − G_vent` (in %RH units) and
//! CO₂ `dCO₂/dt = J_inj − J_vent`. Each step is one explicit-Euler update;
//! the controllers size actuators so the next state lands on the band edge
//! (or the band midpoint for humidity and CO₂) when capacity allows.

use serde::{Deserialize, Serialize};

use super::{Band, EnvironmentState, GreenhouseConfig, LoadClass, WeatherRecord};

/// kg·m⁻³
pub const AIR_DENSITY: f64 = 1.2;
/// kJ·kg⁻¹·K⁻¹
pub const AIR_HEAT_CAPACITY: f64 = 1.006;

const SECONDS_PER_HOUR: f64 = 3600.0;
const BAND_TOLERANCE: f64 = 1e-6;

/// Saturation vapour pressure over water, kPa (Magnus form).
pub fn saturation_vapour_pressure(t_c: f64) -> f64 {
    0.61094 * (17.625 * t_c / (t_c + 243.04)).exp()
}

/// `P_bar / P_sat · 100`, with the actual vapour pressure taken at the dew
/// point. Clamped to [0, 100].
pub fn relative_humidity(t_c: f64, dew_point_c: f64) -> f64 {
    (100.0 * saturation_vapour_pressure(dew_point_c) / saturation_vapour_pressure(t_c))
        .clamp(0.0, 100.0)
}

/// Heat flows, kW. `q_vent` and `q_conv` are losses (positive when the
/// greenhouse is warmer than outside).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThermalFlows {
    pub q_solar: f64,
    pub q_heater: f64,
    pub q_chil: f64,
    pub q_vent: f64,
    pub q_conv: f64,
}

impl ThermalFlows {
    pub fn net(&self) -> f64 {
        self.q_solar + self.q_heater - self.q_chil - self.q_vent - self.q_conv
    }
}

/// One Euler step of the temperature balance.
pub fn integrate_temperature(t_in: f64, flows: &ThermalFlows, c_air: f64, dt_hours: f64) -> f64 {
    t_in + flows.net() * dt_hours * SECONDS_PER_HOUR / c_air
}

/// Moisture flows, %RH·h⁻¹. `g_dehum ≤ 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoistureFlows {
    pub g_fog: f64,
    pub g_dehum: f64,
    pub g_vent: f64,
}

/// CO₂ flows, ppm·h⁻¹.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Co2Flows {
    pub j_inj: f64,
    pub j_vent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalStep {
    pub t_in: f64,
    pub flows: ThermalFlows,
    /// Total air changes per hour, infiltration included.
    pub vent_ach: f64,
    pub heater_kw: f64,
    pub chiller_kw: f64,
    /// The controller could not keep `t_in` inside the band.
    pub shortfall: bool,
}

/// kW exchanged per K of indoor/outdoor difference per air change per hour.
pub fn vent_coefficient(config: &GreenhouseConfig) -> f64 {
    AIR_DENSITY * AIR_HEAT_CAPACITY * config.volume() / SECONDS_PER_HOUR
}

pub fn step_thermal(
    state: &EnvironmentState,
    weather: &WeatherRecord,
    config: &GreenhouseConfig,
    band: Band,
    dt_hours: f64,
) -> ThermalStep {
    let t = state.t_in;
    let dt_s = dt_hours * SECONDS_PER_HOUR;
    let delta = t - weather.t_out;
    let k_vent = vent_coefficient(config);

    let q_solar = config.cover_transmittance * weather.ghi * config.area * 1e-3;
    let q_conv = config.envelope_ua * delta;
    let q_infiltration = k_vent * config.infiltration_ach * delta;
    let passive = q_solar - q_conv - q_infiltration;
    let predicted = t + passive * dt_s / config.c_air;

    let heater_cap = config.capacity_kw(LoadClass::Heater) * config.heater_cop;
    let chiller_cap = config.capacity_kw(LoadClass::Chiller) * config.chiller_cop;

    let mut q_heater = 0.0;
    let mut q_chil = 0.0;
    let mut extra_ach = 0.0;
    if predicted < band.min() {
        let need = (band.min() - t) * config.c_air / dt_s - passive;
        q_heater = need.clamp(0.0, heater_cap);
    } else if predicted > band.max() {
        let mut need = passive - (band.max() - t) * config.c_air / dt_s;
        if delta > 0.0 {
            let room = (config.vent_rate_max - config.infiltration_ach).max(0.0);
            extra_ach = (need / (k_vent * delta)).clamp(0.0, room);
            need -= k_vent * extra_ach * delta;
        }
        q_chil = need.clamp(0.0, chiller_cap);
    }
    let vent_ach = config.infiltration_ach + extra_ach;
    let flows = ThermalFlows {
        q_solar,
        q_heater,
        q_chil,
        q_vent: k_vent * vent_ach * delta,
        q_conv,
    };
    let t_in = integrate_temperature(t, &flows, config.c_air, dt_hours);
    ThermalStep {
        t_in,
        flows,
        vent_ach,
        heater_kw: q_heater / config.heater_cop,
        chiller_kw: q_chil / config.chiller_cop,
        shortfall: !band.contains_with(t_in, BAND_TOLERANCE),
    }
}

/// Fraction of indoor air replaced during `dt_hours` at `ach` changes per
/// hour under perfect mixing.
fn exchanged_fraction(ach: f64, dt_hours: f64) -> f64 {
    1.0 - (-ach * dt_hours).exp()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HumidityMode {
    #[default]
    Idle,
    Fogging,
    Dehumidifying,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumidityStep {
    pub rh_in: f64,
    pub flows: MoistureFlows,
    pub mode: HumidityMode,
    pub fog_kw: f64,
    pub dehum_kw: f64,
}

/// Dead-band humidity control: fogging engages below the band,
/// dehumidification above it, and either releases once RH is back at the
/// band midpoint. Outdoor air enters at its dew point and indoor
/// temperature.
pub fn step_humidity(
    state: &EnvironmentState,
    weather: &WeatherRecord,
    config: &GreenhouseConfig,
    band: Band,
    vent_ach: f64,
    dt_hours: f64,
) -> HumidityStep {
    let rh = state.rh_in;
    let incoming = relative_humidity(state.t_in, weather.dew_point);
    let g_vent = (rh - incoming) * exchanged_fraction(vent_ach, dt_hours) / dt_hours;

    let mid = band.mid();
    let mode = match state.humidity_mode {
        _ if rh < band.min() => HumidityMode::Fogging,
        _ if rh > band.max() => HumidityMode::Dehumidifying,
        HumidityMode::Fogging if rh < mid => HumidityMode::Fogging,
        HumidityMode::Dehumidifying if rh > mid => HumidityMode::Dehumidifying,
        _ => HumidityMode::Idle,
    };
    let required = (mid - rh) / dt_hours + g_vent;
    let fog_cap = config.count(LoadClass::Fogging) as f64 * config.fog_rate_per_unit;
    let dehum_cap = config.count(LoadClass::Dehumidifier) as f64 * config.dehum_rate_per_unit;
    let (g_fog, g_dehum) = match mode {
        HumidityMode::Fogging => (required.clamp(0.0, fog_cap), 0.0),
        HumidityMode::Dehumidifying => (0.0, required.clamp(-dehum_cap, 0.0)),
        HumidityMode::Idle => (0.0, 0.0),
    };
    let flows = MoistureFlows {
        g_fog,
        g_dehum,
        g_vent,
    };
    let rh_in = (rh + (g_fog + g_dehum - g_vent) * dt_hours).clamp(0.0, 100.0);
    HumidityStep {
        rh_in,
        flows,
        mode,
        fog_kw: g_fog / config.fog_rate_per_unit * config.rated_kw(LoadClass::Fogging),
        dehum_kw: -g_dehum / config.dehum_rate_per_unit * config.rated_kw(LoadClass::Dehumidifier),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Co2Step {
    pub co2: f64,
    pub flows: Co2Flows,
    pub injecting: bool,
    pub injector_kw: f64,
}

/// Injection starts once CO₂ falls `co2_deadband` below the setpoint and
/// stops at the setpoint; while on, the rate is sized to reach the setpoint
/// within the step. Ventilation exchanges toward the ambient level.
pub fn step_co2(
    state: &EnvironmentState,
    config: &GreenhouseConfig,
    vent_ach: f64,
    dt_hours: f64,
) -> Co2Step {
    let c = state.co2;
    let j_vent = (c - config.co2_ambient) * exchanged_fraction(vent_ach, dt_hours) / dt_hours;
    let injecting = if c < config.co2_setpoint - config.co2_deadband {
        true
    } else {
        state.co2_injecting && c < config.co2_setpoint
    };
    let cap = config.count(LoadClass::Co2Injector) as f64 * config.co2_rate_per_unit;
    let j_inj = if injecting {
        ((config.co2_setpoint - c) / dt_hours + j_vent).clamp(0.0, cap)
    } else {
        0.0
    };
    let co2 = (c + (j_inj - j_vent) * dt_hours).max(1e-9);
    Co2Step {
        co2,
        flows: Co2Flows { j_inj, j_vent },
        injecting,
        injector_kw: j_inj / config.co2_rate_per_unit * config.rated_kw(LoadClass::Co2Injector),
    }
}
