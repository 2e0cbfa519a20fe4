//! Device dispatch and interval energy.

use serde::{Deserialize, Serialize};

use super::climate::{Co2Flows, MoistureFlows, ThermalFlows};
use super::{GreenhouseConfig, LoadClass};

/// Per-device scaling factors of one load class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scaling {
    /// The first `on` devices at full power, the next one at `partial`,
    /// the rest off.
    Staged { on: usize, partial: f64 },
    /// Explicit factor per device; missing devices are off.
    PerDevice(Vec<f64>),
}

impl Scaling {
    pub fn off() -> Self {
        Scaling::Staged { on: 0, partial: 0.0 }
    }

    /// Factor of device `n`.
    pub fn factor(&self, n: usize) -> f64 {
        match self {
            Scaling::Staged { on, partial } => {
                if n < *on {
                    1.0
                } else if n == *on {
                    *partial
                } else {
                    0.0
                }
            }
            Scaling::PerDevice(w) => w.get(n).copied().unwrap_or(0.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Scaling::Staged { partial, .. } => (0.0..=1.0).contains(partial),
            Scaling::PerDevice(w) => w.iter().all(|x| (0.0..=1.0).contains(x)),
        }
    }
}

/// Turn devices on in order to meet `demand_kw`. Returns the scaling and
/// whether demand exceeded the fleet.
pub fn stage(demand_kw: f64, count: usize, rated_kw: f64) -> (Scaling, bool) {
    if demand_kw <= 0.0 || count == 0 || rated_kw <= 0.0 {
        return (Scaling::off(), demand_kw > 0.0);
    }
    let units = demand_kw / rated_kw;
    if units >= count as f64 {
        return (
            Scaling::Staged {
                on: count,
                partial: 0.0,
            },
            units > count as f64 * (1.0 + 1e-12),
        );
    }
    let on = units.floor() as usize;
    let partial = units - on as f64;
    (Scaling::Staged { on, partial }, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScaling {
    pub class: LoadClass,
    pub scaling: Scaling,
}

/// Everything the controllers decided for one interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadDispatch {
    pub devices: Vec<ClassScaling>,
    pub thermal: ThermalFlows,
    pub moisture: MoistureFlows,
    pub co2: Co2Flows,
}

impl LoadDispatch {
    pub fn set(&mut self, class: LoadClass, scaling: Scaling) {
        match self.devices.iter_mut().find(|c| c.class == class) {
            Some(c) => c.scaling = scaling,
            None => self.devices.push(ClassScaling { class, scaling }),
        }
    }

    /// Every factor in [0, 1] and no simultaneous heating and cooling.
    pub fn is_valid(&self) -> bool {
        self.devices.iter().all(|c| c.scaling.is_valid())
            && self.thermal.q_heater * self.thermal.q_chil == 0.0
    }
}

/// Energy of one load class over the interval, kWh.
pub fn class_energy(
    dispatch: &LoadDispatch,
    config: &GreenhouseConfig,
    class: LoadClass,
    interval_hours: f64,
) -> f64 {
    let Some(device) = config.device(class) else {
        return 0.0;
    };
    dispatch
        .devices
        .iter()
        .filter(|c| c.class == class)
        .map(|c| {
            (0..device.count)
                .map(|n| c.scaling.factor(n) * device.rated_kw * interval_hours)
                .sum::<f64>()
        })
        .sum()
}

/// `E_I = Σ_l Σ_n w^{l,n} P_rated^l I`, kWh.
pub fn interval_energy(
    dispatch: &LoadDispatch,
    config: &GreenhouseConfig,
    interval_hours: f64,
) -> f64 {
    LoadClass::ALL
        .iter()
        .map(|&class| class_energy(dispatch, config, class, interval_hours))
        .sum()
}

/// Electrical LED power for an artificial PPFD, kW. Linear in PPFD:
/// µmol·s⁻¹ over the floor divided by µmol·J⁻¹ gives W.
pub fn lighting_power(ppfd_artificial: f64, config: &GreenhouseConfig) -> f64 {
    ppfd_artificial * config.area / config.led_efficacy * 1e-3
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fixture_config() -> GreenhouseConfig {
        let mut config = GreenhouseConfig::default();
        config.set_count(LoadClass::Led, 2);
        config.set_count(LoadClass::Chiller, 1);
        config.set_count(LoadClass::Heater, 1);
        config
    }

    #[test]
    fn two_leds_one_hour() {
        let config = fixture_config();
        let mut d = LoadDispatch::default();
        d.set(LoadClass::Led, Scaling::PerDevice(vec![1.0, 1.0]));
        assert_relative_eq!(interval_energy(&d, &config, 1.0), 1.2, max_relative = 1e-15);
    }

    #[test]
    fn all_off_is_zero() {
        let config = fixture_config();
        let mut d = LoadDispatch::default();
        for class in LoadClass::ALL {
            d.set(class, Scaling::off());
        }
        assert_eq!(interval_energy(&d, &config, 1.0), 0.0);
    }

    #[test]
    fn half_chiller_idle_heater() {
        let config = fixture_config();
        let mut d = LoadDispatch::default();
        d.set(LoadClass::Chiller, Scaling::PerDevice(vec![0.5]));
        d.set(LoadClass::Heater, Scaling::PerDevice(vec![0.0]));
        assert_relative_eq!(interval_energy(&d, &config, 1.0), 3.3, max_relative = 1e-15);
    }

    #[test]
    fn lighting_power_is_linear() {
        let config = GreenhouseConfig::default();
        assert_eq!(lighting_power(0.0, &config), 0.0);
        assert_relative_eq!(lighting_power(348.0, &config), 1392.0, max_relative = 1e-12);
        assert_relative_eq!(
            lighting_power(2.0 * 348.0, &config),
            2.0 * lighting_power(348.0, &config),
            max_relative = 1e-15
        );
    }

    #[test]
    fn staging_fills_in_order() {
        let (s, over) = stage(1.5, 3, 1.0);
        assert!(!over);
        assert_eq!(s.factor(0), 1.0);
        assert_eq!(s.factor(1), 0.5);
        assert_eq!(s.factor(2), 0.0);
        let (s, over) = stage(5.0, 3, 1.0);
        assert!(over);
        assert_eq!(s, Scaling::Staged { on: 3, partial: 0.0 });
        assert_eq!(stage(0.0, 3, 1.0).0, Scaling::off());
    }
}
