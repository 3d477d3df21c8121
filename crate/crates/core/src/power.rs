//! Duty-cycled power, daily energy and battery lifetime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("on and off times must be non-negative and not both zero (got {t_on}, {t_off})")]
    BadTimes { t_on: f64, t_off: f64 },
    #[error("duty cycle {0} outside [0, 1]")]
    BadDutyCycle(f64),
    #[error("invalid power input: {0}")]
    Invalid(String),
}

/// One subsystem's draw in run and standby mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subsystem {
    pub name: String,
    pub supply_v: f64,
    pub p_on_mw: f64,
    pub p_off_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfile {
    pub subsystems: Vec<Subsystem>,
}

impl Default for PowerProfile {
    fn default() -> Self {
        let s = |name: &str, supply_v, p_on_mw, p_off_mw| Subsystem {
            name: name.into(),
            supply_v,
            p_on_mw,
            p_off_mw,
        };
        Self {
            subsystems: vec![
                s("imu", 3.3, 23.0, 0.144),
                s("mcu", 3.3, 430.0, 0.040),
                s("readout", 3.3, 52.0, 0.001),
            ],
        }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), PowerError> {
        for s in &self.subsystems {
            let ok = [s.supply_v, s.p_on_mw, s.p_off_mw].iter().all(|v| v.is_finite() && *v >= 0.0);
            if !ok {
                return Err(PowerError::Invalid(format!("subsystem {} has a negative or non-finite value", s.name)));
            }
        }
        Ok(())
    }

    pub fn p_on_mw(&self) -> f64 {
        self.subsystems.iter().map(|s| s.p_on_mw).sum()
    }

    pub fn p_off_mw(&self) -> f64 {
        self.subsystems.iter().map(|s| s.p_off_mw).sum()
    }
}

/// Fraction of the period spent in run mode.
pub fn duty_cycle(t_on: f64, t_off: f64) -> Result<f64, PowerError> {
    if !(t_on >= 0.0 && t_off >= 0.0 && t_on.is_finite() && t_off.is_finite()) || t_on + t_off == 0.0 {
        return Err(PowerError::BadTimes { t_on, t_off });
    }
    Ok(t_on / (t_on + t_off))
}

/// `(1 - dc) * P_off + dc * P_on` in milliwatts.
pub fn average_power(dc: f64, profile: &PowerProfile) -> Result<f64, PowerError> {
    if !(0.0..=1.0).contains(&dc) {
        return Err(PowerError::BadDutyCycle(dc));
    }
    profile.validate()?;
    Ok((1.0 - dc) * profile.p_off_mw() + dc * profile.p_on_mw())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub duty_cycle: f64,
    pub average_power_mw: f64,
    pub energy_wh_per_day: f64,
    /// Days of use per charge; `None` when nothing is drawn.
    pub lifetime_days: Option<f64>,
    /// Hours of use per charge; `None` when nothing is drawn.
    pub lifetime_hours: Option<f64>,
}

/// Daily energy for `hours_per_day` of use and the resulting battery life.
pub fn energy_and_lifetime(
    dc: f64,
    hours_per_day: f64,
    battery_wh: f64,
    profile: &PowerProfile,
) -> Result<EnergyReport, PowerError> {
    if !(hours_per_day > 0.0 && hours_per_day <= 24.0) {
        return Err(PowerError::Invalid(format!("hours per day {hours_per_day} outside (0, 24]")));
    }
    if !(battery_wh > 0.0 && battery_wh.is_finite()) {
        return Err(PowerError::Invalid(format!("battery capacity {battery_wh} Wh must be positive")));
    }
    let p = average_power(dc, profile)?;
    let energy = p * hours_per_day / 1000.0;
    let days = (energy > 0.0).then(|| battery_wh / energy);
    Ok(EnergyReport {
        duty_cycle: dc,
        average_power_mw: p,
        energy_wh_per_day: energy,
        lifetime_days: days,
        lifetime_hours: days.map(|d| d * hours_per_day),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duty_cycles() {
        assert_eq!(duty_cycle(1.0, 9.0).unwrap(), 0.1);
        assert_eq!(duty_cycle(5.0, 0.0).unwrap(), 1.0);
        assert_eq!(duty_cycle(3600.0, 32400.0).unwrap(), 0.1);
        assert!(duty_cycle(0.0, 0.0).is_err());
        assert!(duty_cycle(-1.0, 2.0).is_err());
    }

    #[test]
    fn table_totals_and_average() {
        let p = PowerProfile::default();
        assert_eq!(p.p_on_mw(), 505.0);
        assert!((p.p_off_mw() - 0.185).abs() < 1e-15);
        assert!((average_power(0.0, &p).unwrap() - 0.185).abs() < 1e-15);
        assert_eq!(average_power(1.0, &p).unwrap(), 505.0);
        assert!((average_power(0.1, &p).unwrap() - 50.6665).abs() < 1e-12);
        assert!(average_power(1.5, &p).is_err());
    }

    #[test]
    fn energy_and_battery() {
        let p = PowerProfile::default();
        let r = energy_and_lifetime(0.1, 20.0, 1.0, &p).unwrap();
        assert!((r.energy_wh_per_day - 1.01333).abs() < 1e-6);
        assert!((r.lifetime_days.unwrap() - 0.9868).abs() < 1e-4);
        let r = energy_and_lifetime(0.0, 20.0, 1.0, &p).unwrap();
        assert!((r.energy_wh_per_day - 0.0037).abs() < 1e-12);
        let zero = PowerProfile { subsystems: vec![] };
        assert_eq!(energy_and_lifetime(0.5, 20.0, 1.0, &zero).unwrap().lifetime_days, None);
    }
}
