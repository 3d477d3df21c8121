//! Force-sensitive resistor law and the isolation readout front-end.

use serde::{Deserialize, Serialize};

use super::SimError;

/// Hyperbolic force-to-resistance law of the piezoresistive film.
///
/// `R(F) = R_min + (R_max - R_min) / (1 + F / F_half)`: the no-load
/// resistance is `R_max`, it halves its excess over `R_min` at `F_half`, and
/// approaches `R_min` under large force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceLaw {
    pub r_min: f64,
    pub r_max: f64,
    pub f_half: f64,
}

impl Default for ForceLaw {
    fn default() -> Self {
        Self {
            r_min: 1.0e3,
            r_max: 1.0e6,
            f_half: 1.0,
        }
    }
}

impl ForceLaw {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.r_min > 0.0
            && self.r_min < self.r_max
            && self.r_max.is_finite()
            && self.f_half > 0.0
            && self.f_half.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!(
                "force law needs 0 < r_min < r_max and f_half > 0, got {self:?}"
            )))
        }
    }
}

/// Resistance of one crossing under `force` newtons.
pub fn force_to_resistance(force: f64, law: &ForceLaw) -> Result<f64, SimError> {
    if force.is_nan() || force < 0.0 {
        return Err(SimError::NegativeForce(force));
    }
    law.validate()?;
    Ok(resistance_unchecked(force, law))
}

#[inline]
pub(crate) fn resistance_unchecked(force: f64, law: &ForceLaw) -> f64 {
    law.r_min + (law.r_max - law.r_min) / (1.0 + force / law.f_half)
}

/// Analog front-end parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutConfig {
    /// Reference voltage on the op-amp positive inputs and idle electrodes.
    pub v_ref: f64,
    /// Feedback resistor of each column amplifier.
    pub r_fb: f64,
    /// ADC full-scale voltage.
    pub adc_ref: f64,
    pub adc_bits: u32,
    /// Standard deviation of additive Gaussian noise at the ADC input.
    pub noise_sigma: f64,
    /// Frames per second.
    pub scan_rate: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            v_ref: 1.2,
            r_fb: 100.0e3,
            adc_ref: 3.3,
            adc_bits: 12,
            noise_sigma: 0.002,
            scan_rate: 100.0,
        }
    }
}

impl ReadoutConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        if !(self.v_ref > 0.0 && self.v_ref < self.adc_ref) {
            problems.push("need 0 < v_ref < adc_ref");
        }
        if !(self.r_fb > 0.0 && self.r_fb.is_finite()) {
            problems.push("r_fb must be positive");
        }
        if !matches!(self.adc_bits, 10 | 12) {
            problems.push("adc_bits must be 10 or 12");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            problems.push("noise_sigma must be non-negative");
        }
        if self.scan_rate.is_nan() || self.scan_rate <= 0.0 {
            problems.push("scan_rate must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn adc_max(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    /// Count read from a crossing at `r_max`, i.e. the no-load frame value.
    pub fn baseline_count(&self, r_max: f64) -> u16 {
        adc_quantize(isolation_readout_voltage(r_max, self), self)
    }
}

/// Unclamped output of the inverting stage: the column sits at `v_ref`, the
/// active row at ground, so the crossing carries `v_ref / R_FSR`, which the
/// feedback resistor turns into `v_ref * (R_FB + R_FSR) / R_FSR`.
#[inline]
pub(crate) fn amplifier_output(r_fsr: f64, cfg: &ReadoutConfig) -> f64 {
    cfg.v_ref * (cfg.r_fb + r_fsr) / r_fsr
}

/// Column amplifier output for one crossing, clamped to the ADC range.
pub fn isolation_readout_voltage(r_fsr: f64, cfg: &ReadoutConfig) -> f64 {
    amplifier_output(r_fsr, cfg).clamp(0.0, cfg.adc_ref)
}

/// Half-up rounding of the clamped voltage onto `2^bits - 1` codes.
pub fn adc_quantize(v: f64, cfg: &ReadoutConfig) -> u16 {
    let max = cfg.adc_max() as f64;
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, cfg.adc_ref) };
    let code = (v / cfg.adc_ref * max + 0.5).floor();
    code.clamp(0.0, max) as u16
}
