//! Sensor grid state and the isolation-scheme scan.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::readout::{adc_quantize, isolation_readout_voltage, resistance_unchecked};
use super::{ForceLaw, ReadoutConfig, SimError};
use crate::frames::{TactileFrame, GRID_SIZE, TAXELS};

/// Number of physical electrode crossings on the hand-shaped laminate.
pub const HAND_ACTIVE_CELLS: usize = 548;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Glove laminate: palm, thumb and four fingers.
    #[default]
    Hand,
    /// Square control sensor covering the whole grid.
    Square,
}

/// Rectangles (row range, col range) forming the glove outline.
const HAND_RECTS: &[(std::ops::Range<usize>, std::ops::Range<usize>)] = &[
    (14..30, 7..27),
    (3..14, 8..12),
    (0..14, 13..17),
    (2..14, 18..22),
    (6..14, 23..27),
    (30..31, 10..16),
];

pub fn active_mask(kind: MaskKind) -> Vec<bool> {
    match kind {
        MaskKind::Square => vec![true; TAXELS],
        MaskKind::Hand => {
            let mut m = vec![false; TAXELS];
            for (rows, cols) in HAND_RECTS {
                for r in rows.clone() {
                    for c in cols.clone() {
                        m[r * GRID_SIZE + c] = true;
                    }
                }
            }
            // Thumb: a band stepping one column left every two rows.
            for r in 16usize..28 {
                let c = 7 - (r - 16) / 2;
                for cc in c.saturating_sub(4)..c {
                    m[r * GRID_SIZE + cc] = true;
                }
            }
            m
        }
    }
}

/// Per-crossing resistances of the 32x32 laminate.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    resistance: Vec<f64>,
    active: Vec<bool>,
    no_load: f64,
    degradation: f64,
}

impl SensorGrid {
    /// All crossings unloaded.
    pub fn new(mask: MaskKind, law: &ForceLaw, degradation: f64) -> Result<Self, SimError> {
        law.validate()?;
        check_degradation(degradation)?;
        Ok(Self {
            resistance: vec![law.r_max; TAXELS],
            active: active_mask(mask),
            no_load: law.r_max,
            degradation,
        })
    }

    /// Explicit resistances; masked-out crossings are pinned to `no_load`.
    pub fn from_resistances(
        mut resistance: Vec<f64>,
        active: Vec<bool>,
        no_load: f64,
        degradation: f64,
    ) -> Result<Self, SimError> {
        if resistance.len() != TAXELS || active.len() != TAXELS {
            return Err(SimError::InvalidConfig("grid must be 32x32".into()));
        }
        check_degradation(degradation)?;
        if !(no_load > 0.0 && no_load.is_finite()) {
            return Err(SimError::InvalidConfig("no-load resistance must be positive".into()));
        }
        for (r, &a) in resistance.iter_mut().zip(&active) {
            if !a {
                *r = no_load;
            } else if !(*r > 0.0 && r.is_finite()) {
                return Err(SimError::InvalidConfig(format!("bad resistance {r}")));
            }
        }
        Ok(Self {
            resistance,
            active,
            no_load,
            degradation,
        })
    }

    /// Loads the grid with a pressure map (newtons per taxel).
    pub fn apply_pressure(&mut self, pressure: &[f64], law: &ForceLaw) -> Result<(), SimError> {
        if pressure.len() != TAXELS {
            return Err(SimError::InvalidConfig("pressure map must be 32x32".into()));
        }
        for ((r, &p), &a) in self.resistance.iter_mut().zip(pressure).zip(&self.active) {
            if p.is_nan() || p < 0.0 {
                return Err(SimError::NegativeForce(p));
            }
            *r = if a { resistance_unchecked(p, law) } else { self.no_load };
        }
        Ok(())
    }

    pub fn resistance(&self) -> &[f64] {
        &self.resistance
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn no_load(&self) -> f64 {
        self.no_load
    }

    pub fn degradation(&self) -> f64 {
        self.degradation
    }

    pub fn set_degradation(&mut self, d: f64) -> Result<(), SimError> {
        check_degradation(d)?;
        self.degradation = d;
        Ok(())
    }
}

fn check_degradation(d: f64) -> Result<(), SimError> {
    if d > 0.0 && d <= 1.0 {
        Ok(())
    } else {
        Err(SimError::InvalidConfig(format!(
            "degradation {d} outside (0, 1]"
        )))
    }
}

/// Noise-free, degradation-scaled voltage of one crossing.
///
/// Degradation multiplies the response above the no-load level; the no-load
/// reading itself is unaffected.
#[inline]
pub(crate) fn crossing_voltage(r: f64, no_load_v: f64, degradation: f64, cfg: &ReadoutConfig) -> f64 {
    let v = isolation_readout_voltage(r, cfg);
    no_load_v + degradation * (v - no_load_v)
}

/// Isolation scan of an arbitrary `rows x cols` resistance matrix (row-major).
///
/// Each row is grounded in turn while every other electrode is held at
/// `v_ref`; all columns of that row are converted at once.
pub fn scan_matrix(
    resistance: &[f64],
    no_load: f64,
    degradation: f64,
    cfg: &ReadoutConfig,
    seed: u64,
) -> Vec<u16> {
    let no_load_v = isolation_readout_voltage(no_load, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).unwrap());
    resistance
        .iter()
        .map(|&r| {
            let mut v = crossing_voltage(r, no_load_v, degradation, cfg);
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            adc_quantize(v, cfg)
        })
        .collect()
}

/// One full 32x32 frame from the grid's current state.
pub fn scan_frame(grid: &SensorGrid, cfg: &ReadoutConfig, seed: u64) -> TactileFrame {
    let values = scan_matrix(&grid.resistance, grid.no_load, grid.degradation, cfg, seed);
    TactileFrame::new(values, 0).expect("quantizer output is within range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensorsim::adc_quantize;
    use rand::Rng;

    fn quiet() -> ReadoutConfig {
        ReadoutConfig {
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn hand_mask_has_548_crossings() {
        assert_eq!(
            active_mask(MaskKind::Hand).iter().filter(|&&a| a).count(),
            HAND_ACTIVE_CELLS
        );
        assert_eq!(active_mask(MaskKind::Square).len(), TAXELS);
        let g = SensorGrid::new(MaskKind::Square, &ForceLaw::default(), 1.0).unwrap();
        assert_eq!(g.active_count(), 1024);
    }

    #[test]
    fn unloaded_grid_scans_to_uniform_baseline() {
        let law = ForceLaw::default();
        let cfg = quiet();
        let g = SensorGrid::new(MaskKind::Hand, &law, 1.0).unwrap();
        let f = scan_frame(&g, &cfg, 1);
        let base = cfg.baseline_count(law.r_max);
        assert!(f.values().iter().all(|&v| v == base));
    }

    #[test]
    fn open_circuit_baseline_is_v_ref_code() {
        // With R_FB negligible against the no-load resistance the idle reading
        // is the reference voltage itself.
        let law = ForceLaw {
            r_min: 1e3,
            r_max: 1e12,
            f_half: 1.0,
        };
        let cfg = quiet();
        let g = SensorGrid::new(MaskKind::Square, &law, 1.0).unwrap();
        let f = scan_frame(&g, &cfg, 0);
        let vref = adc_quantize(cfg.v_ref, &cfg);
        assert!(f.values().iter().all(|&v| v == vref));
    }

    #[test]
    fn single_crossing_at_r_fb_reads_twice_v_ref() {
        let law = ForceLaw::default();
        let cfg = quiet();
        let mut r = vec![law.r_max; TAXELS];
        r[5 * 32 + 9] = cfg.r_fb;
        let g = SensorGrid::from_resistances(r, vec![true; TAXELS], law.r_max, 1.0).unwrap();
        let f = scan_frame(&g, &cfg, 0);
        let base = cfg.baseline_count(law.r_max);
        for (i, &v) in f.values().iter().enumerate() {
            if i == 5 * 32 + 9 {
                assert_eq!(v, adc_quantize(2.0 * cfg.v_ref, &cfg));
            } else {
                assert_eq!(v, base);
            }
        }
    }

    #[test]
    fn degradation_halves_signal() {
        let law = ForceLaw::default();
        let cfg = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p: Vec<f64> = (0..TAXELS).map(|_| rng.random_range(0.0..12.0)).collect();
        let mut g = SensorGrid::new(MaskKind::Square, &law, 1.0).unwrap();
        g.apply_pressure(&p, &law).unwrap();
        let full = scan_frame(&g, &cfg, 0);
        g.set_degradation(0.5).unwrap();
        let half = scan_frame(&g, &cfg, 0);
        let base = cfg.baseline_count(law.r_max) as f64;
        for (&a, &b) in full.values().iter().zip(half.values()) {
            let expected = (a as f64 - base) / 2.0;
            assert!(((b as f64 - base) - expected).abs() <= 1.0);
        }
    }

    #[test]
    fn scan_is_deterministic_for_a_seed() {
        let law = ForceLaw::default();
        let cfg = ReadoutConfig::default();
        let g = SensorGrid::new(MaskKind::Hand, &law, 0.8).unwrap();
        assert_eq!(scan_frame(&g, &cfg, 99), scan_frame(&g, &cfg, 99));
        assert_ne!(scan_frame(&g, &cfg, 99), scan_frame(&g, &cfg, 100));
    }

    #[test]
    fn masked_crossings_ignore_pressure() {
        let law = ForceLaw::default();
        let cfg = quiet();
        let mut g = SensorGrid::new(MaskKind::Hand, &law, 1.0).unwrap();
        g.apply_pressure(&vec![5.0; TAXELS], &law).unwrap();
        let f = scan_frame(&g, &cfg, 0);
        let base = cfg.baseline_count(law.r_max);
        for (i, &a) in g.active().iter().enumerate() {
            assert_eq!(f.values()[i] == base, !a);
        }
    }

    #[test]
    fn more_force_never_lowers_a_count() {
        let law = ForceLaw::default();
        let cfg = quiet();
        let mut g = SensorGrid::new(MaskKind::Square, &law, 0.7).unwrap();
        let mut p = vec![0.5; TAXELS];
        let mut prev = 0;
        for step in 0..100 {
            p[200] = step as f64 * 0.3;
            g.apply_pressure(&p, &law).unwrap();
            let v = scan_frame(&g, &cfg, 0).values()[200];
            assert!(v >= prev);
            prev = v;
        }
    }
}
