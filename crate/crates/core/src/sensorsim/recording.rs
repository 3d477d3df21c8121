//! Frame-by-frame acquisition of a scene into a recording.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::{scan_frame, SensorGrid};
use super::scene::{ForceScene, SceneKind};
use super::{ForceLaw, MaskKind, ReadoutConfig, SimError};
use crate::frames::{ImuSample, Recording, TactileFrame};
use crate::seed;

/// Frame capacity of the acquisition buffer.
pub const MAX_BUFFER_FRAMES: usize = 4096;
/// Accelerometer counts per g at the +-2 g range.
const ACCEL_PER_G: f64 = 16384.0;

/// Everything needed to turn pressure into counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub force_law: ForceLaw,
    pub readout: ReadoutConfig,
    pub mask: MaskKind,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.force_law.validate()?;
        self.readout.validate()
    }

    /// Count of an unloaded taxel.
    pub fn baseline_count(&self) -> u16 {
        self.readout.baseline_count(self.force_law.r_max)
    }

    pub fn frame_period_us(&self) -> u64 {
        (1e6 / self.readout.scan_rate).round() as u64
    }

    pub fn grid(&self, degradation: f64) -> Result<SensorGrid, SimError> {
        SensorGrid::new(self.mask, &self.force_law, degradation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingMeta {
    pub session_id: u8,
    /// Drives scan noise and IMU synthesis.
    pub seed: u64,
}

/// Scans every frame of `scene` through `grid` at the configured rate.
pub fn simulate_recording(
    scene: &ForceScene,
    grid: &SensorGrid,
    cfg: &SimConfig,
    degradation: f64,
    meta: RecordingMeta,
) -> Result<Recording, SimError> {
    let n = scene.frames();
    if n > MAX_BUFFER_FRAMES {
        return Err(SimError::BufferLimit(n));
    }
    cfg.validate()?;
    let mut grid = grid.clone();
    grid.set_degradation(degradation)?;
    let period = cfg.frame_period_us();
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        grid.apply_pressure(&scene.pressure(k), &cfg.force_law)?;
        let frame: TactileFrame = scan_frame(&grid, &cfg.readout, seed::derive(meta.seed, &[1, k as u64]));
        frames.push(frame.with_timestamp(k as u64 * period));
    }
    let imu = synthesize_imu(scene, n, period, meta.seed);
    Recording::new(scene.label(), meta.session_id, frames, imu)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))
}

/// Gravity seen through a slowly wandering hand orientation plus sensor noise.
fn synthesize_imu(scene: &ForceScene, n: usize, period: u64, seed: u64) -> Vec<ImuSample> {
    let mut rng = seed::rng(seed, &[2]);
    let max_tilt: f64 = match scene.kind() {
        SceneKind::Press { .. } => 10.0,
        SceneKind::Slide { .. } => 1.0,
        SceneKind::EmptyHand => 60.0,
    };
    let roll0 = rng.random_range(-max_tilt..=max_tilt).to_radians();
    let pitch0 = rng.random_range(-max_tilt..=max_tilt).to_radians();
    let wobble = rng.random_range(0.01..0.05);
    let accel_noise = Normal::new(0.0, 40.0).unwrap();
    let gyro_noise = Normal::new(0.0, 15.0).unwrap();
    let clamp = |v: f64| v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
    (0..n)
        .map(|k| {
            let t = k as f64;
            let roll = roll0 + 0.1 * max_tilt.to_radians() * (wobble * t).sin();
            let pitch = pitch0 + 0.1 * max_tilt.to_radians() * (0.7 * wobble * t).cos();
            let g = [
                -pitch.sin(),
                roll.sin() * pitch.cos(),
                roll.cos() * pitch.cos(),
            ];
            let mut accel = [0i16; 3];
            let mut gyro = [0i16; 3];
            for i in 0..3 {
                accel[i] = clamp(g[i] * ACCEL_PER_G + accel_noise.sample(&mut rng));
                gyro[i] = clamp(gyro_noise.sample(&mut rng));
            }
            ImuSample {
                accel,
                gyro,
                timestamp_us: k as u64 * period,
            }
        })
        .collect()
}
