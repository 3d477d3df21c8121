//! Synthetic multi-session dataset generation.
//!
//! Each session records every class once. Sessions differ in two ways: the
//! sensor's response degrades by a per-session factor, and the glove sits
//! differently. Placement drifts progressively from session to session,
//! centred on the middle session and growing as a power of the distance from
//! it, with a small random jitter on top. Worn fabric stretches the footprint
//! in proportion to the lost response.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::recording::{simulate_recording, RecordingMeta, SimConfig, MAX_BUFFER_FRAMES};
use super::scene::{generate_scene, SceneKind, SessionPose};
use super::SimError;
use crate::frames::{Dataset, TactileFrame, EMPTY_HAND, NUM_CLASSES};
use crate::seed;

/// Relative mean response of sessions 1..5 of the glove.
pub const GLOVE_DEGRADATION: [f64; 5] = [1.0, 0.778, 0.635, 0.543, 0.457];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub sim: SimConfig,
    pub sessions: usize,
    /// Class ids to record; defaults to all 17.
    pub classes: Vec<u8>,
    pub seconds_per_recording: f64,
    /// Response factor per session, in session order.
    pub degradation: Vec<f64>,
    /// Placement offset added per session (x, y pixels).
    pub session_drift_px: (f64, f64),
    /// Rotation added per session (degrees).
    pub session_drift_deg: f64,
    /// Drift grows as |k|^exponent for the k-th session from the middle.
    pub session_drift_exponent: f64,
    /// Amplitude of the random per-session placement jitter (pixels).
    pub session_jitter_px: f64,
    /// Extra footprint scale per unit of lost response.
    pub wear_stretch: f64,
    /// Empty-hand frames recorded for threshold calibration.
    pub calibration_frames: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            sessions: 5,
            classes: (0..NUM_CLASSES as u8).collect(),
            seconds_per_recording: 40.0,
            degradation: GLOVE_DEGRADATION.to_vec(),
            session_drift_px: (1.0, 0.6),
            session_drift_deg: 4.0,
            session_drift_exponent: 2.0,
            session_jitter_px: 0.3,
            wear_stretch: 0.3,
            calibration_frames: 20_480,
        }
    }
}

impl SynthConfig {
    pub fn frames_per_recording(&self) -> usize {
        (self.seconds_per_recording * self.sim.readout.scan_rate).round() as usize
    }

    /// Frames the dataset will contain.
    pub fn planned_frames(&self) -> usize {
        self.sessions * self.classes.len() * self.frames_per_recording()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.sim.validate()?;
        if self.sessions == 0 || self.sessions > 255 {
            return Err(SimError::InvalidConfig("sessions must be in 1..=255".into()));
        }
        if self.degradation.len() < self.sessions {
            return Err(SimError::InvalidConfig(format!(
                "{} degradation factors for {} sessions",
                self.degradation.len(),
                self.sessions
            )));
        }
        if let Some(d) = self.degradation.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
            return Err(SimError::InvalidConfig(format!("degradation {d} outside (0, 1]")));
        }
        if !(self.session_jitter_px >= 0.0 && self.wear_stretch >= 0.0) {
            return Err(SimError::InvalidConfig("jitter and wear stretch must be >= 0".into()));
        }
        if !(self.session_drift_exponent > 0.0 && self.session_drift_exponent.is_finite()) {
            return Err(SimError::InvalidConfig("drift exponent must be positive".into()));
        }
        if let Some(c) = self.classes.iter().find(|c| **c as usize >= NUM_CLASSES) {
            return Err(SimError::UnknownClass(*c));
        }
        let n = self.frames_per_recording();
        if n == 0 {
            return Err(SimError::InvalidConfig("recordings must hold at least one frame".into()));
        }
        if n > MAX_BUFFER_FRAMES {
            return Err(SimError::BufferLimit(n));
        }
        Ok(())
    }

    /// Glove placement for session `index` (0-based).
    pub fn session_pose(&self, index: usize, seed: u64) -> SessionPose {
        let mut rng = seed::rng(seed, &[0x5e55, index as u64]);
        let a = self.session_jitter_px;
        let jitter = if a > 0.0 {
            (rng.random_range(-a..=a), rng.random_range(-a..=a))
        } else {
            (0.0, 0.0)
        };
        let k = index as f64 - (self.sessions as f64 - 1.0) / 2.0;
        let step = k.signum() * k.abs().powf(self.session_drift_exponent);
        SessionPose {
            offset: (
                step * self.session_drift_px.0 + jitter.0,
                step * self.session_drift_px.1 + jitter.1,
            ),
            rotation_deg: step * self.session_drift_deg,
            stretch: 1.0 + self.wear_stretch * (1.0 - self.degradation[index]),
        }
    }
}

/// Records every class in every session.
pub fn synthesize_dataset(cfg: &SynthConfig, seed: u64) -> Result<Dataset, SimError> {
    cfg.validate()?;
    let n = cfg.frames_per_recording();
    let jobs: Vec<(usize, u8)> = (0..cfg.sessions)
        .flat_map(|s| cfg.classes.iter().map(move |&c| (s, c)))
        .collect();
    let recordings = jobs
        .par_iter()
        .map(|&(s, class_id)| {
            let rec_seed = seed::derive(seed, &[0xda7a, s as u64, class_id as u64]);
            let kind = if class_id == EMPTY_HAND {
                SceneKind::EmptyHand
            } else {
                SceneKind::Press { class_id }
            };
            let scene = generate_scene(kind, n, rec_seed)?.with_session_pose(cfg.session_pose(s, seed));
            let d = cfg.degradation[s];
            let grid = cfg.sim.grid(d)?;
            let meta = RecordingMeta {
                session_id: (s + 1) as u8,
                seed: rec_seed,
            };
            simulate_recording(&scene, &grid, &cfg.sim, d, meta)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut dataset = Dataset::default();
    for rec in recordings {
        dataset.push(rec);
    }
    Ok(dataset)
}

/// Empty-hand frames across varied hand poses, for threshold calibration.
pub fn synthesize_calibration_frames(
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Vec<TactileFrame>, SimError> {
    cfg.sim.validate()?;
    let total = cfg.calibration_frames;
    let chunks: Vec<(usize, usize)> = (0..total)
        .step_by(MAX_BUFFER_FRAMES)
        .enumerate()
        .map(|(i, start)| (i, (total - start).min(MAX_BUFFER_FRAMES)))
        .collect();
    let grid = cfg.sim.grid(1.0)?;
    let parts = chunks
        .par_iter()
        .map(|&(i, len)| {
            let rec_seed = seed::derive(seed, &[0xca1b, i as u64]);
            let scene = generate_scene(SceneKind::EmptyHand, len, rec_seed)?;
            let meta = RecordingMeta {
                session_id: 1,
                seed: rec_seed,
            };
            simulate_recording(&scene, &grid, &cfg.sim, 1.0, meta)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts
        .into_iter()
        .flat_map(|r| r.frames().to_vec())
        .collect())
}
