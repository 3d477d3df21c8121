//! Per-taxel contact thresholds learned from empty-hand frames.
//!
//! A taxel's threshold is the largest count it reached while the hand was
//! empty. A frame counts as contact when any taxel is strictly above its
//! threshold, so the calibration frames themselves never register contact.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::frames::{Recording, TactileFrame, ADC_MAX, TAXELS};

pub const THRESHOLD_MAGIC: [u8; 8] = *b"STAGTH1\0";

/// Number of empty-hand frames below which calibration is considered thin.
pub const RECOMMENDED_CALIBRATION_FRAMES: usize = 20_000;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("calibration needs at least one empty-hand frame")]
    NoFrames,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad threshold file magic")]
    BadMagic,
    #[error("threshold file has {0} bytes, expected {expected}", expected = 8 + TAXELS * 2)]
    BadLength(usize),
    #[error("threshold value {0} above {ADC_MAX}")]
    OutOfRange(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdMap {
    thresholds: Vec<u16>,
}

impl ThresholdMap {
    pub fn new(thresholds: Vec<u16>) -> Result<Self, CalibError> {
        if thresholds.len() != TAXELS {
            return Err(CalibError::BadLength(8 + thresholds.len() * 2));
        }
        if let Some(&v) = thresholds.iter().find(|&&v| v > ADC_MAX) {
            return Err(CalibError::OutOfRange(v));
        }
        Ok(Self { thresholds })
    }

    pub fn uniform(value: u16) -> Self {
        Self {
            thresholds: vec![value.min(ADC_MAX); TAXELS],
        }
    }

    pub fn values(&self) -> &[u16] {
        &self.thresholds
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + TAXELS * 2);
        out.extend_from_slice(&THRESHOLD_MAGIC);
        for &t in &self.thresholds {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CalibError> {
        if bytes.len() < 8 || bytes[..8] != THRESHOLD_MAGIC {
            return Err(CalibError::BadMagic);
        }
        if bytes.len() != 8 + TAXELS * 2 {
            return Err(CalibError::BadLength(bytes.len()));
        }
        let thresholds = bytes[8..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Self::new(thresholds)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CalibError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CalibError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Elementwise maximum over the empty-hand frames.
pub fn calibrate(empty_frames: &[TactileFrame]) -> Result<ThresholdMap, CalibError> {
    if empty_frames.is_empty() {
        return Err(CalibError::NoFrames);
    }
    if empty_frames.len() < RECOMMENDED_CALIBRATION_FRAMES {
        log::warn!(
            "calibrating from {} empty-hand frames (fewer than {RECOMMENDED_CALIBRATION_FRAMES})",
            empty_frames.len()
        );
    }
    let mut thresholds = vec![0u16; TAXELS];
    for frame in empty_frames {
        for (t, &v) in thresholds.iter_mut().zip(frame.values()) {
            *t = (*t).max(v);
        }
    }
    Ok(ThresholdMap { thresholds })
}

pub fn is_contact(frame: &TactileFrame, thresholds: &ThresholdMap) -> bool {
    frame
        .values()
        .iter()
        .zip(&thresholds.thresholds)
        .any(|(&v, &t)| v > t)
}

/// Keeps only contact frames, preserving order.
pub fn filter_contact(recording: &Recording, thresholds: &ThresholdMap) -> Recording {
    let frames = recording
        .frames()
        .iter()
        .filter(|f| is_contact(f, thresholds))
        .cloned()
        .collect();
    recording.with_frames(frames)
}
