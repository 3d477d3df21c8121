//! Tactile frames, IMU samples, recordings and datasets.
//!
//! A frame is one complete scan of the 32x32 electrode-crossing grid. Rows are
//! the driven electrodes, columns the sensed ones. Values are raw 12-bit ADC
//! counts.

mod io;
pub mod pgm;

use std::collections::BTreeMap;

use thiserror::Error;

pub use io::{read_dataset, read_dataset_bytes, write_dataset, write_dataset_bytes, DATASET_MAGIC};

/// Side length of the square tactile grid.
pub const GRID_SIZE: usize = 32;
/// Number of taxels in one frame.
pub const TAXELS: usize = GRID_SIZE * GRID_SIZE;
/// Largest value a 12-bit ADC can produce.
pub const ADC_MAX: u16 = 4095;
/// Number of classes: 16 objects and the empty hand.
pub const NUM_CLASSES: usize = 17;
/// Class id reserved for the empty hand.
pub const EMPTY_HAND: u8 = 16;
/// Spacing of synthesized timestamps (100 Hz).
pub const FRAME_PERIOD_US: u64 = 10_000;

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 8], found: Vec<u8> },
    #[error("file truncated at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("empty frame sequence")]
    Empty,
}

pub type Result<T> = std::result::Result<T, FramesError>;

/// One 32x32 grid of ADC counts with its acquisition time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TactileFrame {
    values: Vec<u16>,
    timestamp_us: u64,
}

impl TactileFrame {
    /// Builds a frame from exactly 1024 row-major counts, each at most 4095.
    pub fn new(values: Vec<u16>, timestamp_us: u64) -> Result<Self> {
        if values.len() != TAXELS {
            return Err(FramesError::Invalid(format!(
                "frame has {} taxels, expected {TAXELS}",
                values.len()
            )));
        }
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, &v)| v > ADC_MAX) {
            return Err(FramesError::Invalid(format!(
                "taxel {idx} has value {v} > {ADC_MAX}"
            )));
        }
        Ok(Self {
            values,
            timestamp_us,
        })
    }

    /// A frame with every taxel at `value` (clamped to the ADC range).
    pub fn uniform(value: u16, timestamp_us: u64) -> Self {
        Self {
            values: vec![value.min(ADC_MAX); TAXELS],
            timestamp_us,
        }
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn with_timestamp(mut self, timestamp_us: u64) -> Self {
        self.timestamp_us = timestamp_us;
        self
    }

    /// Count at driven row `row`, sensed column `col`.
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.values[row * GRID_SIZE + col]
    }

    pub fn into_values(self) -> Vec<u16> {
        self.values
    }
}

/// One accelerometer + gyroscope sample in raw 16-bit counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImuSample {
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
    pub timestamp_us: u64,
}

impl ImuSample {
    /// The six raw channels scaled to [-1, 1].
    pub fn features(&self) -> [f64; 6] {
        let s = |v: i16| v as f64 / 32768.0;
        [
            s(self.accel[0]),
            s(self.accel[1]),
            s(self.accel[2]),
            s(self.gyro[0]),
            s(self.gyro[1]),
            s(self.gyro[2]),
        ]
    }
}

/// One labeled manipulation: an ordered frame sequence plus optional IMU data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recording {
    label: u8,
    session_id: u8,
    frames: Vec<TactileFrame>,
    imu: Vec<ImuSample>,
}

impl Recording {
    pub fn new(
        label: u8,
        session_id: u8,
        frames: Vec<TactileFrame>,
        imu: Vec<ImuSample>,
    ) -> Result<Self> {
        if label as usize >= NUM_CLASSES {
            return Err(FramesError::Invalid(format!(
                "label {label} outside [0, {}]",
                NUM_CLASSES - 1
            )));
        }
        if session_id == 0 {
            return Err(FramesError::Invalid("session id must be >= 1".into()));
        }
        if let Some(w) = frames
            .windows(2)
            .find(|w| w[1].timestamp_us <= w[0].timestamp_us)
        {
            return Err(FramesError::Invalid(format!(
                "frame timestamps not strictly increasing ({} then {})",
                w[0].timestamp_us, w[1].timestamp_us
            )));
        }
        Ok(Self {
            label,
            session_id,
            frames,
            imu,
        })
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn session_id(&self) -> u8 {
        self.session_id
    }

    pub fn frames(&self) -> &[TactileFrame] {
        &self.frames
    }

    pub fn imu(&self) -> &[ImuSample] {
        &self.imu
    }

    /// Same recording with a different frame subset; timestamps stay ordered
    /// as long as `keep` preserves order.
    pub(crate) fn with_frames(&self, frames: Vec<TactileFrame>) -> Self {
        Self {
            label: self.label,
            session_id: self.session_id,
            frames,
            imu: self.imu.clone(),
        }
    }
}

/// Recordings grouped by session, plus the 17 class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    class_names: Vec<String>,
    sessions: BTreeMap<u8, Vec<Recording>>,
}

/// Names used by the synthetic dataset; index 16 is the empty hand.
pub const DEFAULT_CLASS_NAMES: [&str; NUM_CLASSES] = [
    "ball",
    "battery",
    "brick",
    "can",
    "cup",
    "glasses",
    "key",
    "lotion",
    "mug",
    "pen",
    "phone",
    "plate",
    "scissors",
    "screwdriver",
    "spoon",
    "tape",
    "empty_hand",
];

impl Default for Dataset {
    fn default() -> Self {
        Self::new(DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect())
            .expect("default class names are valid")
    }
}

impl Dataset {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.len() != NUM_CLASSES {
            return Err(FramesError::Invalid(format!(
                "{} class names, expected {NUM_CLASSES}",
                class_names.len()
            )));
        }
        let mut sorted = class_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != NUM_CLASSES {
            return Err(FramesError::Invalid("class names are not distinct".into()));
        }
        Ok(Self {
            class_names,
            sessions: BTreeMap::new(),
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn push(&mut self, recording: Recording) {
        self.sessions
            .entry(recording.session_id)
            .or_default()
            .push(recording);
    }

    pub fn sessions(&self) -> &BTreeMap<u8, Vec<Recording>> {
        &self.sessions
    }

    pub fn session(&self, id: u8) -> Option<&[Recording]> {
        self.sessions.get(&id).map(Vec::as_slice)
    }

    pub fn session_ids(&self) -> Vec<u8> {
        self.sessions.keys().copied().collect()
    }

    /// All recordings in session order, then insertion order.
    pub fn recordings(&self) -> impl Iterator<Item = &Recording> {
        self.sessions.values().flatten()
    }

    pub fn recording_count(&self) -> usize {
        self.sessions.values().map(Vec::len).sum()
    }

    pub fn frame_count(&self) -> usize {
        self.recordings().map(|r| r.frames.len()).sum()
    }
}

/// Summary statistics over a frame sequence.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FrameStats {
    pub mean: f64,
    pub max: u16,
    pub active_taxel_count: usize,
}

/// Mean over all taxels of all frames, overall maximum, and the number of
/// taxels whose maximum over the sequence is non-zero.
pub fn frame_stats(frames: &[TactileFrame]) -> Result<FrameStats> {
    if frames.is_empty() {
        return Err(FramesError::Empty);
    }
    let mut per_taxel_max = [0u16; TAXELS];
    let mut sum: u64 = 0;
    for frame in frames {
        for (m, &v) in per_taxel_max.iter_mut().zip(&frame.values) {
            *m = (*m).max(v);
            sum += v as u64;
        }
    }
    Ok(FrameStats {
        mean: sum as f64 / (TAXELS * frames.len()) as f64,
        max: per_taxel_max.iter().copied().max().unwrap_or(0),
        active_taxel_count: per_taxel_max.iter().filter(|&&m| m > 0).count(),
    })
}
