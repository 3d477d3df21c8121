//! Training loop, random-split and leave-one-session-out cross-validation,
//! and classification metrics.

mod cv;
mod metrics;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{is_contact, ThresholdMap};
use crate::frames::{Dataset, EMPTY_HAND, TAXELS};
use crate::model::{ModelError, IMU_FEATURES};
use crate::nn::NnError;

pub use cv::{cv_loso, cv_random, random_folds, EvalReport, FoldResult};
pub use metrics::{argmax, top_k_accuracy, ConfusionMatrix};
pub use train::{train, EpochRecord, LearningCurve, Predictions};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid evaluation configuration: {0}")]
    Config(String),
}

/// Optimization and protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Epochs (0-based) at which the learning rate is multiplied by `lr_gamma`.
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
    pub n_folds: usize,
    pub use_imu: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            lr0: 1e-3,
            lr_milestones: vec![20, 40],
            lr_gamma: 0.1,
            n_folds: 7,
            use_imu: false,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.epochs == 0 {
            return Err(EvalError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(EvalError::Config("batch size must be >= 2 for batch normalization".into()));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(EvalError::Config(format!("learning rate {} must be finite and >= 0", self.lr0)));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma.is_finite()) {
            return Err(EvalError::Config(format!("lr_gamma {} must be positive", self.lr_gamma)));
        }
        if self.n_folds < 2 {
            return Err(EvalError::Config("n_folds must be >= 2".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr0 * self.lr_gamma.powi(drops as i32)
    }
}

/// Frames selected for learning, stored as raw counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    counts: Vec<u16>,
    imu: Vec<[f64; IMU_FEATURES]>,
    labels: Vec<u8>,
    sessions: Vec<u8>,
}

impl SampleSet {
    /// Contact frames of object recordings plus every empty-hand frame.
    pub fn from_dataset(dataset: &Dataset, thresholds: &ThresholdMap) -> Self {
        let mut s = Self::default();
        for rec in dataset.recordings() {
            let aligned = rec.imu().len() == rec.frames().len();
            for (k, frame) in rec.frames().iter().enumerate() {
                if rec.label() != EMPTY_HAND && !is_contact(frame, thresholds) {
                    continue;
                }
                let imu = if aligned { rec.imu()[k].features() } else { [0.0; IMU_FEATURES] };
                s.push(frame.values(), imu, rec.label(), rec.session_id());
            }
        }
        s
    }

    pub fn push(&mut self, counts: &[u16], imu: [f64; IMU_FEATURES], label: u8, session: u8) {
        assert_eq!(counts.len(), TAXELS, "one frame of counts");
        self.counts.extend_from_slice(counts);
        self.imu.push(imu);
        self.labels.push(label);
        self.sessions.push(session);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sessions(&self) -> &[u8] {
        &self.sessions
    }

    pub fn counts(&self, i: usize) -> &[u16] {
        &self.counts[i * TAXELS..(i + 1) * TAXELS]
    }

    pub fn imu(&self, i: usize) -> [f64; IMU_FEATURES] {
        self.imu[i]
    }

    /// Samples per class id.
    pub fn class_counts(&self) -> [usize; crate::frames::NUM_CLASSES] {
        let mut c = [0; crate::frames::NUM_CLASSES];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    /// Distinct session ids in ascending order.
    pub fn session_ids(&self) -> Vec<u8> {
        let mut s = self.sessions.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Packed counts of the listed samples.
    fn gather_counts(&self, idx: &[usize]) -> Vec<u16> {
        let mut out = Vec::with_capacity(idx.len() * TAXELS);
        for &i in idx {
            out.extend_from_slice(self.counts(i));
        }
        out
    }
}
