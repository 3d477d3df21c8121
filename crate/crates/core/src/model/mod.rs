//! The tactile classifier: a single-frame residual CNN with an optional IMU
//! branch, its static profiler, inference entry point and file format.

mod io;
mod profile;

use thiserror::Error;

use crate::frames::{TactileFrame, ADC_MAX, GRID_SIZE, NUM_CLASSES, TAXELS};
use crate::nn::{
    softmax, BatchNorm, Conv2d, Ctx, Dense, Dropout, Float, Layer, NnError, Param, Pool, PoolKind,
    Relu, ResidualBlock, Sequential, Tensor,
};
use crate::seed;
use crate::sensorsim::SimConfig;

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC};
pub use profile::{profile, profile_sequential, ProfileReport};

/// Width of the flattened tactile features (7 x 7 x 32).
pub const FEATURE_WIDTH: usize = 1568;
pub const IMU_FEATURES: usize = 6;
pub const IMU_HIDDEN: usize = 30;
pub const IMU_OUT: usize = 3;
pub const DROPOUT_RATE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file: expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: Vec<u8>, found: Vec<u8> },
    #[error("model file truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("IMU features supplied to a network without an IMU branch")]
    UnexpectedImu,
    #[error("network has an IMU branch but no IMU features were supplied")]
    MissingImu,
}

/// Tactile CNN, optional IMU MLP, and the classifier over their
/// concatenated features. `baseline` is the no-contact count subtracted
/// before scaling inputs by the ADC full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileNet<T> {
    pub baseline: f64,
    pub tactile: Sequential<T>,
    pub imu: Option<Sequential<T>>,
    pub classifier: Dense<T>,
}

/// Builds the default network. Each layer draws its initial weights from
/// its own seed stream, so the tactile path is identical with and without
/// the IMU branch.
pub fn build_tactile_net(with_imu: bool, seed: u64) -> TactileNet<f64> {
    build(with_imu, seed).expect("static architecture is consistent")
}

fn build(with_imu: bool, seed: u64) -> Result<TactileNet<f64>, NnError> {
    let rng = |branch: u64, i: u64| seed::rng(seed, &[branch, i]);
    let tactile = Sequential::new(vec![
        Layer::Conv2d(Conv2d::new(1, 16, 3, 1, 1, &mut rng(0, 0))?),
        Layer::BatchNorm(BatchNorm::new(16)),
        Layer::Relu(Relu::default()),
        Layer::Pool(Pool::new(PoolKind::Max, 2, 2)?),
        Layer::Residual(Box::new(ResidualBlock::new(16, 16, 1, &mut rng(0, 4))?)),
        Layer::Residual(Box::new(ResidualBlock::new(16, 32, 1, &mut rng(0, 5))?)),
        Layer::Pool(Pool::new(PoolKind::Max, 3, 2)?),
        Layer::Dropout(Dropout::new(DROPOUT_RATE)?),
        Layer::flatten(),
    ]);
    let imu = if with_imu {
        Some(Sequential::new(vec![
            Layer::Dense(Dense::new(IMU_FEATURES, IMU_HIDDEN, &mut rng(1, 0))?),
            Layer::Relu(Relu::default()),
            Layer::Dense(Dense::new(IMU_HIDDEN, IMU_OUT, &mut rng(1, 2))?),
        ]))
    } else {
        None
    };
    let width = FEATURE_WIDTH + if with_imu { IMU_OUT } else { 0 };
    let classifier = Dense::new(width, NUM_CLASSES, &mut rng(2, 0))?;
    Ok(TactileNet {
        baseline: SimConfig::default().baseline_count() as f64,
        tactile,
        imu,
        classifier,
    })
}

impl<T: Float> TactileNet<T> {
    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn has_imu(&self) -> bool {
        self.imu.is_some()
    }

    /// Logits `(N, 17)` for inputs `(N, 1, 32, 32)` and optional IMU `(N, 6)`.
    pub fn forward(
        &mut self,
        x: &Tensor<T>,
        imu: Option<&Tensor<T>>,
        ctx: &mut Ctx,
    ) -> Result<Tensor<T>, ModelError> {
        let features = self.tactile.forward(x, ctx)?;
        let features = match (&mut self.imu, imu) {
            (None, None) => features,
            (None, Some(_)) => return Err(ModelError::UnexpectedImu),
            (Some(_), None) => return Err(ModelError::MissingImu),
            (Some(branch), Some(v)) => {
                let h = branch.forward(v, ctx)?;
                concat_rows(&features, &h)?
            }
        };
        Ok(self.classifier.forward(&features, ctx)?)
    }

    /// Back-propagates the logit gradient, accumulating parameter gradients.
    pub fn backward(&mut self, g: &Tensor<T>) -> Result<(), ModelError> {
        let g = self.classifier.backward(g)?;
        match &mut self.imu {
            None => {
                self.tactile.backward(&g)?;
            }
            Some(branch) => {
                let (gf, gh) = split_rows(&g, FEATURE_WIDTH)?;
                self.tactile.backward(&gf)?;
                branch.backward(&gh)?;
            }
        }
        Ok(())
    }

    /// Tactile path, IMU branch, then classifier.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.tactile.visit_params(f);
        if let Some(b) = &mut self.imu {
            b.visit_params(f);
        }
        f(&mut self.classifier.weight);
        f(&mut self.classifier.bias);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    /// Flat copy of every parameter value in visit order.
    pub fn param_values(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend(p.value.iter().map(|v| v.to_f64())));
        out
    }

    pub fn cast<U: Float>(&self) -> TactileNet<U> {
        TactileNet {
            baseline: self.baseline,
            tactile: self.tactile.cast(),
            imu: self.imu.as_ref().map(|b| b.cast()),
            classifier: Dense::from_parts(
                self.classifier.in_features,
                self.classifier.out_features,
                self.classifier.weight.value.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                self.classifier.bias.value.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            )
            .expect("same dimensions"),
        }
    }

    /// Network input for raw frames: `(count - baseline) / 4095`.
    pub fn input(&self, frames: &[&TactileFrame]) -> Tensor<T> {
        let mut data = Vec::with_capacity(frames.len() * TAXELS);
        for f in frames {
            data.extend(f.values().iter().map(|&v| self.normalize(v)));
        }
        Tensor::new(&[frames.len(), 1, GRID_SIZE, GRID_SIZE], data).expect("frame size")
    }

    /// Network input for `n` frames of packed counts.
    pub fn input_counts(&self, counts: &[u16]) -> Tensor<T> {
        let n = counts.len() / TAXELS;
        let data = counts[..n * TAXELS].iter().map(|&v| self.normalize(v)).collect();
        Tensor::new(&[n, 1, GRID_SIZE, GRID_SIZE], data).expect("frame size")
    }

    #[inline]
    fn normalize(&self, count: u16) -> T {
        T::from_f64((count as f64 - self.baseline) / ADC_MAX as f64)
    }
}

/// IMU feature rows as a `(N, 6)` tensor.
pub fn imu_input<T: Float>(features: &[[f64; IMU_FEATURES]]) -> Tensor<T> {
    let data = features.iter().flatten().map(|v| T::from_f64(*v)).collect();
    Tensor::new(&[features.len(), IMU_FEATURES], data).expect("imu width")
}

fn concat_rows<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, fa) = a.dims2()?;
    let (nb, fb) = b.dims2()?;
    if n != nb {
        return Err(NnError::Shape(format!("concat of {n} and {nb} rows")));
    }
    let mut data = Vec::with_capacity(n * (fa + fb));
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * fa..(i + 1) * fa]);
        data.extend_from_slice(&b.data()[i * fb..(i + 1) * fb]);
    }
    Tensor::new(&[n, fa + fb], data)
}

fn split_rows<T: Float>(g: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    let (n, f) = g.dims2()?;
    if at > f {
        return Err(NnError::Shape(format!("split at {at} of width {f}")));
    }
    let mut left = Vec::with_capacity(n * at);
    let mut right = Vec::with_capacity(n * (f - at));
    for row in g.data().chunks_exact(f) {
        left.extend_from_slice(&row[..at]);
        right.extend_from_slice(&row[at..]);
    }
    Ok((Tensor::new(&[n, at], left)?, Tensor::new(&[n, f - at], right)?))
}

/// Class probabilities for one frame in evaluation mode.
pub fn infer(
    net: &TactileNet<f32>,
    frame: &TactileFrame,
    imu: Option<&[f64; IMU_FEATURES]>,
) -> Result<Vec<f32>, ModelError> {
    let mut probs = infer_batch(net, &[frame], imu.map(std::slice::from_ref))?;
    Ok(probs.pop().expect("one row"))
}

/// Class probabilities for a batch of frames in evaluation mode.
pub fn infer_batch(
    net: &TactileNet<f32>,
    frames: &[&TactileFrame],
    imu: Option<&[[f64; IMU_FEATURES]]>,
) -> Result<Vec<Vec<f32>>, ModelError> {
    match (net.has_imu(), imu) {
        (false, Some(_)) => return Err(ModelError::UnexpectedImu),
        (true, None) => return Err(ModelError::MissingImu),
        _ => {}
    }
    let x = net.input(frames);
    let imu = imu.map(imu_input::<f32>);
    // Evaluation mode never writes layer caches; the clone keeps `net` shared.
    let mut worker = net.clone();
    let logits = worker.forward(&x, imu.as_ref(), &mut Ctx::eval())?;
    let probs = softmax(&logits)?;
    Ok(probs
        .data()
        .chunks_exact(NUM_CLASSES)
        .map(|r| r.to_vec())
        .collect())
}
