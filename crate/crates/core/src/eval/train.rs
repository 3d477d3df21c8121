//! Mini-batch Adam training with per-epoch learning curves.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::metrics::argmax;
use super::{EvalConfig, EvalError, SampleSet};
use crate::frames::NUM_CLASSES;
use crate::model::{imu_input, TactileNet};
use crate::nn::{cross_entropy, softmax, Adam, AdamConfig, Ctx, Tensor};
use crate::seed;

/// Samples per forward pass when evaluating.
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LearningCurve {
    pub epochs: Vec<EpochRecord>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.6e},{:.6},{:.6},{:.6},{:.6}",
                e.epoch, e.lr, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
            );
        }
        s
    }
}

/// Class probabilities for evaluated samples, `NUM_CLASSES` per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Splits shuffled indices into batches; a trailing single sample joins the
/// previous batch so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("two batches") = &order[start..];
    }
    out
}

fn inputs(net: &TactileNet<f64>, data: &SampleSet, idx: &[usize]) -> (Tensor<f64>, Option<Tensor<f64>>) {
    let x = net.input_counts(&data.gather_counts(idx));
    let imu = net.has_imu().then(|| {
        let rows: Vec<_> = idx.iter().map(|&i| data.imu(i)).collect();
        imu_input(&rows)
    });
    (x, imu)
}

/// Evaluation-mode probabilities and mean loss for `idx`.
pub(crate) fn evaluate(
    net: &mut TactileNet<f64>,
    data: &SampleSet,
    idx: &[usize],
) -> Result<(Predictions, f64), EvalError> {
    let mut preds = Predictions::default();
    let mut loss_sum = 0.0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, imu) = inputs(net, data, chunk);
        let logits = net.forward(&x, imu.as_ref(), &mut Ctx::eval())?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i] as usize).collect();
        let (loss, _) = cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        preds.probs.extend_from_slice(softmax(&logits)?.data());
        preds.labels.extend(labels.iter().map(|&l| l as u8));
    }
    Ok((preds, loss_sum / idx.len().max(1) as f64))
}

fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let hits = probs
        .chunks_exact(NUM_CLASSES)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l as usize)
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Trains `net` on `train_idx`, evaluating `val_idx` after every epoch.
///
/// Returns the learning curve and the validation predictions after the final
/// epoch.
pub fn train(
    net: &mut TactileNet<f64>,
    data: &SampleSet,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(LearningCurve, Predictions), EvalError> {
    cfg.validate()?;
    if train_idx.len() < 2 || val_idx.is_empty() {
        return Err(EvalError::InsufficientData(format!(
            "{} training and {} validation samples",
            train_idx.len(),
            val_idx.len()
        )));
    }
    if net.has_imu() != cfg.use_imu {
        return Err(EvalError::Config("network IMU branch does not match use_imu".into()));
    }
    let mut adam = Adam::new(AdamConfig::default());
    let mut curve = LearningCurve::default();
    let mut order = train_idx.to_vec();
    let mut last = Predictions::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut seed::rng(seed, &[0xe0, epoch as u64]));
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for (b, batch) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let (x, imu) = inputs(net, data, batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i] as usize).collect();
            let mut ctx = Ctx::train(seed::derive(seed, &[0xd0, epoch as u64, b as u64]));
            let logits = net.forward(&x, imu.as_ref(), &mut ctx)?;
            let (loss, grad) = cross_entropy(&logits, &labels)?;
            loss_sum += loss * batch.len() as f64;
            hits += logits
                .data()
                .chunks_exact(NUM_CLASSES)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            net.zero_grad();
            net.backward(&grad)?;
            adam.step(lr, |f| net.visit_params(f));
        }
        let (preds, val_loss) = evaluate(net, data, val_idx)?;
        let n = order.len() as f64;
        curve.epochs.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / n,
            train_accuracy: hits as f64 / n,
            val_loss,
            val_accuracy: accuracy(&preds.probs, &preds.labels),
        });
        log::info!(
            "epoch {}/{}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            epoch + 1,
            cfg.epochs,
            loss_sum / n,
            hits as f64 / n,
            val_loss,
            curve.epochs.last().map_or(0.0, |e| e.val_accuracy)
        );
        last = preds;
    }
    Ok((curve, last))
}
