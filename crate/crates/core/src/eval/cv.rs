//! Random-split k-fold and leave-one-session-out cross-validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{top_k_accuracy, ConfusionMatrix};
use super::train::{train, LearningCurve};
use super::{EvalConfig, EvalError, SampleSet};
use crate::model::build_tactile_net;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    /// Fold number (1-based) or held-out session id.
    pub held_out: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub top1: f64,
    pub top3: f64,
    pub curve: LearningCurve,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub protocol: String,
    pub folds: Vec<FoldResult>,
    pub top1_mean: f64,
    pub top1_std: f64,
    pub top3_mean: f64,
    pub top3_std: f64,
    /// Sum of the per-fold confusion matrices.
    pub confusion: ConfusionMatrix,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl EvalReport {
    fn assemble(protocol: &str, folds: Vec<FoldResult>) -> Self {
        let top1: Vec<f64> = folds.iter().map(|f| f.top1).collect();
        let top3: Vec<f64> = folds.iter().map(|f| f.top3).collect();
        let (top1_mean, top1_std) = mean_std(&top1);
        let (top3_mean, top3_std) = mean_std(&top3);
        let mut confusion = ConfusionMatrix::default();
        for f in &folds {
            confusion.add(&f.confusion);
        }
        Self {
            protocol: protocol.into(),
            folds,
            top1_mean,
            top1_std,
            top3_mean,
            top3_std,
            confusion,
        }
    }
}

fn run_fold(
    data: &SampleSet,
    train_idx: &[usize],
    val_idx: &[usize],
    held_out: usize,
    cfg: &EvalConfig,
) -> Result<FoldResult, EvalError> {
    let stream = seed::derive(cfg.seed, &[0xf0, held_out as u64]);
    let mut net = build_tactile_net(cfg.use_imu, seed::derive(stream, &[0]));
    let (curve, preds) = train(&mut net, data, train_idx, val_idx, cfg, seed::derive(stream, &[1]))?;
    Ok(FoldResult {
        held_out,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        top1: top_k_accuracy(&preds.probs, &preds.labels, 1)?,
        top3: top_k_accuracy(&preds.probs, &preds.labels, 3)?,
        curve,
        confusion: ConfusionMatrix::from_predictions(&preds.probs, &preds.labels)?,
    })
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn random_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, &[0xf01d]));
    (0..k).map(|f| order[f * n / k..(f + 1) * n / k].to_vec()).collect()
}

/// Frame-level shuffle into `n_folds` folds, each held out once.
pub fn cv_random(data: &SampleSet, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let k = cfg.n_folds;
    for (class, &c) in data.class_counts().iter().enumerate() {
        if c > 0 && c < k {
            return Err(EvalError::InsufficientData(format!("class {class} has {c} samples for {k} folds")));
        }
    }
    if data.len() < 2 * k {
        return Err(EvalError::InsufficientData(format!("{} samples for {k} folds", data.len())));
    }
    let folds = random_folds(data.len(), k, cfg.seed);
    let results = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            run_fold(data, &train_idx, &folds[f], f + 1, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::assemble("cv_random", results))
}

/// Each session held out once, training on the remaining sessions.
pub fn cv_loso(data: &SampleSet, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let sessions = data.session_ids();
    if sessions.len() < 2 {
        return Err(EvalError::InsufficientData(format!(
            "{} session(s); leave-one-session-out needs at least 2",
            sessions.len()
        )));
    }
    let results = sessions
        .par_iter()
        .map(|&s| {
            let (val_idx, train_idx): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| data.sessions()[i] == s);
            run_fold(data, &train_idx, &val_idx, s as usize, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::assemble("cv_loso", results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_evenly() {
        for (n, k) in [(10, 7), (34_000, 7), (100, 3)] {
            let folds = random_folds(n, k, 9);
            let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sample_std_of_constant_is_zero() {
        assert_eq!(mean_std(&[0.5, 0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
