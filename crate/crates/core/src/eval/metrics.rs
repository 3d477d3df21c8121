//! Top-k accuracy and confusion matrices over probability rows.

use std::fmt::Write as _;

use serde::Serialize;

use super::EvalError;
use crate::frames::pgm::encode_pgm8;
use crate::frames::NUM_CLASSES;

/// Index of the largest value; ties go to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Position of `label` when classes are ranked by descending score, ties
/// ranked by ascending class index.
fn rank_of(row: &[f64], label: usize) -> usize {
    let p = row[label];
    row.iter()
        .enumerate()
        .filter(|&(j, v)| *v > p || (*v == p && j < label))
        .count()
}

/// Fraction of rows (of `NUM_CLASSES` scores each) whose label is among the
/// `k` highest-ranked classes.
pub fn top_k_accuracy(probs: &[f64], labels: &[u8], k: usize) -> Result<f64, EvalError> {
    if !(1..=NUM_CLASSES).contains(&k) {
        return Err(EvalError::Config(format!("k = {k} outside 1..={NUM_CLASSES}")));
    }
    check_rows(probs, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = probs
        .chunks_exact(NUM_CLASSES)
        .zip(labels)
        .filter(|(row, &l)| rank_of(row, l as usize) < k)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn check_rows(probs: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if probs.len() != labels.len() * NUM_CLASSES {
        return Err(EvalError::Config(format!(
            "{} scores for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(EvalError::Config(format!("label {l} outside 0..{NUM_CLASSES}")));
    }
    Ok(())
}

/// Counts with rows indexed by the true class and columns by the prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl ConfusionMatrix {
    pub fn from_predictions(probs: &[f64], labels: &[u8]) -> Result<Self, EvalError> {
        check_rows(probs, labels)?;
        let mut m = Self::default();
        for (row, &l) in probs.chunks_exact(NUM_CLASSES).zip(labels) {
            m.counts[l as usize][argmax(row)] += 1;
        }
        Ok(m)
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut s = String::from("true\\predicted");
        for n in class_names {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
        for (name, row) in class_names.iter().zip(&self.counts) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Row-normalized heatmap, `cell` pixels per entry; white is 100%.
    pub fn to_pgm(&self, cell: usize) -> Vec<u8> {
        let side = NUM_CLASSES * cell;
        let mut px = vec![0u8; side * side];
        for (i, row) in self.counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            for (j, &v) in row.iter().enumerate() {
                let shade = if total == 0 { 0 } else { (255.0 * v as f64 / total as f64).round() as u8 };
                for y in i * cell..(i + 1) * cell {
                    px[y * side + j * cell..y * side + (j + 1) * cell].fill(shade);
                }
            }
        }
        encode_pgm8(side, side, &px)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[u8]) -> Vec<f64> {
        let mut p = vec![0.0; labels.len() * NUM_CLASSES];
        for (i, &l) in labels.iter().enumerate() {
            p[i * NUM_CLASSES + l as usize] = 1.0;
        }
        p
    }

    #[test]
    fn perfect_predictions() {
        let labels: Vec<u8> = (0..17).collect();
        let p = one_hot(&labels);
        assert_eq!(top_k_accuracy(&p, &labels, 1).unwrap(), 1.0);
        let m = ConfusionMatrix::from_predictions(&p, &labels).unwrap();
        for i in 0..17 {
            for j in 0..17 {
                assert_eq!(m.counts[i][j], (i == j) as u64);
            }
        }
    }

    #[test]
    fn k17_always_hits_and_ties_prefer_low_index() {
        let labels = [3u8, 0];
        let p = vec![0.0; 2 * NUM_CLASSES];
        assert_eq!(top_k_accuracy(&p, &labels, 17).unwrap(), 1.0);
        // All tied: class 0 ranks first, class 3 fourth.
        assert_eq!(top_k_accuracy(&p, &labels, 1).unwrap(), 0.5);
        assert_eq!(top_k_accuracy(&p, &labels, 4).unwrap(), 1.0);
        assert!(top_k_accuracy(&p, &labels, 0).is_err());
        assert!(top_k_accuracy(&p, &labels, 18).is_err());
    }

    #[test]
    fn all_zero_predictions_fill_one_column() {
        let labels: Vec<u8> = (0..17).chain(0..5).collect();
        let p = one_hot(&vec![0; labels.len()]);
        let m = ConfusionMatrix::from_predictions(&p, &labels).unwrap();
        for row in &m.counts {
            assert!(row[1..].iter().all(|&v| v == 0));
        }
        assert_eq!(m.total(), 22);
    }

    #[test]
    fn csv_and_pgm_shapes() {
        let names: Vec<String> = (0..17).map(|i| format!("c{i}")).collect();
        let m = ConfusionMatrix::default();
        assert_eq!(m.to_csv(&names).lines().count(), 18);
        let pgm = m.to_pgm(4);
        assert!(pgm.starts_with(b"P5\n68 68\n255\n"));
    }
}
