//! Softmax cross-entropy.

use super::{Float, NnError, Tensor};

/// Mean negative log-likelihood of `labels` under `softmax(logits)` and its
/// gradient with respect to the logits.
pub fn cross_entropy<T: Float>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), NnError> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(NnError::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Err(NnError::Shape("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::Label { label: bad, classes: k });
    }
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut loss = T::ZERO;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let mx = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
        let e: Vec<T> = row.iter().map(|v| (*v - mx).exp()).collect();
        let s: T = e.iter().copied().sum();
        loss += s.ln() - (row[label] - mx);
        for (j, v) in e.into_iter().enumerate() {
            let p = v / s;
            grad.push(if j == label { (p - T::ONE) * inv_n } else { p * inv_n });
        }
    }
    Ok((loss * inv_n, Tensor::new(&[n, k], grad)?))
}
