//! Dense Gaussian elimination with partial pivoting.

use super::SimError;

/// Solves `a x = b` in place for a row-major `n x n` matrix. Returns `x`.
pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>, SimError> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if n > 0 && scale == 0.0 {
        return Err(SimError::Singular);
    }
    let tiny = scale * 1e-14;
    for k in 0..n {
        let (p, pv) = (k..n)
            .map(|r| (r, a[r * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pv <= tiny || !pv.is_finite() {
            return Err(SimError::Singular);
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            a[r * n + k] = 0.0;
            for c in k + 1..n {
                a[r * n + c] -= f * a[k * n + c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    Ok(x)
}

/// Inverse of a row-major `n x n` matrix by elimination against the identity.
pub(crate) fn invert(a: &[f64], n: usize) -> Result<Vec<f64>, SimError> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve_dense(&mut m, &mut e, n)?;
        for r in 0..n {
            inv[r * n + col] = x[r];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        // Leading zero forces a row swap.
        let mut a = vec![0.0, 2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let mut b = vec![5.0, 5.0, 4.0];
        let x = solve_dense(&mut a, &mut b, 3).unwrap();
        for (v, e) in x.iter().zip([1.0, 2.0, 1.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_detected() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(matches!(solve_dense(&mut a, &mut b, 2), Err(SimError::Singular)));
    }
}
