//! Dense row-major tensors of up to four dimensions (N, C, H, W).

use super::{Float, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(NnError::Shape(format!("rank {} outside 1..=4", shape.len())));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![T::ZERO; len]).expect("valid rank")
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len: usize = shape.iter().product();
        Self::new(shape, (0..len).map(&mut f).collect()).expect("valid rank")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), NnError> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(NnError::Shape(format!("expected NCHW, got {:?}", self.shape))),
        }
    }

    /// `(n, features)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), NnError> {
        match self.shape[..] {
            [n, f] => Ok((n, f)),
            _ => Err(NnError::Shape(format!("expected (N, F), got {:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.is_empty() || shape.len() > 4 {
            return Err(NnError::Shape(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `rows` of the batch as a new tensor.
    pub fn select(&self, rows: &[usize]) -> Self {
        let item = self.item_len();
        let mut data = Vec::with_capacity(rows.len() * item);
        for &r in rows {
            data.extend_from_slice(&self.data[r * item..(r + 1) * item]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Self { shape, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
        let t = Tensor::<f64>::zeros(&[2, 3, 4, 5]);
        assert_eq!(t.dims4().unwrap(), (2, 3, 4, 5));
        assert_eq!(t.item_len(), 60);
        let t = t.reshape(&[2, 60]).unwrap();
        assert_eq!(t.dims2().unwrap(), (2, 60));
    }

    #[test]
    fn select_rows() {
        let t = Tensor::<f64>::from_fn(&[3, 2], |i| i as f64);
        assert_eq!(t.select(&[2, 0]).data(), &[4.0, 5.0, 0.0, 1.0]);
    }
}
