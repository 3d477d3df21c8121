//! `STAGNN1` model files.
//!
//! Layout (little endian): 8-byte magic, `u32` count of top-level records,
//! then records of `u8` kind tag, `u8` dimension count, `u32` dimensions and
//! the layer's tensors as raw `f32`. A residual record is followed by the
//! records of its sub-layers. Branch records (`dims = [branch, layers]`)
//! introduce the tactile path, the IMU branch and the classifier.

use std::fs;
use std::path::Path;

use super::{ModelError, TactileNet};
use crate::nn::{BatchNorm, Conv2d, Dense, Dropout, Float, Layer, Pool, PoolKind, Relu, ResidualBlock, Sequential};

pub const MODEL_MAGIC: &[u8; 8] = b"STAGNN1\0";

const TAG_INPUT_NORM: u8 = 1;
const TAG_BRANCH: u8 = 2;
const TAG_CONV: u8 = 10;
const TAG_BN: u8 = 11;
const TAG_RELU: u8 = 12;
const TAG_MAXPOOL: u8 = 13;
const TAG_AVGPOOL: u8 = 14;
const TAG_DROPOUT: u8 = 15;
const TAG_FLATTEN: u8 = 16;
const TAG_DENSE: u8 = 17;
const TAG_RESIDUAL: u8 = 18;

const BRANCH_TACTILE: u32 = 0;
const BRANCH_IMU: u32 = 1;
const BRANCH_CLASSIFIER: u32 = 2;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn record(&mut self, tag: u8, dims: &[u32]) {
        self.buf.push(tag);
        self.buf.push(dims.len() as u8);
        for d in dims {
            self.buf.extend_from_slice(&d.to_le_bytes());
        }
    }

    fn floats<T: Float>(&mut self, values: &[T]) {
        for v in values {
            self.buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }

    fn conv<T: Float>(&mut self, c: &Conv2d<T>) {
        self.record(TAG_CONV, &[c.c_in as u32, c.c_out as u32, c.k as u32, c.stride as u32, c.pad as u32]);
        self.floats(&c.weight.value);
        self.floats(&c.bias.value);
    }

    fn bn<T: Float>(&mut self, b: &BatchNorm<T>) {
        self.record(TAG_BN, &[b.channels as u32]);
        self.floats(&b.gamma.value);
        self.floats(&b.beta.value);
        self.floats(&b.running_mean);
        self.floats(&b.running_var);
    }

    fn dense<T: Float>(&mut self, d: &Dense<T>) {
        self.record(TAG_DENSE, &[d.in_features as u32, d.out_features as u32]);
        self.floats(&d.weight.value);
        self.floats(&d.bias.value);
    }

    fn layer<T: Float>(&mut self, l: &Layer<T>) {
        match l {
            Layer::Conv2d(c) => self.conv(c),
            Layer::BatchNorm(b) => self.bn(b),
            Layer::Relu(_) => self.record(TAG_RELU, &[]),
            Layer::Pool(p) => {
                let tag = if p.kind == PoolKind::Max { TAG_MAXPOOL } else { TAG_AVGPOOL };
                self.record(tag, &[p.k as u32, p.stride as u32]);
            }
            Layer::Dropout(d) => {
                self.record(TAG_DROPOUT, &[]);
                self.floats(&[d.p]);
            }
            Layer::Flatten { .. } => self.record(TAG_FLATTEN, &[]),
            Layer::Dense(d) => self.dense(d),
            Layer::Residual(r) => {
                self.record(TAG_RESIDUAL, &[r.projection.is_some() as u32]);
                self.conv(&r.conv1);
                self.bn(&r.bn1);
                self.conv(&r.conv2);
                self.bn(&r.bn2);
                if let Some((c, b)) = &r.projection {
                    self.conv(c);
                    self.bn(b);
                }
            }
        }
    }
}

/// Serializes a network with 32-bit parameters.
pub fn model_to_bytes<T: Float>(net: &TactileNet<T>) -> Vec<u8> {
    let mut w = Writer { buf: MODEL_MAGIC.to_vec() };
    let top = 1 + 1 + net.tactile.layers.len() + net.imu.as_ref().map_or(0, |b| 1 + b.layers.len()) + 2;
    w.buf.extend_from_slice(&(top as u32).to_le_bytes());
    w.record(TAG_INPUT_NORM, &[1]);
    w.floats(&[net.baseline]);
    w.record(TAG_BRANCH, &[BRANCH_TACTILE, net.tactile.layers.len() as u32]);
    for l in &net.tactile.layers {
        w.layer(l);
    }
    if let Some(b) = &net.imu {
        w.record(TAG_BRANCH, &[BRANCH_IMU, b.layers.len() as u32]);
        for l in &b.layers {
            w.layer(l);
        }
    }
    w.record(TAG_BRANCH, &[BRANCH_CLASSIFIER, 1]);
    w.dense(&net.classifier);
    w.buf
}

pub fn save_model<T: Float>(net: &TactileNet<T>, path: &Path) -> Result<(), ModelError> {
    fs::write(path, model_to_bytes(net))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or(ModelError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn header(&mut self) -> Result<(u8, Vec<usize>), ModelError> {
        let h = self.take(2)?;
        let (tag, nd) = (h[0], h[1]);
        let dims = (0..nd).map(|_| self.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
        Ok((tag, dims))
    }

    fn expect(&mut self, tag: u8, n_dims: usize) -> Result<Vec<usize>, ModelError> {
        let at = self.pos;
        let (t, dims) = self.header()?;
        if t != tag || dims.len() != n_dims {
            return Err(ModelError::Format(format!(
                "record at byte {at}: expected tag {tag} with {n_dims} dims, found tag {t} with {}",
                dims.len()
            )));
        }
        Ok(dims)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>, ModelError> {
        let len = n.checked_mul(4).ok_or(ModelError::Truncated(self.pos))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn conv_body(&mut self, d: &[usize]) -> Result<Conv2d<f32>, ModelError> {
        let &[c_in, c_out, k, s, pad] = d else {
            return Err(ModelError::Format("conv record needs 5 dims".into()));
        };
        let n = c_in
            .checked_mul(c_out)
            .and_then(|v| v.checked_mul(k * k))
            .ok_or_else(|| ModelError::Format("conv dimensions overflow".into()))?;
        let w = self.floats(n)?;
        let b = self.floats(c_out)?;
        Ok(Conv2d::from_parts(c_in, c_out, k, s, pad, w, b)?)
    }

    fn conv(&mut self) -> Result<Conv2d<f32>, ModelError> {
        let d = self.expect(TAG_CONV, 5)?;
        self.conv_body(&d)
    }

    fn bn_body(&mut self, c: usize) -> Result<BatchNorm<f32>, ModelError> {
        let g = self.floats(c)?;
        let b = self.floats(c)?;
        let m = self.floats(c)?;
        let v = self.floats(c)?;
        Ok(BatchNorm::from_parts(g, b, m, v)?)
    }

    fn bn(&mut self) -> Result<BatchNorm<f32>, ModelError> {
        let d = self.expect(TAG_BN, 1)?;
        self.bn_body(d[0])
    }

    fn dense_body(&mut self, d: &[usize]) -> Result<Dense<f32>, ModelError> {
        let &[i, o] = d else {
            return Err(ModelError::Format("dense record needs 2 dims".into()));
        };
        let n = i.checked_mul(o).ok_or_else(|| ModelError::Format("dense dimensions overflow".into()))?;
        let w = self.floats(n)?;
        let b = self.floats(o)?;
        Ok(Dense::from_parts(i, o, w, b)?)
    }

    fn layer(&mut self) -> Result<Layer<f32>, ModelError> {
        let at = self.pos;
        let (tag, d) = self.header()?;
        let bad = |what: &str| ModelError::Format(format!("record at byte {at}: {what}"));
        Ok(match (tag, d.len()) {
            (TAG_CONV, 5) => Layer::Conv2d(self.conv_body(&d)?),
            (TAG_BN, 1) => Layer::BatchNorm(self.bn_body(d[0])?),
            (TAG_RELU, 0) => Layer::Relu(Relu::default()),
            (TAG_MAXPOOL, 2) => Layer::Pool(Pool::new(PoolKind::Max, d[0], d[1])?),
            (TAG_AVGPOOL, 2) => Layer::Pool(Pool::new(PoolKind::Avg, d[0], d[1])?),
            (TAG_DROPOUT, 0) => Layer::Dropout(Dropout::new(self.floats(1)?[0] as f64)?),
            (TAG_FLATTEN, 0) => Layer::flatten(),
            (TAG_DENSE, 2) => Layer::Dense(self.dense_body(&d)?),
            (TAG_RESIDUAL, 1) => {
                let conv1 = self.conv()?;
                let bn1 = self.bn()?;
                let conv2 = self.conv()?;
                let bn2 = self.bn()?;
                let projection = match d[0] {
                    0 => None,
                    1 => Some((self.conv()?, self.bn()?)),
                    _ => return Err(bad("projection flag must be 0 or 1")),
                };
                Layer::Residual(Box::new(ResidualBlock::from_parts(conv1, bn1, conv2, bn2, projection)?))
            }
            _ => return Err(bad(&format!("unknown layer tag {tag} with {} dims", d.len()))),
        })
    }

    fn branch(&mut self, id: u32) -> Result<Sequential<f32>, ModelError> {
        let d = self.expect(TAG_BRANCH, 2)?;
        if d[0] != id as usize {
            return Err(ModelError::Format(format!("expected branch {id}, found {}", d[0])));
        }
        let layers = (0..d[1]).map(|_| self.layer()).collect::<Result<_, _>>()?;
        Ok(Sequential::new(layers))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TactileNet<f32>, ModelError> {
    let found = &bytes[..bytes.len().min(8)];
    if found != &MODEL_MAGIC[..found.len()] || bytes.len() < 8 {
        if found == &MODEL_MAGIC[..found.len()] {
            return Err(ModelError::Truncated(bytes.len()));
        }
        return Err(ModelError::BadMagic {
            expected: MODEL_MAGIC.to_vec(),
            found: found.to_vec(),
        });
    }
    let mut r = Reader { bytes, pos: 8 };
    let top = r.u32()? as usize;
    r.expect(TAG_INPUT_NORM, 1)?;
    let baseline = r.floats(1)?[0] as f64;
    let tactile = r.branch(BRANCH_TACTILE)?;
    let next_branch = {
        let save = r.pos;
        let d = r.expect(TAG_BRANCH, 2)?;
        r.pos = save;
        d[0] as u32
    };
    let imu = if next_branch == BRANCH_IMU {
        Some(r.branch(BRANCH_IMU)?)
    } else {
        None
    };
    let d = r.expect(TAG_BRANCH, 2)?;
    if d != [BRANCH_CLASSIFIER as usize, 1] {
        return Err(ModelError::Format(format!("expected classifier branch, found {d:?}")));
    }
    let d = r.expect(TAG_DENSE, 2)?;
    let classifier = r.dense_body(&d)?;
    let expected_top = 1 + 1 + tactile.layers.len() + imu.as_ref().map_or(0, |b| 1 + b.layers.len()) + 2;
    if top != expected_top {
        return Err(ModelError::Format(format!("header counts {top} records, file holds {expected_top}")));
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TactileNet {
        baseline,
        tactile,
        imu,
        classifier,
    })
}

pub fn load_model(path: &Path) -> Result<TactileNet<f32>, ModelError> {
    model_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_tactile_net;

    #[test]
    fn round_trip_with_and_without_imu() {
        for imu in [false, true] {
            let net = build_tactile_net(imu, 5);
            let bytes = model_to_bytes(&net);
            let back = model_from_bytes(&bytes).unwrap();
            assert_eq!(back, net.cast::<f32>());
            assert_eq!(model_to_bytes(&back), bytes);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = model_to_bytes(&build_tactile_net(false, 1));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(model_from_bytes(&bad), Err(ModelError::BadMagic { .. })));
        for cut in [0, 4, 8, 11, 40, bytes.len() - 1] {
            assert!(model_from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut long = bytes;
        long.push(0);
        assert!(matches!(model_from_bytes(&long), Err(ModelError::Format(_))));
    }
}
