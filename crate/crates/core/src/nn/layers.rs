//! Layers with hand-written forward and backward passes.
//!
//! A layer caches what its backward pass needs only when the context is in
//! training mode; calling `backward` without a preceding training-mode
//! `forward` is an error. Parameter gradients accumulate until `zero_grad`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::Serialize;

use super::{gemm, Float, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-pass state: mode, multiply-accumulate counter and dropout stream.
#[derive(Debug, Clone)]
pub struct Ctx {
    mode: Mode,
    macc: u64,
    rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            macc: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            macc: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Multiplies executed by matrix products since creation or reset.
    pub fn macc(&self) -> u64 {
        self.macc
    }

    pub fn reset_macc(&mut self) {
        self.macc = 0;
    }

    fn caching(&self) -> bool {
        self.mode == Mode::Train
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Batchnorm,
    Relu,
    Maxpool,
    Avgpool,
    Dropout,
    Flatten,
    Dense,
    ResidualAdd,
    Softmax,
}

/// Static description of a layer's hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub k: usize,
    pub s: usize,
    pub padding: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub p: f64,
}

impl LayerSpec {
    fn of(kind: LayerKind) -> Self {
        Self {
            kind,
            k: 1,
            s: 1,
            padding: 0,
            c_in: 0,
            c_out: 0,
            p: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.k == 0 || self.s == 0 {
            return Err(NnError::Config(format!("kernel {} / stride {} must be >= 1", self.k, self.s)));
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(NnError::Config(format!("dropout rate {} outside [0, 1)", self.p)));
        }
        Ok(())
    }
}

/// Static cost of one layer for a given input shape (batch excluded).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: LayerKind,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub macc: u64,
    pub params: u64,
    /// Elements kept alive alongside input and output (residual skip).
    pub held_elems: u64,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    grad: Vec<T>,
}

impl<T: Float> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        Self {
            value,
            grad: Vec::new(),
        }
    }

    /// Accumulated gradient; all zeros before the first backward pass.
    pub fn grad(&self) -> Vec<T> {
        if self.grad.is_empty() {
            vec![T::ZERO; self.value.len()]
        } else {
            self.grad.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::ZERO);
    }

    /// Value and gradient, allocating the gradient on first use.
    pub fn parts(&mut self) -> (&mut [T], &mut [T]) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![T::ZERO; self.value.len()];
        }
        (&mut self.value, &mut self.grad)
    }

    fn cast<U: Float>(&self) -> Param<U> {
        Param::new(self.value.iter().map(|v| U::from_f64(v.to_f64())).collect())
    }
}

fn kaiming_uniform<T: Float>(len: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect()
}

fn missing(layer: &'static str) -> NnError {
    NnError::MissingCache(layer)
}

fn check_same_shape(what: &str, expected: &[usize], got: &[usize]) -> Result<(), NnError> {
    if expected != got {
        return Err(NnError::Shape(format!("{what}: expected {expected:?}, got {got:?}")));
    }
    Ok(())
}

fn debug_check_finite<T: Float>(t: &Tensor<T>, what: &str) {
    debug_assert!(t.all_finite(), "non-finite values after {what}");
}

// ---------------------------------------------------------------- conv2d

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `c_out x (c_in * k * k)`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Float> Conv2d<T> {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, NnError> {
        let fan_in = c_in * k * k;
        let weight = kaiming_uniform(c_out * fan_in, fan_in.max(1), rng);
        Self::from_parts(c_in, c_out, k, stride, pad, weight, vec![T::ZERO; c_out])
    }

    pub fn from_parts(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, NnError> {
        let spec = LayerSpec {
            kind: LayerKind::Conv2d,
            k,
            s: stride,
            padding: pad,
            c_in,
            c_out,
            p: 0.0,
        };
        spec.validate()?;
        if c_in == 0 || c_out == 0 {
            return Err(NnError::Config("conv2d needs at least one channel".into()));
        }
        if weight.len() != c_out * c_in * k * k || bias.len() != c_out {
            return Err(NnError::Shape(format!(
                "conv2d {c_in}->{c_out} k{k}: {} weights, {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            c_in,
            c_out,
            k,
            stride,
            pad,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.k || wp < self.k {
            return Err(NnError::Shape(format!(
                "{h}x{w} input (pad {}) smaller than kernel {}",
                self.pad, self.k
            )));
        }
        Ok(((hp - self.k) / self.stride + 1, (wp - self.k) / self.stride + 1))
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, ho: usize, wo: usize, cols: &mut [T]) {
        let (k, s, pad) = (self.k, self.stride, self.pad as isize);
        let hw = ho * wo;
        for ci in 0..self.c_in {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let dst = &mut cols[row * hw..(row + 1) * hw];
                    for oy in 0..ho {
                        let iy = (oy * s + ki) as isize - pad;
                        let line = &mut dst[oy * wo..(oy + 1) * wo];
                        if iy < 0 || iy >= h as isize {
                            line.fill(T::ZERO);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - pad;
                            *d = if ix >= 0 && ix < w as isize {
                                src[ix as usize]
                            } else {
                                T::ZERO
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, ho: usize, wo: usize, gx: &mut [T]) {
        let (k, s, pad) = (self.k, self.stride, self.pad as isize);
        let hw = ho * wo;
        for ci in 0..self.c_in {
            let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let src = &cols[row * hw..(row + 1) * hw];
                    for oy in 0..ho {
                        let iy = (oy * s + ki) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * s + kj) as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.c_in {
            return Err(NnError::Shape(format!("conv2d expects {} channels, got {c}", self.c_in)));
        }
        let (ho, wo) = self.output_hw(h, w)?;
        let hw = ho * wo;
        let ckk = self.c_in * self.k * self.k;
        let mut out = vec![T::ZERO; n * self.c_out * hw];
        let mut cols = vec![T::ZERO; ckk * hw];
        for i in 0..n {
            self.im2col(&x.data()[i * c * h * w..(i + 1) * c * h * w], h, w, ho, wo, &mut cols);
            let o = &mut out[i * self.c_out * hw..(i + 1) * self.c_out * hw];
            for (co, b) in self.bias.value.iter().enumerate() {
                o[co * hw..(co + 1) * hw].fill(*b);
            }
            ctx.macc += gemm(self.c_out, ckk, hw, &self.weight.value, false, &cols, false, T::ONE, o);
        }
        if ctx.caching() {
            self.cache = Some(x.clone());
        }
        let out = Tensor::new(&[n, self.c_out, ho, wo], out)?;
        debug_check_finite(&out, "conv2d");
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.cache.take().ok_or_else(|| missing("conv2d"))?;
        let (n, c, h, w) = x.dims4()?;
        let (ho, wo) = self.output_hw(h, w)?;
        check_same_shape("conv2d gradient", &[n, self.c_out, ho, wo], g.shape())?;
        let hw = ho * wo;
        let ckk = self.c_in * self.k * self.k;
        let mut gx = vec![T::ZERO; n * c * h * w];
        let mut cols = vec![T::ZERO; ckk * hw];
        let mut dcols = vec![T::ZERO; ckk * hw];
        for i in 0..n {
            self.im2col(&x.data()[i * c * h * w..(i + 1) * c * h * w], h, w, ho, wo, &mut cols);
            let gi = &g.data()[i * self.c_out * hw..(i + 1) * self.c_out * hw];
            {
                let (_, gw) = self.weight.parts();
                gemm(self.c_out, hw, ckk, gi, false, &cols, true, T::ONE, gw);
            }
            {
                let (_, gb) = self.bias.parts();
                for (co, b) in gb.iter_mut().enumerate() {
                    *b += gi[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
                }
            }
            gemm(ckk, self.c_out, hw, &self.weight.value, true, gi, false, T::ZERO, &mut dcols);
            self.col2im(&dcols, h, w, ho, wo, &mut gx[i * c * h * w..(i + 1) * c * h * w]);
        }
        Tensor::new(&[n, c, h, w], gx)
    }

    fn cast<U: Float>(&self) -> Conv2d<U> {
        Conv2d {
            c_in: self.c_in,
            c_out: self.c_out,
            k: self.k,
            stride: self.stride,
            pad: self.pad,
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            cache: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv2d,
            k: self.k,
            s: self.stride,
            padding: self.pad,
            c_in: self.c_in,
            c_out: self.c_out,
            p: 0.0,
        }
    }

    fn cost(&self, name: String, input: &[usize]) -> Result<LayerCost, NnError> {
        let [c, h, w] = item3(input)?;
        if c != self.c_in {
            return Err(NnError::Shape(format!("conv2d expects {} channels, got {c}", self.c_in)));
        }
        let (ho, wo) = self.output_hw(h, w)?;
        Ok(LayerCost {
            name,
            kind: LayerKind::Conv2d,
            input_shape: input.to_vec(),
            output_shape: vec![self.c_out, ho, wo],
            macc: (self.k * self.k * self.c_in * self.c_out * ho * wo) as u64,
            params: (self.weight.len() + self.bias.len()) as u64,
            held_elems: 0,
        })
    }
}

fn item3(shape: &[usize]) -> Result<[usize; 3], NnError> {
    match shape {
        [c, h, w] => Ok([*c, *h, *w]),
        _ => Err(NnError::Shape(format!("expected (C, H, W), got {shape:?}"))),
    }
}

// ----------------------------------------------------------------- dense

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `out x in`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Float> Dense<T> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Result<Self, NnError> {
        let weight = kaiming_uniform(in_features * out_features, in_features.max(1), rng);
        Self::from_parts(in_features, out_features, weight, vec![T::ZERO; out_features])
    }

    pub fn from_parts(
        in_features: usize,
        out_features: usize,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, NnError> {
        if in_features == 0 || out_features == 0 {
            return Err(NnError::Config("dense layer needs non-zero widths".into()));
        }
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(NnError::Shape(format!(
                "dense {in_features}->{out_features}: {} weights, {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let (n, f) = x.dims2()?;
        if f != self.in_features {
            return Err(NnError::Shape(format!("dense expects {} inputs, got {f}", self.in_features)));
        }
        let mut out = Vec::with_capacity(n * self.out_features);
        for _ in 0..n {
            out.extend_from_slice(&self.bias.value);
        }
        ctx.macc += gemm(n, f, self.out_features, x.data(), false, &self.weight.value, true, T::ONE, &mut out);
        if ctx.caching() {
            self.cache = Some(x.clone());
        }
        let out = Tensor::new(&[n, self.out_features], out)?;
        debug_check_finite(&out, "dense");
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.cache.take().ok_or_else(|| missing("dense"))?;
        let (n, f) = x.dims2()?;
        let o = self.out_features;
        check_same_shape("dense gradient", &[n, o], g.shape())?;
        {
            let (_, gw) = self.weight.parts();
            gemm(o, n, f, g.data(), true, x.data(), false, T::ONE, gw);
        }
        {
            let (_, gb) = self.bias.parts();
            for row in g.data().chunks_exact(o) {
                for (b, v) in gb.iter_mut().zip(row) {
                    *b += *v;
                }
            }
        }
        let mut gx = vec![T::ZERO; n * f];
        gemm(n, o, f, g.data(), false, &self.weight.value, false, T::ZERO, &mut gx);
        Tensor::new(&[n, f], gx)
    }

    fn cast<U: Float>(&self) -> Dense<U> {
        Dense {
            in_features: self.in_features,
            out_features: self.out_features,
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            cache: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            c_in: self.in_features,
            c_out: self.out_features,
            ..LayerSpec::of(LayerKind::Dense)
        }
    }

    pub fn cost(&self, name: String, input: &[usize]) -> Result<LayerCost, NnError> {
        if input != [self.in_features] {
            return Err(NnError::Shape(format!("dense expects [{}], got {input:?}", self.in_features)));
        }
        Ok(LayerCost {
            name,
            kind: LayerKind::Dense,
            input_shape: input.to_vec(),
            output_shape: vec![self.out_features],
            macc: (self.in_features * self.out_features) as u64,
            params: (self.weight.len() + self.bias.len()) as u64,
            held_elems: 0,
        })
    }
}

// ------------------------------------------------------------- batchnorm

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
struct BnCache<T> {
    shape: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

/// Per-channel normalization over (N, H, W) for NCHW or over N for (N, C).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Float> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![T::ONE; channels]),
            beta: Param::new(vec![T::ZERO; channels]),
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            cache: None,
        }
    }

    pub fn from_parts(gamma: Vec<T>, beta: Vec<T>, mean: Vec<T>, var: Vec<T>) -> Result<Self, NnError> {
        let c = gamma.len();
        if c == 0 || beta.len() != c || mean.len() != c || var.len() != c {
            return Err(NnError::Shape("batchnorm parameter lengths differ".into()));
        }
        Ok(Self {
            channels: c,
            gamma: Param::new(gamma),
            beta: Param::new(beta),
            running_mean: mean,
            running_var: var,
            cache: None,
        })
    }

    fn layout(&self, x: &Tensor<T>) -> Result<(usize, usize), NnError> {
        let shape = x.shape();
        if shape.len() < 2 || shape[1] != self.channels {
            return Err(NnError::Shape(format!(
                "batchnorm expects {} channels, got shape {shape:?}",
                self.channels
            )));
        }
        Ok((shape[0], shape[2..].iter().product()))
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let (n, hw) = self.layout(x)?;
        let c = self.channels;
        let m = n * hw;
        let xd = x.data();
        let mut mean = vec![T::ZERO; c];
        let mut var = vec![T::ZERO; c];
        let train = ctx.mode() == Mode::Train;
        if train {
            if n < 2 {
                return Err(NnError::BatchTooSmall(n));
            }
            let inv_m = T::from_f64(1.0 / m as f64);
            for ch in 0..c {
                let mut s = T::ZERO;
                for i in 0..n {
                    s += xd[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter().copied().sum::<T>();
                }
                let mu = s * inv_m;
                let mut ss = T::ZERO;
                for i in 0..n {
                    for &v in &xd[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                        ss += (v - mu) * (v - mu);
                    }
                }
                mean[ch] = mu;
                var[ch] = ss * inv_m;
            }
            let mom = T::from_f64(BN_MOMENTUM);
            let unbias = T::from_f64(m as f64 / (m as f64 - 1.0));
            for ch in 0..c {
                self.running_mean[ch] = (T::ONE - mom) * self.running_mean[ch] + mom * mean[ch];
                self.running_var[ch] = (T::ONE - mom) * self.running_var[ch] + mom * var[ch] * unbias;
            }
        } else {
            mean.copy_from_slice(&self.running_mean);
            var.copy_from_slice(&self.running_var);
        }
        let eps = T::from_f64(BN_EPS);
        let inv_std: Vec<T> = var.iter().map(|v| T::ONE / (*v + eps).sqrt()).collect();
        let mut xhat = vec![T::ZERO; xd.len()];
        let mut out = vec![T::ZERO; xd.len()];
        for i in 0..n {
            for ch in 0..c {
                let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                let (g, b, mu, is) = (self.gamma.value[ch], self.beta.value[ch], mean[ch], inv_std[ch]);
                for j in r {
                    let h = (xd[j] - mu) * is;
                    xhat[j] = h;
                    out[j] = g * h + b;
                }
            }
        }
        if ctx.caching() {
            self.cache = Some(BnCache {
                shape: x.shape().to_vec(),
                xhat,
                inv_std,
            });
        }
        let out = Tensor::new(x.shape(), out)?;
        debug_check_finite(&out, "batchnorm");
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or_else(|| missing("batchnorm"))?;
        check_same_shape("batchnorm gradient", &cache.shape, g.shape())?;
        let n = cache.shape[0];
        let hw: usize = cache.shape[2..].iter().product();
        let c = self.channels;
        let m = T::from_f64((n * hw) as f64);
        let gd = g.data();
        let mut sum_g = vec![T::ZERO; c];
        let mut sum_gx = vec![T::ZERO; c];
        for i in 0..n {
            for ch in 0..c {
                let span = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                for (&gj, &xj) in gd[span.clone()].iter().zip(&cache.xhat[span]) {
                    sum_g[ch] += gj;
                    sum_gx[ch] += gj * xj;
                }
            }
        }
        {
            let (_, gg) = self.gamma.parts();
            for ch in 0..c {
                gg[ch] += sum_gx[ch];
            }
        }
        {
            let (_, gb) = self.beta.parts();
            for ch in 0..c {
                gb[ch] += sum_g[ch];
            }
        }
        let mut gx = vec![T::ZERO; gd.len()];
        for i in 0..n {
            for ch in 0..c {
                let scale = self.gamma.value[ch] * cache.inv_std[ch] / m;
                for j in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                    gx[j] = scale * (m * gd[j] - sum_g[ch] - cache.xhat[j] * sum_gx[ch]);
                }
            }
        }
        Tensor::new(&cache.shape, gx)
    }

    fn cast<U: Float>(&self) -> BatchNorm<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect();
        BatchNorm {
            channels: self.channels,
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: conv(&self.running_mean),
            running_var: conv(&self.running_var),
            cache: None,
        }
    }

    fn cost(&self, name: String, input: &[usize]) -> Result<LayerCost, NnError> {
        if input.first() != Some(&self.channels) {
            return Err(NnError::Shape(format!(
                "batchnorm expects {} channels, got {input:?}",
                self.channels
            )));
        }
        Ok(LayerCost {
            name,
            kind: LayerKind::Batchnorm,
            input_shape: input.to_vec(),
            output_shape: input.to_vec(),
            macc: 0,
            params: 2 * self.channels as u64,
            held_elems: 0,
        })
    }
}

// ------------------------------------------------------------ activation

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relu {
    mask: Option<(Vec<usize>, Vec<bool>)>,
}

impl Relu {
    pub fn forward<T: Float>(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let data: Vec<T> = x
            .data()
            .iter()
            .map(|v| if *v > T::ZERO { *v } else { T::ZERO })
            .collect();
        if ctx.caching() {
            self.mask = Some((x.shape().to_vec(), x.data().iter().map(|v| *v > T::ZERO).collect()));
        }
        Tensor::new(x.shape(), data)
    }

    pub fn backward<T: Float>(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (shape, mask) = self.mask.take().ok_or_else(|| missing("relu"))?;
        check_same_shape("relu gradient", &shape, g.shape())?;
        let data = g
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| if *m { *v } else { T::ZERO })
            .collect();
        Tensor::new(&shape, data)
    }
}

/// Row-wise softmax of a (N, K) tensor.
pub fn softmax<T: Float>(logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (_, k) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let mx = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
        let e: Vec<T> = row.iter().map(|v| (*v - mx).exp()).collect();
        let s: T = e.iter().copied().sum();
        out.extend(e.into_iter().map(|v| v / s));
    }
    Tensor::new(logits.shape(), out)
}

// ----------------------------------------------------------------- pools

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub kind: PoolKind,
    pub k: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl Pool {
    pub fn new(kind: PoolKind, k: usize, stride: usize) -> Result<Self, NnError> {
        if k == 0 || stride == 0 {
            return Err(NnError::Config(format!("pool kernel {k} / stride {stride} must be >= 1")));
        }
        Ok(Self {
            kind,
            k,
            stride,
            cache: None,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        if h < self.k || w < self.k {
            return Err(NnError::Shape(format!("{h}x{w} input smaller than pool kernel {}", self.k)));
        }
        Ok(((h - self.k) / self.stride + 1, (w - self.k) / self.stride + 1))
    }

    pub fn forward<T: Float>(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let (n, c, h, w) = x.dims4()?;
        let (ho, wo) = self.output_hw(h, w)?;
        let xd = x.data();
        let mut out = vec![T::ZERO; n * c * ho * wo];
        let mut arg = if self.kind == PoolKind::Max && ctx.caching() {
            vec![0usize; out.len()]
        } else {
            Vec::new()
        };
        let inv = T::from_f64(1.0 / (self.k * self.k) as f64);
        for p in 0..n * c {
            let plane = &xd[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let o = (p * ho + oy) * wo + ox;
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    match self.kind {
                        PoolKind::Max => {
                            let mut best = y0 * w + x0;
                            for dy in 0..self.k {
                                for dx in 0..self.k {
                                    let i = (y0 + dy) * w + x0 + dx;
                                    if plane[i] > plane[best] {
                                        best = i;
                                    }
                                }
                            }
                            out[o] = plane[best];
                            if !arg.is_empty() {
                                arg[o] = p * h * w + best;
                            }
                        }
                        PoolKind::Avg => {
                            let mut s = T::ZERO;
                            for dy in 0..self.k {
                                for dx in 0..self.k {
                                    s += plane[(y0 + dy) * w + x0 + dx];
                                }
                            }
                            out[o] = s * inv;
                        }
                    }
                }
            }
        }
        if ctx.caching() {
            self.cache = Some((x.shape().to_vec(), arg));
        }
        Tensor::new(&[n, c, ho, wo], out)
    }

    pub fn backward<T: Float>(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (shape, arg) = self.cache.take().ok_or_else(|| missing("pool"))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (ho, wo) = self.output_hw(h, w)?;
        check_same_shape("pool gradient", &[n, c, ho, wo], g.shape())?;
        let mut gx = vec![T::ZERO; n * c * h * w];
        match self.kind {
            PoolKind::Max => {
                for (o, &i) in arg.iter().enumerate() {
                    gx[i] += g.data()[o];
                }
            }
            PoolKind::Avg => {
                let inv = T::from_f64(1.0 / (self.k * self.k) as f64);
                for p in 0..n * c {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let v = g.data()[(p * ho + oy) * wo + ox] * inv;
                            for dy in 0..self.k {
                                for dx in 0..self.k {
                                    gx[p * h * w + (oy * self.stride + dy) * w + ox * self.stride + dx] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(&shape, gx)
    }

    fn layer_kind(&self) -> LayerKind {
        match self.kind {
            PoolKind::Max => LayerKind::Maxpool,
            PoolKind::Avg => LayerKind::Avgpool,
        }
    }

    fn cost(&self, name: String, input: &[usize]) -> Result<LayerCost, NnError> {
        let [c, h, w] = item3(input)?;
        let (ho, wo) = self.output_hw(h, w)?;
        Ok(LayerCost {
            name,
            kind: self.layer_kind(),
            input_shape: input.to_vec(),
            output_shape: vec![c, ho, wo],
            macc: 0,
            params: 0,
            held_elems: 0,
        })
    }
}

// --------------------------------------------------------------- dropout

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout<T> {
    pub p: f64,
    cache: Option<(Vec<usize>, Vec<T>)>,
}

impl<T: Float> Dropout<T> {
    pub fn new(p: f64) -> Result<Self, NnError> {
        LayerSpec {
            p,
            ..LayerSpec::of(LayerKind::Dropout)
        }
        .validate()?;
        Ok(Self { p, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        if ctx.mode() == Mode::Eval {
            return Ok(x.clone());
        }
        let scale = T::from_f64(1.0 / (1.0 - self.p));
        let mask: Vec<T> = if self.p == 0.0 {
            vec![T::ONE; x.len()]
        } else {
            (0..x.len())
                .map(|_| {
                    if ctx.rng.random::<f64>() < self.p {
                        T::ZERO
                    } else {
                        scale
                    }
                })
                .collect()
        };
        let out = x.data().iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        self.cache = Some((x.shape().to_vec(), mask));
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (shape, mask) = self.cache.take().ok_or_else(|| missing("dropout"))?;
        check_same_shape("dropout gradient", &shape, g.shape())?;
        Tensor::new(&shape, g.data().iter().zip(&mask).map(|(v, m)| *v * *m).collect())
    }
}

// ------------------------------------------------------------ residual

/// Post-activation basic block: `relu(bn2(conv2(relu(bn1(conv1 x)))) + skip(x))`.
///
/// The skip path is the identity, or a 1x1 convolution plus normalization
/// when the width or stride changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm<T>,
    relu1: Relu,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm<T>,
    pub projection: Option<(Conv2d<T>, BatchNorm<T>)>,
    relu_out: Relu,
}

impl<T: Float> ResidualBlock<T> {
    pub fn new(c_in: usize, c_out: usize, stride: usize, rng: &mut impl Rng) -> Result<Self, NnError> {
        let conv1 = Conv2d::new(c_in, c_out, 3, stride, 1, rng)?;
        let conv2 = Conv2d::new(c_out, c_out, 3, 1, 1, rng)?;
        let projection = if c_in != c_out || stride != 1 {
            Some((Conv2d::new(c_in, c_out, 1, stride, 0, rng)?, BatchNorm::new(c_out)))
        } else {
            None
        };
        Self::from_parts(conv1, BatchNorm::new(c_out), conv2, BatchNorm::new(c_out), projection)
    }

    pub fn from_parts(
        conv1: Conv2d<T>,
        bn1: BatchNorm<T>,
        conv2: Conv2d<T>,
        bn2: BatchNorm<T>,
        projection: Option<(Conv2d<T>, BatchNorm<T>)>,
    ) -> Result<Self, NnError> {
        let widths_ok = conv1.c_out == bn1.channels
            && conv2.c_in == conv1.c_out
            && conv2.c_out == bn2.channels
            && conv2.stride == 1;
        let skip_ok = match &projection {
            Some((c, b)) => c.c_in == conv1.c_in && c.c_out == conv2.c_out && c.stride == conv1.stride && b.channels == c.c_out,
            None => conv1.c_in == conv2.c_out && conv1.stride == 1,
        };
        if !widths_ok || !skip_ok {
            return Err(NnError::Config("inconsistent residual block widths".into()));
        }
        Ok(Self {
            conv1,
            bn1,
            relu1: Relu::default(),
            conv2,
            bn2,
            projection,
            relu_out: Relu::default(),
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let a = self.conv1.forward(x, ctx)?;
        let a = self.bn1.forward(&a, ctx)?;
        let a = self.relu1.forward(&a, ctx)?;
        let a = self.conv2.forward(&a, ctx)?;
        let mut a = self.bn2.forward(&a, ctx)?;
        let skip = match &mut self.projection {
            Some((conv, bn)) => {
                let s = conv.forward(x, ctx)?;
                bn.forward(&s, ctx)?
            }
            None => x.clone(),
        };
        check_same_shape("residual add", a.shape(), skip.shape())?;
        for (v, s) in a.data_mut().iter_mut().zip(skip.data()) {
            *v += *s;
        }
        self.relu_out.forward(&a, ctx)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let g = self.relu_out.backward(g)?;
        let gm = self.bn2.backward(&g)?;
        let gm = self.conv2.backward(&gm)?;
        let gm = self.relu1.backward(&gm)?;
        let gm = self.bn1.backward(&gm)?;
        let mut gx = self.conv1.backward(&gm)?;
        let gs = match &mut self.projection {
            Some((conv, bn)) => {
                let s = bn.backward(&g)?;
                conv.backward(&s)?
            }
            None => g,
        };
        for (v, s) in gx.data_mut().iter_mut().zip(gs.data()) {
            *v += *s;
        }
        Ok(gx)
    }

    fn cast<U: Float>(&self) -> ResidualBlock<U> {
        ResidualBlock {
            conv1: self.conv1.cast(),
            bn1: self.bn1.cast(),
            relu1: Relu::default(),
            conv2: self.conv2.cast(),
            bn2: self.bn2.cast(),
            projection: self.projection.as_ref().map(|(c, b)| (c.cast(), b.cast())),
            relu_out: Relu::default(),
        }
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for p in [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
        ] {
            f(p);
        }
        if let Some((c, b)) = &mut self.projection {
            for p in [&mut c.weight, &mut c.bias, &mut b.gamma, &mut b.beta] {
                f(p);
            }
        }
    }

    fn costs(&self, name: &str, input: &[usize], out: &mut Vec<LayerCost>) -> Result<Vec<usize>, NnError> {
        let held = input.iter().product::<usize>() as u64;
        let c1 = self.conv1.cost(format!("{name}.conv1"), input)?;
        let mid = c1.output_shape.clone();
        out.push(c1);
        let mut push = |mut c: LayerCost| {
            c.held_elems = held;
            out.push(c);
        };
        push(self.bn1.cost(format!("{name}.bn1"), &mid)?);
        push(activation_cost(format!("{name}.relu1"), LayerKind::Relu, &mid));
        push(self.conv2.cost(format!("{name}.conv2"), &mid)?);
        push(self.bn2.cost(format!("{name}.bn2"), &mid)?);
        if let Some((c, b)) = &self.projection {
            let mut pc = c.cost(format!("{name}.proj"), input)?;
            pc.held_elems = mid.iter().product::<usize>() as u64;
            out.push(pc);
            let mut pb = b.cost(format!("{name}.proj_bn"), &mid)?;
            pb.held_elems = mid.iter().product::<usize>() as u64;
            out.push(pb);
        }
        out.push(activation_cost(format!("{name}.add"), LayerKind::ResidualAdd, &mid));
        out.push(activation_cost(format!("{name}.relu2"), LayerKind::Relu, &mid));
        Ok(mid)
    }
}

fn activation_cost(name: String, kind: LayerKind, shape: &[usize]) -> LayerCost {
    LayerCost {
        name,
        kind,
        input_shape: shape.to_vec(),
        output_shape: shape.to_vec(),
        macc: 0,
        params: 0,
        held_elems: 0,
    }
}

// ----------------------------------------------------------------- layer

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu(Relu),
    Pool(Pool),
    Dropout(Dropout<T>),
    Flatten { cache: Option<Vec<usize>> },
    Dense(Dense<T>),
    Residual(Box<ResidualBlock<T>>),
}

impl<T: Float> Layer<T> {
    pub fn flatten() -> Self {
        Layer::Flatten { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv2d(l) => l.forward(x, ctx),
            Layer::BatchNorm(l) => l.forward(x, ctx),
            Layer::Relu(l) => l.forward(x, ctx),
            Layer::Pool(l) => l.forward(x, ctx),
            Layer::Dropout(l) => l.forward(x, ctx),
            Layer::Dense(l) => l.forward(x, ctx),
            Layer::Residual(l) => l.forward(x, ctx),
            Layer::Flatten { cache } => {
                if ctx.caching() {
                    *cache = Some(x.shape().to_vec());
                }
                x.clone().reshape(&[x.batch(), x.item_len()])
            }
        }
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv2d(l) => l.backward(g),
            Layer::BatchNorm(l) => l.backward(g),
            Layer::Relu(l) => l.backward(g),
            Layer::Pool(l) => l.backward(g),
            Layer::Dropout(l) => l.backward(g),
            Layer::Dense(l) => l.backward(g),
            Layer::Residual(l) => l.backward(g),
            Layer::Flatten { cache } => {
                let shape = cache.take().ok_or_else(|| missing("flatten"))?;
                g.clone().reshape(&shape)
            }
        }
    }

    /// Visits every trainable parameter in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match self {
            Layer::Conv2d(l) => {
                f(&mut l.weight);
                f(&mut l.bias);
            }
            Layer::Dense(l) => {
                f(&mut l.weight);
                f(&mut l.bias);
            }
            Layer::BatchNorm(l) => {
                f(&mut l.gamma);
                f(&mut l.beta);
            }
            Layer::Residual(l) => l.visit(f),
            Layer::Relu(_) | Layer::Pool(_) | Layer::Dropout(_) | Layer::Flatten { .. } => {}
        }
    }

    pub fn cast<U: Float>(&self) -> Layer<U> {
        match self {
            Layer::Conv2d(l) => Layer::Conv2d(l.cast()),
            Layer::BatchNorm(l) => Layer::BatchNorm(l.cast()),
            Layer::Relu(_) => Layer::Relu(Relu::default()),
            Layer::Pool(l) => Layer::Pool(Pool { cache: None, ..l.clone() }),
            Layer::Dropout(l) => Layer::Dropout(Dropout { p: l.p, cache: None }),
            Layer::Dense(l) => Layer::Dense(l.cast()),
            Layer::Residual(l) => Layer::Residual(Box::new(l.cast())),
            Layer::Flatten { .. } => Layer::flatten(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv",
            Layer::BatchNorm(_) => "bn",
            Layer::Relu(_) => "relu",
            Layer::Pool(p) if p.kind == PoolKind::Max => "maxpool",
            Layer::Pool(_) => "avgpool",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten { .. } => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Residual(_) => "res",
        }
    }

    /// Appends the cost of this layer (or its sub-layers) and returns the
    /// output shape for a single item of shape `input`.
    pub fn costs(&self, name: &str, input: &[usize], out: &mut Vec<LayerCost>) -> Result<Vec<usize>, NnError> {
        let cost = match self {
            Layer::Conv2d(l) => l.cost(name.into(), input)?,
            Layer::BatchNorm(l) => l.cost(name.into(), input)?,
            Layer::Dense(l) => l.cost(name.into(), input)?,
            Layer::Pool(l) => l.cost(name.into(), input)?,
            Layer::Relu(_) => activation_cost(name.into(), LayerKind::Relu, input),
            Layer::Dropout(_) => activation_cost(name.into(), LayerKind::Dropout, input),
            Layer::Flatten { .. } => LayerCost {
                output_shape: vec![input.iter().product()],
                ..activation_cost(name.into(), LayerKind::Flatten, input)
            },
            Layer::Residual(l) => return l.costs(name, input, out),
        };
        let shape = cost.output_shape.clone();
        out.push(cost);
        Ok(shape)
    }
}

/// An ordered stack of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Float> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>, NnError> {
        let mut a = x.clone();
        for l in &mut self.layers {
            a = l.forward(&a, ctx)?;
        }
        Ok(a)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut g = g.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
    }

    pub fn cast<U: Float>(&self) -> Sequential<U> {
        Sequential {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }

    pub fn costs(&self, prefix: &str, input: &[usize], out: &mut Vec<LayerCost>) -> Result<Vec<usize>, NnError> {
        let mut shape = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            shape = l.costs(&format!("{prefix}{i}.{}", l.name()), &shape, out)?;
        }
        Ok(shape)
    }
}
