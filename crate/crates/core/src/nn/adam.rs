//! Adam with bias correction.

use super::{Float, Param};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for each visited parameter, in visit
/// order.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter `visit` yields, using each
    /// parameter's accumulated gradient.
    pub fn step<T: Float>(&mut self, lr: f64, visit: impl FnOnce(&mut dyn FnMut(&mut Param<T>))) {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let moments = &mut self.moments;
        let mut idx = 0;
        visit(&mut |p: &mut Param<T>| {
            if moments.len() == idx {
                moments.push((vec![0.0; p.len()], vec![0.0; p.len()]));
            }
            let (m, v) = &mut moments[idx];
            idx += 1;
            let (value, grad) = p.parts();
            for i in 0..value.len() {
                let g = grad[i].to_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                value[i] = T::from_f64(value[i].to_f64() - update);
            }
        });
    }
}
