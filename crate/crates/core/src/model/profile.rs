//! Static compute and memory budget of a network.

use serde::Serialize;

use super::{ModelError, TactileNet, FEATURE_WIDTH, IMU_FEATURES};
use crate::frames::GRID_SIZE;
use crate::nn::{Float, LayerCost, LayerKind, Sequential};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub layers: Vec<LayerCost>,
    pub macc_total: u64,
    pub param_count: u64,
    pub param_bytes_32bit: u64,
    /// Largest live set at any layer: input, output and any held skip tensor.
    pub peak_activation_bytes: u64,
}

impl ProfileReport {
    fn from_layers(layers: Vec<LayerCost>) -> Self {
        let macc_total = layers.iter().map(|l| l.macc).sum();
        let param_count = layers.iter().map(|l| l.params).sum();
        let peak = layers
            .iter()
            .map(|l| {
                let n = |s: &[usize]| s.iter().product::<usize>() as u64;
                // Reshapes are views and need no extra buffer.
                let out = if l.kind == LayerKind::Flatten { 0 } else { n(&l.output_shape) };
                4 * (n(&l.input_shape) + out + l.held_elems)
            })
            .max()
            .unwrap_or(0);
        Self {
            layers,
            macc_total,
            param_count,
            param_bytes_32bit: 4 * param_count,
            peak_activation_bytes: peak,
        }
    }
}

/// Profile of a plain layer stack for one input item of shape `input`.
pub fn profile_sequential<T: Float>(seq: &Sequential<T>, input: &[usize]) -> Result<ProfileReport, ModelError> {
    let mut layers = Vec::new();
    seq.costs("", input, &mut layers)?;
    Ok(ProfileReport::from_layers(layers))
}

/// Profile of a full network for a single 32x32 frame.
pub fn profile<T: Float>(net: &TactileNet<T>) -> Result<ProfileReport, ModelError> {
    let mut layers = Vec::new();
    let features = net.tactile.costs("tactile.", &[1, GRID_SIZE, GRID_SIZE], &mut layers)?;
    let mut width = features.iter().product::<usize>();
    if width != FEATURE_WIDTH {
        return Err(ModelError::Format(format!("tactile features {width} wide, expected {FEATURE_WIDTH}")));
    }
    if let Some(branch) = &net.imu {
        let out = branch.costs("imu.", &[IMU_FEATURES], &mut layers)?;
        width += out.iter().product::<usize>();
    }
    layers.push(net.classifier.cost("classifier".into(), &[width])?);
    Ok(ProfileReport::from_layers(layers))
}
