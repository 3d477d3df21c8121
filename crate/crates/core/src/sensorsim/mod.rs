//! Force-sensitive resistor grid simulator.
//!
//! Pressure scenes are converted to per-crossing resistances, scanned with
//! the isolation readout (one row grounded, every other electrode at the
//! reference voltage), perturbed by Gaussian noise and quantized. A full
//! Kirchhoff solver backs the readout as a ground-truth oracle, and a
//! Newton solver inverts the cross-talk of a passive (non-isolated) scan.

mod crosstalk;
mod grid;
mod linalg;
mod nodal;
mod readout;
mod recording;
mod scene;
mod synth;

use thiserror::Error;

pub use crosstalk::{crosstalk_solve, floating_scan, CrosstalkSolution, SolverOptions, Topology};
pub use grid::{active_mask, scan_frame, scan_matrix, MaskKind, SensorGrid, HAND_ACTIVE_CELLS};
pub use nodal::{nodal_oracle, Drive, NodalSolution, Node, ResistorGrid, MAX_SIDE};
pub use readout::{adc_quantize, force_to_resistance, isolation_readout_voltage, ForceLaw, ReadoutConfig};
pub use recording::{simulate_recording, RecordingMeta, SimConfig, MAX_BUFFER_FRAMES};
pub use scene::{
    generate_scene, pressure_centroid, ForceScene, Orientation, SceneKind, SessionPose,
    SlideProfile, CONTACT_FLOOR_N, EMPTY_HAND_MAX_N, PRESS_PEAK_N,
};
pub use synth::{synthesize_calibration_frames, synthesize_dataset, SynthConfig, GLOVE_DEGRADATION};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("negative or NaN force {0} N")]
    NegativeForce(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular network: some electrodes are not connected to any source")]
    Singular,
    #[error("cross-talk solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("unknown class id {0}")]
    UnknownClass(u8),
    #[error("{0} frames exceed the {MAX_BUFFER_FRAMES}-frame acquisition buffer")]
    BufferLimit(usize),
}
