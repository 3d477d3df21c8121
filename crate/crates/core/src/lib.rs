//! Tactile glove toolkit: frame I/O, threshold calibration, a sensor
//! simulator, a small CNN, evaluation protocols and analysis helpers.

pub mod analysis;
pub mod calib;
pub mod eval;
pub mod frames;
pub mod model;
pub mod nn;
pub mod power;
pub mod seed;
pub mod sensorsim;
