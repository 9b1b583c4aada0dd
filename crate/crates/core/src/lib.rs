//! Self-calibrating generic camera model jointly optimized with a voxel
//! radiance field.

pub mod calib;
pub mod cli;
pub mod camera;
pub mod diff;
pub mod error;
pub mod field;
pub mod image;
pub mod io;
pub mod math;
pub mod metrics;
pub mod rays;
pub mod synth;

pub use error::{Error, Result};
