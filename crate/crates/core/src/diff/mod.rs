//! Differentiation primitives, the parameter registry, and the optimizer.

mod adam;
mod gradcheck;
mod jet;
mod params;

pub use adam::{decode_adam, encode_adam, lr_at, read_adam, write_adam, AdamState, GroupMoments, BETA1, BETA2, EPSILON};
pub use gradcheck::{grad_check, relative_error};
pub use jet::{Jet, Scalar};
pub use params::{clamp_camera_residuals, Group, GroupSet, Layout, ParamSet};
