//! Video stabilization built on a compact global-motion model.
//!
//! Inter-frame motion is represented by low-frequency 2D-DCT coefficients of
//! the dense flow field, estimated by coarse-to-fine robust direct alignment.
//! Stabilization runs in two stages: box-constrained quadratic-programming
//! smoothing of a 4-parameter similarity path (with a crop-ratio budget),
//! followed by temporal bilateral smoothing of the DCT coefficient sequences.
//! A synthetic-video generator with analytic ground truth and six video
//! quality measures round out the toolkit.

pub mod affine;
pub mod align;
pub mod dct;
pub mod error;
pub mod flowfield;
pub mod frame;
pub mod io;
pub mod metrics;
pub mod path_smooth;
pub mod pipeline;
pub mod residual_smooth;
pub mod robust;
pub mod synth;
pub mod warp;

mod sep;

pub use error::{Error, Result};
pub use flowfield::FlowField;
pub use frame::{Frame, FrameSequence, Mask};
