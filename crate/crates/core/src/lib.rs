//! Facial attribute prediction with landmark-augmented CNN inputs.
//!
//! - [`imaging`]: loading, resizing and rotation augmentation.
//! - [`landmarks`]: the per-pixel nearest-landmark channel.
//! - [`nn`]: a from-scratch CNN with softmax / sigmoid cross-entropy losses.
//! - [`annotations`]: rater filtering, consensus labels and Fleiss' kappa.
//! - [`pipeline`]: manifests, sample building, stratified splits,
//!   experiments and first-layer activation grids.
//! - [`synthetic`]: generated datasets with a known landmark-dependent label.

pub mod annotations;
pub mod error;
pub mod imaging;
pub mod landmarks;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod util;

pub use error::{Error, Result};
