//! Deterministic Retinex-style low-light enhancement.
//!
//! The pipeline splits an image into reflectance and a single-channel
//! illumination map, cleans up the reflectance (per-channel bilateral-grid
//! denoising, illumination-guided Laplacian detail restoration, quadratic
//! color correction), brightens the illumination with a gamma curve and
//! multiplies the two back together. Quality metrics and the stage
//! objectives live in [`metrics`]; paired-dataset evaluation in [`eval`].

// `!(x > 0.0)` is used on purpose to reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjust;
pub mod cdm;
pub mod codec;
pub mod config;
pub mod decomp;
pub mod error;
pub mod eval;
pub mod image;
pub mod metrics;
pub mod pcm;
pub mod pipeline;
pub mod rpm;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result, Stage};
pub use image::Image;
pub use pipeline::{enhance, Enhanced};
