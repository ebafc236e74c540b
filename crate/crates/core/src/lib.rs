//! Synthesis of class-balanced annotated ultrasound datasets.
//!
//! Under-represented pathological structures are transplanted between
//! annotated images with gradient-domain (Poisson) blending, and the
//! ground-truth masks are propagated alongside the pixels. A metrics
//! module scores segmentations (DSC, surface DSC, HD95, recall) and a
//! stats module runs paired t-tests and inter-observer agreement.
//!
//! Core numerics are generic over the scalar type through [`Scalar`];
//! the crate-root aliases fix `f64` as the default precision.

pub mod error;
pub mod image;
pub mod io;
pub mod manifest;
pub mod mask;
pub mod metrics;
pub mod poisson;
pub mod scalar;
pub mod stats;
pub mod synth;

pub use crate::error::{Error, Result};
pub use crate::image::{Image, Rect};
pub use crate::mask::{ClassId, Component, LabelMaskSet, Mask};
pub use crate::scalar::Scalar;

/// Default scalar precision for the pipeline.
pub type Real = f64;

/// Single-channel intensity raster at default precision, values in `[0, 1]`.
pub type GrayImage = Image<Real>;

/// Single-precision raster, for callers trading accuracy for memory.
pub type GrayImageF32 = Image<f32>;
