//! Self-supervised image outpainting toolkit.
//!
//! Given a square photo, hallucinate a band of new content beyond all four
//! edges with an adversarially trained context-encoder generator, then
//! composite, evaluate, recursively extrapolate, or harmonize the result.
//!
//! All numeric code is generic over the scalar type ([`scalar::Scalar`],
//! implemented for `f32` and `f64`); the aliases below fix the widths used by
//! the shipped pipeline.

pub mod checkpoint;
pub mod compositing;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod harmonization;
pub mod models;
pub mod nn;
pub mod plot;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Element type used by the shipped training / inference pipeline.
pub type Elem = f32;

/// Element type used by numeric verification (finite differences).
pub type CheckElem = f64;

/// H x W x 3 image stored channels-first as (3, H, W), values in [-1, 1].
pub type ImageTensor<S> = ndarray::Array3<S>;

/// A batch of images, (N, 3, H, W).
pub type ImageBatch<S> = ndarray::Array4<S>;
