//! Zero-shot hyperspectral land-cover classification.
//!
//! The pipeline has two stages. Pseudo-label generation scores a false-color
//! proxy of the cube with a dense open-vocabulary scorer over sliding windows
//! and several input scales, then turns the fused class probabilities into
//! hard labels plus a best-versus-second-best confidence. Noisy-label
//! learning trains a per-pixel spectral classifier on those labels, splits
//! its predictions into confident and hard sets, and refines it with soft
//! labels from class-conditional Gaussian mixtures in PCA space.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod labeler;
pub mod mixture;
pub mod pipeline;
pub mod prep;
pub mod ptf;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
