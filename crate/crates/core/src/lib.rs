//! Multimodal recognition of 1-7 self-disclosure scores from paired audio and visual
//! segment features.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases below fix the
//! scalar for the common cases.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod features;
pub mod linalg;
pub mod losses;
pub mod matrix;
pub mod model;
pub mod plot;
pub mod scalar;
pub mod sdfm;
pub mod segmentation;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

/// Number of ordinal score classes (scores 1..=7).
pub const NUM_CLASSES: usize = 7;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type FeatureMatrix64 = features::FeatureMatrix<f64>;
pub type FeatureMatrix32 = features::FeatureMatrix<f32>;
pub type SegmentedTensor64 = segmentation::SegmentedTensor<f64>;
pub type SegmentedTensor32 = segmentation::SegmentedTensor<f32>;
pub type PcaModel64 = features::PcaModel<f64>;
pub type PcaModel32 = features::PcaModel<f32>;
pub type Network64 = model::Network<f64>;
pub type Network32 = model::Network<f32>;
