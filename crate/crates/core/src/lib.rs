//! µLED array inspection: grid reconstruction from axis projections of a
//! luminance frame, unsupervised functional/defect classification of every
//! µLED (standardization, PCA to two dimensions, k-Means with two clusters),
//! and light-emitting-surface statistics with and without defective cells.
//!
//! Stages, in pipeline order:
//!
//! 1. [`io`] reads ULF1 frames and defect-map CSVs.
//! 2. [`geometry`] detects the emitting-surface corners and removes tilt and
//!    rotation with a four-point homography.
//! 3. [`grid`] projects the rectified frame onto both axes, estimates the
//!    pitch, and places cell edges at the projection minima.
//! 4. [`features`] computes six statistics per interior µLED.
//! 5. [`ml`] standardizes, reduces to two principal components and clusters.
//! 6. [`eval`] scores against ground truth and computes raw/denoised means.
//!
//! [`pipeline`] runs all stages and writes the artifacts; [`synthgen`]
//! produces frames with known ground truth.
//!
//! The numerical kernels (homography, PCA, k-Means) are generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix the precision used by
//! the pipeline.

pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod ml;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use io::{DefectMap, MeasurementFrame};
pub use scalar::Scalar;

pub type Homography = geometry::Homography<f64>;
pub type Homography32 = geometry::Homography<f32>;
pub type Matrix = ml::Matrix<f64>;
pub type Matrix32 = ml::Matrix<f32>;
pub type Standardizer = ml::Standardizer<f64>;
pub type PcaModel = ml::PcaModel<f64>;
pub type PcaModel32 = ml::PcaModel<f32>;
pub type KMeansModel = ml::KMeansModel<f64>;
pub type KMeansModel32 = ml::KMeansModel<f32>;
