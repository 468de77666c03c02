//! Compositional semantic mixing for unsupervised domain adaptation of LiDAR
//! point-cloud segmentation.
//!
//! The crate covers the full loop: class-frequency driven patch selection,
//! two-branch point-cloud composition with local/global augmentation,
//! confidence-filtered pseudo-labels, Dice-loss teacher-student training with
//! EMA updates, segmentation metrics, binary scan/label I/O and a synthetic
//! two-domain benchmark for desk-scale runs.
//!
//! All geometry and training math is generic over [`scalar::Scalar`]
//! (f32 or f64); the binary file formats are f32 on disk.

pub mod adapt;
pub mod cloud;
pub mod error;
pub mod io;
pub mod learn;
pub mod metrics;
pub mod mix;
pub mod rngs;
pub mod scalar;
pub mod segmenter;
pub mod select;
pub mod synth;

pub use cloud::{ClassSet, LabelArray, Patch, Point, PointCloud, IGNORE_LABEL};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// f32 aliases: the scalar type of the on-disk formats and the CLI pipeline.
pub type Point32 = Point<f32>;
pub type Cloud32 = PointCloud<f32>;

/// f64 aliases for high-precision use.
pub type Point64 = Point<f64>;
pub type Cloud64 = PointCloud<f64>;
