//! Deformable object (rope and cloth) tracking from masked point clouds.
//!
//! Each frame is registered against a node graph with a visibility-aware
//! GMM-EM whose M-step is regularized by motion coherence, locally linear
//! embedding and a motion-model prediction. The EM result is then projected
//! onto a convex set encoding stretch limits, grasp correspondences,
//! self-intersection gaps and obstacle half-spaces.
//!
//! Module map:
//! - [`geometry`]: template graph, geodesics, kernel, LLE weights, segment
//!   distance and voxel downsampling.
//! - [`registration`]: E-step, regularized M-step and the EM loop.
//! - [`prediction`]: no-motion and diminishing-rigidity motion models.
//! - [`constraints`]: obstacle meshes, constraint assembly and the
//!   projection solve.
//! - [`scenes`]: synthetic sequences with ground truth, sequence files and
//!   evaluation metrics.
//! - [`pipeline`]: the per-frame tracking session.

pub mod camera;
pub mod constraints;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod prediction;
pub mod registration;
pub mod scenes;

pub use error::{Result, TrackError};

/// 3-vector used for all positions, in meters.
pub type Vec3 = nalgebra::Vector3<f64>;
