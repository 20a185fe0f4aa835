//! Template representation and precomputed geometry shared by every frame.

mod kernel;
mod lle;
mod segment;
mod template;
mod voxel;

pub use kernel::{build_gaussian_kernel, KernelMatrix};
pub use lle::{compute_lle_weights, LleWeights, LLE_REGULARIZATION};
pub use segment::{closest_points_between_segments, SegmentClosest};
pub use template::{compute_geodesics, DeformableTemplate, TemplateFile};
pub use voxel::voxel_downsample;

use nalgebra::DMatrix;

use crate::Vec3;

/// Packs a point list into an `n x 3` matrix.
pub fn points_to_matrix(points: &[Vec3]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |r, c| points[r][c])
}

/// Unpacks the rows of an `n x 3` matrix.
pub fn matrix_to_points(m: &DMatrix<f64>) -> Vec<Vec3> {
    assert_eq!(m.ncols(), 3, "point matrix must have 3 columns");
    (0..m.nrows())
        .map(|r| Vec3::new(m[(r, 0)], m[(r, 1)], m[(r, 2)]))
        .collect()
}
