use nalgebra::DVector;

use crate::camera::{DepthRaster, MaskRaster, PinholeCamera};
use crate::{Result, TrackError, Vec3};

/// Per-node mixture weights summing to `1 - w`.
///
/// Each node is projected into the depth raster; its occlusion deficit is
/// `max(0, node_depth - observed_depth)` and its raw score
/// `exp(-k_vis * deficit)`. Nodes outside the image, behind the camera or on
/// pixels without a return count as visible. Without a raster every node
/// gets `(1 - w) / M`.
pub fn visibility_prior(
    points: &[Vec3],
    depth: Option<&DepthRaster>,
    mask: Option<&MaskRaster>,
    camera: Option<&PinholeCamera>,
    k_vis: f64,
    w: f64,
) -> Result<DVector<f64>> {
    let m = points.len();
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let mass = 1.0 - w;
    let (depth, camera) = match (depth, camera) {
        (Some(d), Some(c)) => (d, c),
        _ => return Ok(DVector::from_element(m, mass / m as f64)),
    };
    if depth.width != camera.width || depth.height != camera.height {
        return Err(TrackError::DimensionMismatch(format!(
            "depth raster {}x{} vs camera {}x{}",
            depth.width, depth.height, camera.width, camera.height
        )));
    }
    if let Some(mask) = mask {
        if mask.width != depth.width || mask.height != depth.height {
            return Err(TrackError::DimensionMismatch(format!(
                "mask raster {}x{} vs depth raster {}x{}",
                mask.width, mask.height, depth.width, depth.height
            )));
        }
    }

    let deficits: Vec<f64> = points
        .iter()
        .map(|p| {
            camera
                .pixel_of(p)
                .and_then(|(col, row, node_depth)| {
                    depth
                        .observed(col, row)
                        .map(|obs| (node_depth - obs).max(0.0))
                })
                .unwrap_or(0.0)
        })
        .collect();
    // shift by the smallest deficit so the least occluded node never underflows
    let min_deficit = deficits.iter().copied().fold(f64::INFINITY, f64::min);
    let scores = DVector::from_iterator(
        m,
        deficits.iter().map(|d| (-k_vis * (d - min_deficit)).exp()),
    );
    let total = scores.sum();
    Ok(scores * (mass / total))
}
