use std::collections::BTreeMap;

use crate::{Result, TrackError, Vec3};

/// Replaces the points of each occupied voxel by their centroid.
///
/// Voxels are axis-aligned cubes of side `grid_size` anchored at the origin.
/// Output order follows the voxel index, so it does not depend on input order.
pub fn voxel_downsample(cloud: &[Vec3], grid_size: f64) -> Result<Vec<Vec3>> {
    if grid_size <= 0.0 || !grid_size.is_finite() {
        return Err(TrackError::param(
            "voxel_size",
            format!("must be positive, got {grid_size}"),
        ));
    }
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in cloud {
        let key = [
            (p.x / grid_size).floor() as i64,
            (p.y / grid_size).floor() as i64,
            (p.z / grid_size).floor() as i64,
        ];
        let cell = cells.entry(key).or_insert((Vec3::zeros(), 0));
        cell.0 += p;
        cell.1 += 1;
    }
    Ok(cells
        .into_values()
        .map(|(sum, count)| sum / count as f64)
        .collect())
}
