use crate::constraints::{nearest_obstacle_point, ObstacleSet};
use crate::geometry::closest_points_between_segments;
use crate::{Result, TrackError, Vec3};

/// Mean Euclidean distance between index-aligned nodes.
pub fn mean_distance_error(estimate: &[Vec3], ground_truth: &[Vec3]) -> Result<f64> {
    if estimate.len() != ground_truth.len() {
        return Err(TrackError::DimensionMismatch(format!(
            "estimate has {} nodes, ground truth {}",
            estimate.len(),
            ground_truth.len()
        )));
    }
    if estimate.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = estimate
        .iter()
        .zip(ground_truth)
        .map(|(a, b)| (a - b).norm())
        .sum();
    Ok(total / estimate.len() as f64)
}

/// Smallest gap at `curr` between edge pairs that were closer than
/// `s_check` at `prev`, measured along the separating direction and at the
/// closest-point parameters found at `prev`. `None` if no pair qualifies.
pub fn min_projected_gap(
    prev: &[Vec3],
    curr: &[Vec3],
    edges: &[(usize, usize)],
    s_check: f64,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    for a in 0..edges.len() {
        let (i0, i1) = edges[a];
        for &(j0, j1) in &edges[a + 1..] {
            if i0 == j0 || i0 == j1 || i1 == j0 || i1 == j1 {
                continue;
            }
            let c = closest_points_between_segments(&prev[i0], &prev[i1], &prev[j0], &prev[j1]);
            if c.distance >= s_check {
                continue;
            }
            let diff =
                c.point_on_first(&prev[i0], &prev[i1]) - c.point_on_second(&prev[j0], &prev[j1]);
            let Some(u) = diff.try_normalize(1e-12) else {
                // already touching: the gap is zero in every direction
                best = Some(best.map_or(0.0, |b: f64| b.min(0.0)));
                continue;
            };
            let now =
                c.point_on_first(&curr[i0], &curr[i1]) - c.point_on_second(&curr[j0], &curr[j1]);
            let gap = now.dot(&u);
            best = Some(best.map_or(gap, |b| b.min(gap)));
        }
    }
    best
}

/// Nodes whose signed distance to the nearest obstacle is below `-tolerance`.
pub fn count_penetrations(points: &[Vec3], obstacles: &ObstacleSet, tolerance: f64) -> usize {
    points
        .iter()
        .filter(|p| {
            nearest_obstacle_point(p, obstacles).is_some_and(|h| h.signed_distance < -tolerance)
        })
        .count()
}

/// Per-frame evaluation of a tracking run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    /// Mean distance error per frame, `None` where no ground truth exists.
    pub mean_distance_error: Vec<Option<f64>>,
    /// Nodes inside an obstacle by more than 1e-6 m, per frame.
    pub penetrations: Vec<usize>,
}

impl MetricSeries {
    pub fn push(
        &mut self,
        estimate: &[Vec3],
        ground_truth: Option<&[Vec3]>,
        obstacles: &ObstacleSet,
    ) -> Result<()> {
        let err = ground_truth
            .map(|gt| mean_distance_error(estimate, gt))
            .transpose()?;
        self.mean_distance_error.push(err);
        self.penetrations
            .push(count_penetrations(estimate, obstacles, 1e-6));
        Ok(())
    }
}
