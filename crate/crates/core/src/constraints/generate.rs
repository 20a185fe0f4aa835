use std::collections::BTreeMap;

use log::warn;

use super::mesh::{nearest_obstacle_point, ObstacleSet};
use crate::geometry::{closest_points_between_segments, DeformableTemplate};
use crate::{Result, TrackError, Vec3};

/// `|p_i - p_j| <= bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchRow {
    pub i: usize,
    pub j: usize,
    pub bound: f64,
}

/// `p_node == target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondenceRow {
    pub node: usize,
    pub target: Vec3,
}

/// Keeps two edges at least `margin` apart along `normal`:
/// `(r_i p_i0 + (1 - r_i) p_i1 - r_j p_j0 - (1 - r_j) p_j1) . normal >= margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfIntersectionRow {
    pub edge_i: (usize, usize),
    pub edge_j: (usize, usize),
    pub r_i: f64,
    pub r_j: f64,
    pub normal: Vec3,
    pub margin: f64,
}

/// `(p_node - point) . normal >= margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleRow {
    pub node: usize,
    pub point: Vec3,
    pub normal: Vec3,
    pub margin: f64,
}

impl StretchRow {
    pub fn violation(&self, p: &[Vec3]) -> f64 {
        (p[self.i] - p[self.j]).norm() - self.bound
    }
}

impl CorrespondenceRow {
    pub fn violation(&self, p: &[Vec3]) -> f64 {
        (p[self.node] - self.target).norm()
    }
}

impl SelfIntersectionRow {
    pub fn gap(&self, p: &[Vec3]) -> f64 {
        let a = p[self.edge_i.0] * self.r_i + p[self.edge_i.1] * (1.0 - self.r_i);
        let b = p[self.edge_j.0] * self.r_j + p[self.edge_j.1] * (1.0 - self.r_j);
        (a - b).dot(&self.normal)
    }

    pub fn violation(&self, p: &[Vec3]) -> f64 {
        self.margin - self.gap(p)
    }
}

impl ObstacleRow {
    pub fn violation(&self, p: &[Vec3]) -> f64 {
        self.margin - (p[self.node] - self.point).dot(&self.normal)
    }
}

/// Self-intersection rows plus the pairs skipped because their closest
/// points coincided and no separating direction exists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelfIntersectionRows {
    pub rows: Vec<SelfIntersectionRow>,
    pub skipped: Vec<((usize, usize), (usize, usize))>,
}

/// Every row of one projection problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub stretch: Vec<StretchRow>,
    pub correspondence: Vec<CorrespondenceRow>,
    pub self_intersection: Vec<SelfIntersectionRow>,
    pub obstacle: Vec<ObstacleRow>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.num_rows() == 0
    }

    pub fn num_rows(&self) -> usize {
        self.stretch.len()
            + self.correspondence.len()
            + self.self_intersection.len()
            + self.obstacle.len()
    }

    /// Largest violation over all rows, 0 or negative when feasible.
    pub fn max_violation(&self, p: &[Vec3]) -> f64 {
        let stretch = self.stretch.iter().map(|r| r.violation(p));
        let corr = self.correspondence.iter().map(|r| r.violation(p));
        let si = self.self_intersection.iter().map(|r| r.violation(p));
        let obs = self.obstacle.iter().map(|r| r.violation(p));
        stretch
            .chain(corr)
            .chain(si)
            .chain(obs)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn max_node(&self) -> Option<usize> {
        let s = self.stretch.iter().map(|r| r.i.max(r.j));
        let c = self.correspondence.iter().map(|r| r.node);
        let si = self
            .self_intersection
            .iter()
            .map(|r| r.edge_i.0.max(r.edge_i.1).max(r.edge_j.0).max(r.edge_j.1));
        let o = self.obstacle.iter().map(|r| r.node);
        s.chain(c).chain(si).chain(o).max()
    }
}

/// One row per template edge, bounded by `lambda` times its rest length.
pub fn gen_stretch_constraints(
    template: &DeformableTemplate,
    lambda: f64,
) -> Result<Vec<StretchRow>> {
    if lambda < 1.0 || !lambda.is_finite() {
        return Err(TrackError::param(
            "lambda",
            format!("must be >= 1, got {lambda}"),
        ));
    }
    let g = template.geodesic();
    Ok(template
        .edges()
        .iter()
        .map(|&(i, j)| StretchRow {
            i,
            j,
            bound: lambda * g[(i, j)],
        })
        .collect())
}

/// Equality rows for grasped nodes. Repeated identical targets collapse to
/// one row; differing targets for the same node are an error.
pub fn gen_correspondence_constraints(targets: &[(usize, Vec3)]) -> Result<Vec<CorrespondenceRow>> {
    let mut by_node: BTreeMap<usize, Vec3> = BTreeMap::new();
    for &(node, target) in targets {
        if !target.iter().all(|v| v.is_finite()) {
            return Err(TrackError::NonFinite("grasp target"));
        }
        match by_node.get(&node) {
            Some(existing) if *existing != target => {
                return Err(TrackError::ConflictingCorrespondence { node });
            }
            Some(_) => {}
            None => {
                by_node.insert(node, target);
            }
        }
    }
    Ok(by_node
        .into_iter()
        .map(|(node, target)| CorrespondenceRow { node, target })
        .collect())
}

/// Rows for every pair of edges without a shared node whose closest points
/// at `prev` are within `s_check`, each demanding a gap of at least `s`.
pub fn gen_self_intersection_constraints(
    prev: &[Vec3],
    edges: &[(usize, usize)],
    s_check: f64,
    s: f64,
) -> Result<SelfIntersectionRows> {
    if !(s >= 0.0 && s < s_check) {
        return Err(TrackError::param(
            "s",
            format!("need 0 <= s < s_check, got s = {s}, s_check = {s_check}"),
        ));
    }
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i.max(j) >= prev.len()) {
        return Err(TrackError::DimensionMismatch(format!(
            "edge ({i}, {j}) for {} nodes",
            prev.len()
        )));
    }
    let boxes: Vec<(Vec3, Vec3)> = edges
        .iter()
        .map(|&(i, j)| (prev[i].inf(&prev[j]), prev[i].sup(&prev[j])))
        .collect();

    let mut out = SelfIntersectionRows::default();
    for a in 0..edges.len() {
        let (i0, i1) = edges[a];
        for b in (a + 1)..edges.len() {
            let (j0, j1) = edges[b];
            if i0 == j0 || i0 == j1 || i1 == j0 || i1 == j1 {
                continue;
            }
            let apart = (0..3).any(|k| {
                boxes[a].0[k] - boxes[b].1[k] >= s_check || boxes[b].0[k] - boxes[a].1[k] >= s_check
            });
            if apart {
                continue;
            }
            let c = closest_points_between_segments(&prev[i0], &prev[i1], &prev[j0], &prev[j1]);
            if c.distance >= s_check {
                continue;
            }
            let diff =
                c.point_on_first(&prev[i0], &prev[i1]) - c.point_on_second(&prev[j0], &prev[j1]);
            let len = diff.norm();
            if len < 1e-12 {
                warn!("edges ({i0}, {i1}) and ({j0}, {j1}) touch; no separating direction, pair skipped");
                out.skipped.push(((i0, i1), (j0, j1)));
                continue;
            }
            out.rows.push(SelfIntersectionRow {
                edge_i: (i0, i1),
                edge_j: (j0, j1),
                r_i: c.r_i,
                r_j: c.r_j,
                normal: diff / len,
                margin: s,
            });
        }
    }
    Ok(out)
}

/// One half-space row per node, tangent to the nearest obstacle surface
/// point at `prev`. Empty without obstacles.
pub fn gen_obstacle_constraints(
    prev: &[Vec3],
    obstacles: &ObstacleSet,
    margin: f64,
) -> Vec<ObstacleRow> {
    if obstacles.is_empty() {
        return Vec::new();
    }
    prev.iter()
        .enumerate()
        .filter_map(|(node, p)| {
            nearest_obstacle_point(p, obstacles).map(|hit| ObstacleRow {
                node,
                point: hit.point,
                normal: hit.normal,
                margin,
            })
        })
        .collect()
}
