use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use log::warn;
use serde::{Deserialize, Serialize};

use super::generate::{ConstraintSet, SelfIntersectionRow};
use crate::{Result, TrackError, Vec3};

/// Largest row violation accepted from the conic solver.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionStatus {
    Optimal,
    /// Solved after dropping one or more self-intersection rows.
    Relaxed,
    /// No feasible relaxation; the input is returned unchanged.
    Failed,
}

impl ProjectionStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProjectionStatus::Optimal => "optimal",
            ProjectionStatus::Relaxed => "relaxed",
            ProjectionStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub points: Vec<Vec3>,
    /// `sum |p - p_gmm|^2` at the returned points.
    pub objective: f64,
    /// Largest violation of the rows actually enforced.
    pub max_violation: f64,
    pub status: ProjectionStatus,
    /// Self-intersection rows removed to regain feasibility, in drop order.
    pub dropped: Vec<SelfIntersectionRow>,
}

/// Euclidean projection of `gmm` onto the constraint set.
///
/// If the full set is infeasible, self-intersection rows are dropped one at
/// a time, most violated at `gmm` first, until the solve succeeds. If even
/// the set without any self-intersection rows fails, `gmm` is returned with
/// status `Failed`.
pub fn solve_projection(gmm: &[Vec3], set: &ConstraintSet) -> Result<ProjectionResult> {
    if let Some(n) = set.max_node() {
        if n >= gmm.len() {
            return Err(TrackError::DimensionMismatch(format!(
                "constraint references node {n} of {}",
                gmm.len()
            )));
        }
    }
    if !gmm.iter().all(|p| p.iter().all(|v| v.is_finite())) {
        return Err(TrackError::NonFinite("projection input"));
    }

    // A feasible input is its own projection.
    if set.is_empty() || set.max_violation(gmm) <= 0.0 {
        return Ok(ProjectionResult {
            points: gmm.to_vec(),
            objective: 0.0,
            max_violation: if set.is_empty() {
                0.0
            } else {
                set.max_violation(gmm)
            },
            status: ProjectionStatus::Optimal,
            dropped: Vec::new(),
        });
    }

    let mut order: Vec<usize> = (0..set.self_intersection.len()).collect();
    let initial: Vec<f64> = set
        .self_intersection
        .iter()
        .map(|r| r.violation(gmm))
        .collect();
    order.sort_by(|&a, &b| initial[b].total_cmp(&initial[a]).then(a.cmp(&b)));

    // The set with the first `k` rows of `order` removed.
    let without_first = |k: usize| {
        let mut keep = vec![true; set.self_intersection.len()];
        for &i in &order[..k] {
            keep[i] = false;
        }
        ConstraintSet {
            self_intersection: set
                .self_intersection
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(r, _)| *r)
                .collect(),
            ..set.clone()
        }
    };
    let finish = |k: usize, active: &ConstraintSet, points: Vec<Vec3>| {
        let max_violation = active.max_violation(&points);
        let objective = gmm
            .iter()
            .zip(&points)
            .map(|(g, p)| (p - g).norm_squared())
            .sum();
        let status = if k == 0 {
            ProjectionStatus::Optimal
        } else {
            ProjectionStatus::Relaxed
        };
        ProjectionResult {
            points,
            objective,
            max_violation,
            status,
            dropped: order[..k]
                .iter()
                .map(|&i| set.self_intersection[i])
                .collect(),
        }
    };

    if let Some(points) = solve_once(gmm, set) {
        return Ok(finish(0, set, points));
    }

    // Dropping rows one at a time and stopping at the first feasible set is
    // the same as finding the smallest feasible `k`, and feasibility only
    // improves as `k` grows, so gallop then bisect.
    let n = order.len();
    let mut bad = 0;
    let mut step = 1;
    let mut found = None;
    while bad < n {
        let k = (bad + step).min(n);
        let active = without_first(k);
        match solve_once(gmm, &active) {
            Some(points) => {
                found = Some((k, active, points));
                break;
            }
            None => {
                bad = k;
                step *= 2;
            }
        }
    }
    if let Some((mut good, mut best_set, mut best)) = found {
        while good - bad > 1 {
            let k = bad + (good - bad) / 2;
            let active = without_first(k);
            match solve_once(gmm, &active) {
                Some(points) => {
                    good = k;
                    best_set = active;
                    best = points;
                }
                None => bad = k,
            }
        }
        warn!("projection infeasible; dropped {good} of {n} self-intersection rows");
        return Ok(finish(good, &best_set, best));
    }

    warn!("projection failed even without self-intersection rows; keeping the EM estimate");
    Ok(ProjectionResult {
        points: gmm.to_vec(),
        objective: 0.0,
        max_violation: set.max_violation(gmm),
        status: ProjectionStatus::Failed,
        dropped: order.iter().map(|&i| set.self_intersection[i]).collect(),
    })
}

/// One conic solve; `None` if the solver does not reach a point within
/// [`FEASIBILITY_TOL`].
fn solve_once(gmm: &[Vec3], set: &ConstraintSet) -> Option<Vec<Vec3>> {
    let n = 3 * gmm.len();
    let p_mat =
        CscMatrix::new_from_triplets(n, n, (0..n).collect(), (0..n).collect(), vec![2.0; n]);
    let q: Vec<f64> = gmm
        .iter()
        .flat_map(|p| p.iter().map(|v| -2.0 * v))
        .collect();

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut push = |r: usize, node: usize, coeff: Vec3| {
        for k in 0..3 {
            if coeff[k] != 0.0 {
                rows.push(r);
                cols.push(3 * node + k);
                vals.push(coeff[k]);
            }
        }
    };

    let mut cones = Vec::new();
    // equalities: x = target
    for c in &set.correspondence {
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = 1.0;
            push(b.len(), c.node, e);
            b.push(c.target[k]);
        }
    }
    if !set.correspondence.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(3 * set.correspondence.len()));
    }

    // a.x >= c  becomes  -a.x + s = -c, s >= 0
    let linear = set.self_intersection.len() + set.obstacle.len();
    for r in &set.self_intersection {
        let row = b.len();
        push(row, r.edge_i.0, -r.normal * r.r_i);
        push(row, r.edge_i.1, -r.normal * (1.0 - r.r_i));
        push(row, r.edge_j.0, r.normal * r.r_j);
        push(row, r.edge_j.1, r.normal * (1.0 - r.r_j));
        b.push(-r.margin);
    }
    for r in &set.obstacle {
        push(b.len(), r.node, -r.normal);
        b.push(-(r.normal.dot(&r.point) + r.margin));
    }
    if linear > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(linear));
    }

    // (bound, p_i - p_j) in the second-order cone
    for r in &set.stretch {
        b.push(r.bound);
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = 1.0;
            let row = b.len();
            push(row, r.i, -e);
            push(row, r.j, e);
            b.push(0.0);
        }
        cones.push(SupportedConeT::SecondOrderConeT(4));
    }

    let a_mat = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
    let settings = DefaultSettings {
        verbose: false,
        max_iter: 500,
        tol_gap_abs: 1e-10,
        tol_gap_rel: 1e-10,
        tol_feas: 1e-10,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        _ => return None,
    }
    let x = &solver.solution.x;
    let points: Vec<Vec3> = (0..gmm.len())
        .map(|m| Vec3::new(x[3 * m], x[3 * m + 1], x[3 * m + 2]))
        .collect();
    if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
        return None;
    }
    (set.max_violation(&points) <= FEASIBILITY_TOL).then_some(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{CorrespondenceRow, ObstacleRow, StretchRow};

    #[test]
    fn feasible_input_is_unchanged() {
        let p = vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)];
        let set = ConstraintSet {
            stretch: vec![StretchRow {
                i: 0,
                j: 1,
                bound: 0.11,
            }],
            ..Default::default()
        };
        let r = solve_projection(&p, &set).unwrap();
        assert_eq!(r.points, p);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.status, ProjectionStatus::Optimal);
    }

    #[test]
    fn overstretched_pair_contracts_symmetrically() {
        let p = vec![Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0)];
        let set = ConstraintSet {
            stretch: vec![StretchRow {
                i: 0,
                j: 1,
                bound: 0.11,
            }],
            ..Default::default()
        };
        let r = solve_projection(&p, &set).unwrap();
        assert!((r.points[0].x - 0.095).abs() < 1e-7, "{:?}", r.points);
        assert!((r.points[1].x - 0.205).abs() < 1e-7);
        assert!((r.objective - 2.0 * 0.095f64.powi(2)).abs() < 1e-7);
    }

    #[test]
    fn correspondence_and_obstacle_rows() {
        let p = vec![Vec3::new(0.0, 0.0, -0.05), Vec3::new(0.5, 0.5, 0.5)];
        let set = ConstraintSet {
            correspondence: vec![CorrespondenceRow {
                node: 1,
                target: Vec3::new(1.0, 2.0, 3.0),
            }],
            obstacle: vec![ObstacleRow {
                node: 0,
                point: Vec3::zeros(),
                normal: Vec3::z(),
                margin: 0.0,
            }],
            ..Default::default()
        };
        let r = solve_projection(&p, &set).unwrap();
        assert!((r.points[1] - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-8);
        assert!(r.points[0].z > -1e-8 && r.points[0].z < 1e-6);
        assert!(r.max_violation <= FEASIBILITY_TOL);
    }

    #[test]
    fn infeasible_set_fails_and_returns_input() {
        let p = vec![Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0)];
        let set = ConstraintSet {
            stretch: vec![StretchRow {
                i: 0,
                j: 1,
                bound: 0.1,
            }],
            correspondence: vec![
                CorrespondenceRow {
                    node: 0,
                    target: Vec3::zeros(),
                },
                CorrespondenceRow {
                    node: 1,
                    target: Vec3::new(0.3, 0.0, 0.0),
                },
            ],
            ..Default::default()
        };
        let r = solve_projection(&p, &set).unwrap();
        assert_eq!(r.status, ProjectionStatus::Failed);
        assert_eq!(r.points, p);
    }

    #[test]
    fn conflicting_gap_row_is_dropped() {
        // Two pinned crossing edges 1 mm apart cannot satisfy a 1 cm gap.
        let p = vec![
            Vec3::new(0.0, -0.1, 0.001),
            Vec3::new(0.0, 0.1, 0.001),
            Vec3::new(-0.1, 0.0, 0.0),
            Vec3::new(0.1, 0.0, 0.0),
        ];
        let pins = p
            .iter()
            .enumerate()
            .map(|(node, &target)| CorrespondenceRow { node, target })
            .collect();
        let si = crate::constraints::gen_self_intersection_constraints(
            &p,
            &[(0, 1), (2, 3)],
            0.02,
            0.01,
        )
        .unwrap()
        .rows;
        let set = ConstraintSet {
            correspondence: pins,
            self_intersection: si,
            ..Default::default()
        };
        let r = solve_projection(&p, &set).unwrap();
        assert_eq!(r.status, ProjectionStatus::Relaxed);
        assert_eq!(r.dropped.len(), 1);
    }

    #[test]
    fn ladder_drops_exactly_the_conflicting_rows() {
        // Three pinned crossings 1 mm apart conflict with a 1 cm gap; two
        // free crossings 5 mm apart can be pushed open.
        let mut p = Vec::new();
        let mut edges = Vec::new();
        for (k, gap) in [0.001, 0.005, 0.001, 0.005, 0.001].into_iter().enumerate() {
            let x = k as f64;
            let base = p.len();
            p.push(Vec3::new(x, -0.1, gap));
            p.push(Vec3::new(x, 0.1, gap));
            p.push(Vec3::new(x - 0.1, 0.0, 0.0));
            p.push(Vec3::new(x + 0.1, 0.0, 0.0));
            edges.push((base, base + 1));
            edges.push((base + 2, base + 3));
        }
        let pins = [0, 2, 4]
            .iter()
            .flat_map(|&k| {
                (4 * k..4 * k + 4).map(|node| CorrespondenceRow {
                    node,
                    target: p[node],
                })
            })
            .collect();
        let si = crate::constraints::gen_self_intersection_constraints(&p, &edges, 0.02, 0.01)
            .unwrap()
            .rows;
        assert_eq!(si.len(), 5);
        let set = ConstraintSet {
            correspondence: pins,
            self_intersection: si,
            ..Default::default()
        };
        let r = solve_projection(&p, &set).unwrap();
        assert_eq!(r.status, ProjectionStatus::Relaxed);
        assert_eq!(r.dropped.len(), 3);
        assert!(r
            .dropped
            .iter()
            .all(|row| [0, 8, 16].contains(&row.edge_i.0)));
        assert!(r.max_violation <= FEASIBILITY_TOL);
    }

    #[test]
    fn bad_node_index_is_rejected() {
        let set = ConstraintSet {
            stretch: vec![StretchRow {
                i: 0,
                j: 5,
                bound: 1.0,
            }],
            ..Default::default()
        };
        assert!(solve_projection(&[Vec3::zeros()], &set).is_err());
    }
}
