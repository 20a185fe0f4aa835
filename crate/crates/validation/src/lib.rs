//! Slow reference implementations used to check the tracker.
//!
//! Nothing here is fast or clever on purpose: each oracle computes its
//! quantity a different way from the library so that agreement means
//! something.

use deftrack::constraints::ConstraintSet;
use deftrack::Vec3;
use nalgebra::DMatrix;

/// Inputs of the regularized M-step cost.
pub struct MStepProblem<'a> {
    pub prev: &'a DMatrix<f64>,
    pub cloud: &'a DMatrix<f64>,
    /// Responsibilities, `M x N`.
    pub x: &'a DMatrix<f64>,
    pub g: &'a DMatrix<f64>,
    /// LLE weights, not the penalty matrix.
    pub l: &'a DMatrix<f64>,
    pub sigma2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub predicted: Option<&'a DMatrix<f64>>,
}

impl MStepProblem<'_> {
    /// The cost as a sum of its terms, with `Y = P + G W`:
    /// data fit `sum X_mn |d_n - y_m|^2 / (2 s2)`, coherence
    /// `alpha/2 tr(W^T G W)`, shape `gamma/2 |(I - L) Y|^2` and
    /// prediction `zeta/2 |Y - P_pred|^2`.
    pub fn cost(&self, w: &DMatrix<f64>) -> f64 {
        let y = self.prev + self.g * w;
        let mut data = 0.0;
        for m in 0..y.nrows() {
            for n in 0..self.cloud.nrows() {
                let mut sq = 0.0;
                for c in 0..3 {
                    let d = self.cloud[(n, c)] - y[(m, c)];
                    sq += d * d;
                }
                data += self.x[(m, n)] * sq;
            }
        }
        data /= 2.0 * self.sigma2;
        let coherence = 0.5 * self.alpha * (w.transpose() * self.g * w).trace();
        let eye = DMatrix::<f64>::identity(y.nrows(), y.nrows());
        let shape = 0.5 * self.gamma * ((&eye - self.l) * &y).norm_squared();
        let pred = self
            .predicted
            .map_or(0.0, |p| 0.5 * self.zeta * (&y - p).norm_squared());
        data + coherence + shape + pred
    }

    /// Central differences of [`cost`](Self::cost) in every entry of `w`.
    pub fn numeric_gradient(&self, w: &DMatrix<f64>, step: f64) -> DMatrix<f64> {
        let mut grad = DMatrix::zeros(w.nrows(), w.ncols());
        let mut probe = w.clone();
        for r in 0..w.nrows() {
            for c in 0..w.ncols() {
                let orig = probe[(r, c)];
                probe[(r, c)] = orig + step;
                let up = self.cost(&probe);
                probe[(r, c)] = orig - step;
                let down = self.cost(&probe);
                probe[(r, c)] = orig;
                grad[(r, c)] = (up - down) / (2.0 * step);
            }
        }
        grad
    }
}

/// Distance between two segments by grid search over both parameters,
/// refined by repeatedly zooming the grid around the best cell.
pub fn brute_force_segment_distance(
    a0: &Vec3,
    a1: &Vec3,
    b0: &Vec3,
    b1: &Vec3,
    grid: usize,
) -> f64 {
    let eval = |r: f64, q: f64| ((a0 * r + a1 * (1.0 - r)) - (b0 * q + b1 * (1.0 - q))).norm();
    let (mut lo_r, mut hi_r, mut lo_q, mut hi_q) = (0.0, 1.0, 0.0, 1.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..40 {
        let step_r = (hi_r - lo_r) / (grid - 1) as f64;
        let step_q = (hi_q - lo_q) / (grid - 1) as f64;
        for a in 0..grid {
            let r = lo_r + step_r * a as f64;
            for b in 0..grid {
                let q = lo_q + step_q * b as f64;
                let d = eval(r, q);
                if d < best.0 {
                    best = (d, r, q);
                }
            }
        }
        lo_r = (best.1 - 2.0 * step_r).max(0.0);
        hi_r = (best.1 + 2.0 * step_r).min(1.0);
        lo_q = (best.2 - 2.0 * step_q).max(0.0);
        hi_q = (best.2 + 2.0 * step_q).min(1.0);
        if step_r.max(step_q) < 1e-13 {
            break;
        }
    }
    best.0
}

/// Grid-only brute force, without refinement.
pub fn grid_segment_distance(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3, grid: usize) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..grid {
        let r = a as f64 / (grid - 1) as f64;
        let pa = a0 * r + a1 * (1.0 - r);
        for b in 0..grid {
            let q = b as f64 / (grid - 1) as f64;
            best = best.min((pa - (b0 * q + b1 * (1.0 - q))).norm());
        }
    }
    best
}

/// One convex piece of the feasible set, acting on a handful of nodes.
enum Piece {
    /// `|p_i - p_j| <= bound`
    Ball { i: usize, j: usize, bound: f64 },
    /// `sum_k c_k p_{n_k} . normal >= rhs`
    HalfSpace {
        nodes: Vec<(usize, f64)>,
        normal: Vec3,
        rhs: f64,
    },
    /// `p_node = target`
    Pin { node: usize, target: Vec3 },
}

impl Piece {
    fn nodes(&self) -> Vec<usize> {
        match self {
            Piece::Ball { i, j, .. } => vec![*i, *j],
            Piece::HalfSpace { nodes, .. } => nodes.iter().map(|n| n.0).collect(),
            Piece::Pin { node, .. } => vec![*node],
        }
    }

    /// Euclidean projection of the listed node positions.
    fn project(&self, local: &mut [Vec3]) {
        match self {
            Piece::Ball { bound, .. } => {
                let d = local[0] - local[1];
                let len = d.norm();
                if len > *bound {
                    let mid = (local[0] + local[1]) * 0.5;
                    let half = d * (0.5 * bound / len);
                    local[0] = mid + half;
                    local[1] = mid - half;
                }
            }
            Piece::HalfSpace { nodes, normal, rhs } => {
                let value: f64 = nodes
                    .iter()
                    .zip(local.iter())
                    .map(|((_, c), p)| c * p.dot(normal))
                    .sum();
                if value < *rhs {
                    let norm_sq: f64 =
                        nodes.iter().map(|(_, c)| c * c).sum::<f64>() * normal.norm_squared();
                    let t = (rhs - value) / norm_sq;
                    for ((_, c), p) in nodes.iter().zip(local.iter_mut()) {
                        *p += normal * (t * c);
                    }
                }
            }
            Piece::Pin { target, .. } => local[0] = *target,
        }
    }
}

fn pieces(set: &ConstraintSet) -> Vec<Piece> {
    let mut out = Vec::new();
    for r in &set.stretch {
        out.push(Piece::Ball {
            i: r.i,
            j: r.j,
            bound: r.bound,
        });
    }
    for r in &set.correspondence {
        out.push(Piece::Pin {
            node: r.node,
            target: r.target,
        });
    }
    for r in &set.self_intersection {
        out.push(Piece::HalfSpace {
            nodes: vec![
                (r.edge_i.0, r.r_i),
                (r.edge_i.1, 1.0 - r.r_i),
                (r.edge_j.0, -r.r_j),
                (r.edge_j.1, -(1.0 - r.r_j)),
            ],
            normal: r.normal,
            rhs: r.margin,
        });
    }
    for r in &set.obstacle {
        out.push(Piece::HalfSpace {
            nodes: vec![(r.node, 1.0)],
            normal: r.normal,
            rhs: r.margin + r.point.dot(&r.normal),
        });
    }
    out
}

/// Projection onto the intersection of the constraint pieces by Dykstra's
/// alternating projections. Runs until a full sweep moves no coordinate by
/// more than `tol` or `max_sweeps` is reached.
pub fn dykstra_projection(
    start: &[Vec3],
    set: &ConstraintSet,
    tol: f64,
    max_sweeps: usize,
) -> Vec<Vec3> {
    let pieces = pieces(set);
    let node_lists: Vec<Vec<usize>> = pieces.iter().map(Piece::nodes).collect();
    let mut corrections: Vec<Vec<Vec3>> = node_lists
        .iter()
        .map(|n| vec![Vec3::zeros(); n.len()])
        .collect();
    let mut x = start.to_vec();
    let mut local = Vec::new();
    for _ in 0..max_sweeps {
        let mut moved: f64 = 0.0;
        for (k, piece) in pieces.iter().enumerate() {
            local.clear();
            local.extend(
                node_lists[k]
                    .iter()
                    .zip(&corrections[k])
                    .map(|(&n, y)| x[n] + y),
            );
            let before = local.clone();
            piece.project(&mut local);
            for (slot, &n) in node_lists[k].iter().enumerate() {
                corrections[k][slot] = before[slot] - local[slot];
                moved = moved.max((x[n] - local[slot]).amax());
                x[n] = local[slot];
            }
        }
        if moved < tol {
            break;
        }
    }
    x
}

/// All-pairs shortest paths over `edges` weighted by Euclidean length.
pub fn floyd_warshall(points: &[Vec3], edges: &[(usize, usize)]) -> DMatrix<f64> {
    let n = points.len();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for i in 0..n {
        d[(i, i)] = 0.0;
    }
    for &(i, j) in edges {
        let len = (points[i] - points[j]).norm();
        d[(i, j)] = d[(i, j)].min(len);
        d[(j, i)] = d[(j, i)].min(len);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[(i, k)] + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    d
}
