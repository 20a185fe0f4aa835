use nalgebra::{DMatrix, DVector};

use crate::{Result, TrackError, Vec3};

/// Tikhonov factor applied to the local Gram matrix, relative to its trace.
pub const LLE_REGULARIZATION: f64 = 1e-3;

/// Locally linear reconstruction weights: row `m` reconstructs node `m` from
/// its `k` nearest neighbors with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LleWeights {
    weights: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    residuals: Vec<f64>,
}

impl LleWeights {
    /// Wraps a precomputed `M x M` weight matrix. Neighbors are the nonzero
    /// entries of each row.
    pub fn from_weights(points: &[Vec3], weights: DMatrix<f64>) -> Result<Self> {
        let m = points.len();
        if weights.nrows() != m || weights.ncols() != m {
            return Err(TrackError::DimensionMismatch(format!(
                "weights {}x{} for {m} points",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if !weights.iter().all(|v| v.is_finite()) {
            return Err(TrackError::NonFinite("LLE weights"));
        }
        let neighbors = (0..m)
            .map(|r| (0..m).filter(|&c| weights[(r, c)] != 0.0).collect())
            .collect();
        let residuals = (0..m)
            .map(|r| {
                let recon: Vec3 = (0..m).map(|c| points[c] * weights[(r, c)]).sum();
                (points[r] - recon).norm()
            })
            .collect();
        Ok(Self {
            weights,
            neighbors,
            residuals,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Neighbor indices of each node, nearest first.
    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// `||p_m - sum_i L_mi p_i||` per node.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// `H = (I - L)^T (I - L)`.
    pub fn laplacian_penalty(&self) -> DMatrix<f64> {
        let m = self.weights.nrows();
        let i_minus_l = DMatrix::identity(m, m) - &self.weights;
        i_minus_l.transpose() * i_minus_l
    }
}

/// Solves the sum-to-one constrained reconstruction per node.
///
/// The local Gram matrix is always regularized by `1e-3 * trace`: any
/// neighborhood with more than three neighbors in 3-D is rank deficient.
pub fn compute_lle_weights(points: &[Vec3], k: usize) -> Result<LleWeights> {
    let m = points.len();
    if k < 1 {
        return Err(TrackError::param("k_lle_neighbors", "must be at least 1"));
    }
    if m <= k {
        return Err(TrackError::param(
            "k_lle_neighbors",
            format!("need more than k={k} points, got {m}"),
        ));
    }

    let mut weights = DMatrix::zeros(m, m);
    let mut neighbors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (row, p) in points.iter().enumerate() {
        let nbrs = nearest_neighbors(points, row, k);
        let local = solve_local(points, *p, &nbrs);
        let mut recon = Vec3::zeros();
        for (&j, &wj) in nbrs.iter().zip(local.iter()) {
            weights[(row, j)] = wj;
            recon += points[j] * wj;
        }
        residuals.push((p - recon).norm());
        neighbors.push(nbrs);
    }
    Ok(LleWeights {
        weights,
        neighbors,
        residuals,
    })
}

fn nearest_neighbors(points: &[Vec3], center: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != center)
        .map(|(i, q)| ((q - points[center]).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, i)| i).collect()
}

fn solve_local(points: &[Vec3], p: Vec3, nbrs: &[usize]) -> DVector<f64> {
    let k = nbrs.len();
    let diffs: Vec<Vec3> = nbrs.iter().map(|&j| points[j] - p).collect();
    let mut gram = DMatrix::from_fn(k, k, |a, b| diffs[a].dot(&diffs[b]));
    let reg = LLE_REGULARIZATION * gram.trace();
    // coincident neighbors give a zero trace
    let reg = if reg > 0.0 { reg } else { LLE_REGULARIZATION };
    for i in 0..k {
        gram[(i, i)] += reg;
    }
    let ones = DVector::from_element(k, 1.0);
    let w = gram
        .cholesky()
        .map(|c| c.solve(&ones))
        .unwrap_or_else(|| ones.clone());
    let total = w.sum();
    w / total
}
