use log::warn;
use nalgebra::{DMatrix, DVector};

use super::TrackerParams;
use crate::geometry::{matrix_to_points, points_to_matrix, KernelMatrix, LleWeights};
use crate::{Result, TrackError, Vec3};

/// Lower clamp on the variance (m^2).
pub const SIGMA2_FLOOR: f64 = 1e-10;

const SINGULAR_RIDGE: f64 = 1e-9;

/// Responsibilities `X` (`M x N`) and the outlier share of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub x: DMatrix<f64>,
    pub outlier: DVector<f64>,
}

impl Posterior {
    /// `X 1`, the total responsibility of each node.
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.x.nrows(), self.x.row_iter().map(|r| r.sum()))
    }

    /// `N_P`, the total responsibility assigned to nodes.
    pub fn total(&self) -> f64 {
        self.x.sum()
    }
}

/// Static operators of the M-step: `G`, `H = (I - L)^T (I - L)` and `H G`.
#[derive(Debug, Clone)]
pub struct EmOperators {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub hg: DMatrix<f64>,
}

impl EmOperators {
    pub fn new(kernel: &KernelMatrix, lle: &LleWeights) -> Result<Self> {
        let g = kernel.values().clone();
        let h = lle.laplacian_penalty();
        if g.nrows() != h.nrows() {
            return Err(TrackError::DimensionMismatch(format!(
                "kernel is {}x{} but LLE weights are {}x{}",
                g.nrows(),
                g.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        let hg = &h * &g;
        Ok(Self { g, h, hg })
    }

    pub fn num_nodes(&self) -> usize {
        self.g.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerWeights {
    pub alpha: f64,
    pub gamma: f64,
    pub zeta: f64,
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TrackError::NonFinite(what))
    }
}

fn check_points(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.ncols() != 3 {
        return Err(TrackError::DimensionMismatch(format!(
            "{what} must have 3 columns"
        )));
    }
    check_finite(m, what)
}

/// Responsibilities of each node for each observed point.
///
/// `X_mn` is proportional to `prior_m * N(d_n | p_m, sigma2)` and the
/// outlier component has weight `w` and density `1 / N`. Columns are
/// normalized in log space.
pub fn e_step(
    points: &DMatrix<f64>,
    cloud: &DMatrix<f64>,
    sigma2: f64,
    w: f64,
    prior: &DVector<f64>,
) -> Result<Posterior> {
    check_points(points, "node positions")?;
    check_points(cloud, "point cloud")?;
    if sigma2 <= 0.0 || !sigma2.is_finite() {
        return Err(TrackError::param(
            "sigma2",
            format!("must be positive, got {sigma2}"),
        ));
    }
    let m = points.nrows();
    let n = cloud.nrows();
    if prior.len() != m {
        return Err(TrackError::DimensionMismatch(format!(
            "prior has {} entries for {m} nodes",
            prior.len()
        )));
    }

    let log_norm = -1.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln() + log_norm).collect();
    let log_outlier = if w > 0.0 {
        (w / n as f64).ln()
    } else {
        f64::NEG_INFINITY
    };
    let inv_two_sigma2 = 0.5 / sigma2;

    let mut x = DMatrix::zeros(m, n);
    let mut outlier = DVector::zeros(n);
    let mut logs = vec![0.0; m];
    for col in 0..n {
        let d = Vec3::new(cloud[(col, 0)], cloud[(col, 1)], cloud[(col, 2)]);
        let mut peak = log_outlier;
        for (row, slot) in logs.iter_mut().enumerate() {
            let p = Vec3::new(points[(row, 0)], points[(row, 1)], points[(row, 2)]);
            *slot = log_prior[row] - (d - p).norm_squared() * inv_two_sigma2;
            peak = peak.max(*slot);
        }
        if peak == f64::NEG_INFINITY {
            return Err(TrackError::EmptyResponsibilities);
        }
        let out = (log_outlier - peak).exp();
        let mut total = out;
        for (row, &l) in logs.iter().enumerate() {
            let v = (l - peak).exp();
            x[(row, col)] = v;
            total += v;
        }
        for row in 0..m {
            x[(row, col)] /= total;
        }
        outlier[col] = out / total;
    }
    Ok(Posterior { x, outlier })
}

/// Solves `A W = B` with
///
/// ```text
/// A = d(X1) G + a s2 I + g s2 H G + z s2 G
/// B = X D - (d(X1) + g s2 H) P_prev + z s2 (P_pred - P_prev)
/// ```
///
/// which is the stationarity condition of the regularized M-step cost
/// multiplied through by `sigma2` and with a common factor `G` removed.
/// Without a prediction the `zeta` terms vanish.
#[allow(clippy::too_many_arguments)]
pub fn m_step_solve_w(
    prev: &DMatrix<f64>,
    cloud: &DMatrix<f64>,
    posterior: &Posterior,
    ops: &EmOperators,
    sigma2: f64,
    weights: RegularizerWeights,
    predicted: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    check_points(prev, "previous nodes")?;
    check_points(cloud, "point cloud")?;
    check_finite(&posterior.x, "responsibilities")?;
    let m = prev.nrows();
    if ops.num_nodes() != m || posterior.x.nrows() != m || posterior.x.ncols() != cloud.nrows() {
        return Err(TrackError::DimensionMismatch(format!(
            "M-step with {m} nodes, kernel {}, responsibilities {}x{}, cloud {}",
            ops.num_nodes(),
            posterior.x.nrows(),
            posterior.x.ncols(),
            cloud.nrows()
        )));
    }
    if !sigma2.is_finite() {
        return Err(TrackError::NonFinite("sigma2"));
    }
    if let Some(pred) = predicted {
        check_points(pred, "predicted nodes")?;
        if pred.nrows() != m {
            return Err(TrackError::DimensionMismatch(format!(
                "prediction has {} nodes, expected {m}",
                pred.nrows()
            )));
        }
    }
    let zeta = if predicted.is_some() {
        weights.zeta
    } else {
        0.0
    };
    let x1 = posterior.row_sums();
    let ls2 = weights.gamma * sigma2;
    let zs2 = zeta * sigma2;

    let mut a = ops.g.clone();
    for (r, mut row) in a.row_iter_mut().enumerate() {
        row *= x1[r] + zs2;
    }
    a += &ops.hg * ls2;
    for i in 0..m {
        a[(i, i)] += weights.alpha * sigma2;
    }

    let mut b = &posterior.x * cloud;
    let mut scaled_prev = prev.clone();
    for (r, mut row) in scaled_prev.row_iter_mut().enumerate() {
        row *= x1[r];
    }
    b -= scaled_prev;
    b -= (&ops.h * prev) * ls2;
    if let Some(pred) = predicted.filter(|_| zs2 != 0.0) {
        b += (pred - prev) * zs2;
    }

    let solved = a
        .clone()
        .lu()
        .solve(&b)
        .filter(|w| w.iter().all(|v| v.is_finite()));
    match solved {
        Some(w) => Ok(w),
        None => {
            warn!("M-step system is singular; adding a {SINGULAR_RIDGE:e} ridge");
            for i in 0..m {
                a[(i, i)] += SINGULAR_RIDGE;
            }
            a.lu()
                .solve(&b)
                .filter(|w| w.iter().all(|v| v.is_finite()))
                .ok_or(TrackError::NonFinite("M-step solution"))
        }
    }
}

/// `sigma2 = 1/(3 N_P) * sum_mn X_mn ||d_n - (p_m + G(m,.) W)||^2`, clamped
/// below at [`SIGMA2_FLOOR`].
pub fn update_sigma2(
    prev: &DMatrix<f64>,
    cloud: &DMatrix<f64>,
    posterior: &Posterior,
    g: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<f64> {
    let np = posterior.total();
    if np <= 0.0 {
        return Err(TrackError::EmptyResponsibilities);
    }
    let moved = prev + g * w;
    let mut acc = 0.0;
    for n in 0..cloud.nrows() {
        let d = Vec3::new(cloud[(n, 0)], cloud[(n, 1)], cloud[(n, 2)]);
        for m in 0..moved.nrows() {
            let xmn = posterior.x[(m, n)];
            if xmn == 0.0 {
                continue;
            }
            let y = Vec3::new(moved[(m, 0)], moved[(m, 1)], moved[(m, 2)]);
            acc += xmn * (d - y).norm_squared();
        }
    }
    Ok((acc / (3.0 * np)).max(SIGMA2_FLOOR))
}

/// The same variance as [`update_sigma2`] (without the clamp), evaluated by
/// expanding the residual into traces:
///
/// ```text
/// tr(D^T d(X^T 1) D) - 2 tr(P^T X D) - 2 tr(W^T G^T X D)
///   + tr(P^T d(X1) P) + 2 tr(W^T G^T d(X1) P) + tr(W^T G^T d(X1) G W)
/// ```
pub fn sigma2_trace_form(
    prev: &DMatrix<f64>,
    cloud: &DMatrix<f64>,
    posterior: &Posterior,
    g: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<f64> {
    let np = posterior.total();
    if np <= 0.0 {
        return Err(TrackError::EmptyResponsibilities);
    }
    let x = &posterior.x;
    let x1 = posterior.row_sums();
    let xt1 = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum()));
    let xd = x * cloud;
    let gw = g * w;
    let row_weighted = |mat: &DMatrix<f64>, weights: &DVector<f64>| {
        let mut out = mat.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            row *= weights[r];
        }
        out
    };
    let dxp = row_weighted(prev, &x1);
    let t1 = cloud.dot(&row_weighted(cloud, &xt1));
    let t2 = prev.dot(&xd);
    let t3 = gw.dot(&xd);
    let t4 = prev.dot(&dxp);
    let t5 = gw.dot(&dxp);
    let t6 = gw.dot(&row_weighted(&gw, &x1));
    Ok((t1 - 2.0 * t2 - 2.0 * t3 + t4 + 2.0 * t5 + t6) / (3.0 * np))
}

/// Result of one EM registration.
#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    /// `P_prev + G W`, or the fallback for an empty cloud.
    pub points: Vec<Vec3>,
    pub w: DMatrix<f64>,
    pub sigma2: f64,
    /// Variance after initialization and after every iteration.
    pub sigma2_history: Vec<f64>,
    pub iterations: usize,
    /// `|delta sigma2| < em_tol` was reached before the iteration cap.
    pub converged: bool,
    /// The cloud was empty and the prediction (or `prev`) was returned.
    pub unobserved: bool,
}

/// Mean squared distance to the centroid, per coordinate.
fn point_set_variance(points: &DMatrix<f64>) -> f64 {
    let m = points.nrows();
    let mean = points.row_mean();
    let mut acc = 0.0;
    for r in 0..m {
        acc += (points.row(r) - &mean).norm_squared();
    }
    acc / (3.0 * m as f64)
}

fn cross_variance(points: &DMatrix<f64>, cloud: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for r in 0..points.nrows() {
        for n in 0..cloud.nrows() {
            acc += (points.row(r) - cloud.row(n)).norm_squared();
        }
    }
    acc / (3.0 * (points.nrows() * cloud.nrows()) as f64)
}

/// Alternates E- and M-steps until the variance settles.
///
/// `sigma2` starts at the variance of `prev` and `W` at zero. The loop stops
/// when `|sigma2 - sigma2_prev| < em_tol` or after `em_max_iter` iterations.
/// An empty cloud returns `predicted` (or `prev`) unchanged.
pub fn gmm_em(
    prev: &[Vec3],
    cloud: &[Vec3],
    ops: &EmOperators,
    prior: &DVector<f64>,
    params: &TrackerParams,
    predicted: Option<&[Vec3]>,
) -> Result<EmOutcome> {
    let m = prev.len();
    if ops.num_nodes() != m {
        return Err(TrackError::DimensionMismatch(format!(
            "{m} nodes but operators for {}",
            ops.num_nodes()
        )));
    }
    if cloud.is_empty() {
        return Ok(EmOutcome {
            points: predicted.unwrap_or(prev).to_vec(),
            w: DMatrix::zeros(m, 3),
            sigma2: 0.0,
            sigma2_history: Vec::new(),
            iterations: 0,
            converged: false,
            unobserved: true,
        });
    }

    let prev_m = points_to_matrix(prev);
    let cloud_m = points_to_matrix(cloud);
    let pred_m = predicted.map(points_to_matrix);
    let weights = RegularizerWeights {
        alpha: params.alpha,
        gamma: params.gamma,
        zeta: params.zeta,
    };

    let mut sigma2 = point_set_variance(&prev_m);
    if sigma2 <= SIGMA2_FLOOR {
        sigma2 = cross_variance(&prev_m, &cloud_m);
    }
    sigma2 = sigma2.max(SIGMA2_FLOOR);
    let mut history = vec![sigma2];
    let mut w = DMatrix::zeros(m, 3);
    let mut diff = params.em_tol + 1.0;
    let mut iterations = 0;
    while diff >= params.em_tol && iterations < params.em_max_iter {
        let current = &prev_m + &ops.g * &w;
        let posterior = e_step(&current, &cloud_m, sigma2, params.w, prior)?;
        if posterior.total() <= 0.0 {
            // every point underflowed onto the outlier term: nothing left to fit
            warn!("all responsibilities underflowed at sigma2 = {sigma2:e}; stopping EM early");
            break;
        }
        w = m_step_solve_w(
            &prev_m,
            &cloud_m,
            &posterior,
            ops,
            sigma2,
            weights,
            pred_m.as_ref(),
        )?;
        let old = sigma2;
        sigma2 = update_sigma2(&prev_m, &cloud_m, &posterior, &ops.g, &w)?;
        diff = (sigma2 - old).abs();
        history.push(sigma2);
        iterations += 1;
    }

    let result = &prev_m + &ops.g * &w;
    Ok(EmOutcome {
        points: matrix_to_points(&result),
        w,
        sigma2,
        sigma2_history: history,
        iterations,
        converged: diff < params.em_tol,
        unobserved: false,
    })
}
