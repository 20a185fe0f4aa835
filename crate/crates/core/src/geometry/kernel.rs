use log::warn;
use nalgebra::DMatrix;

use crate::{Result, TrackError};

/// Relative eigenvalue below which the kernel is repaired.
const PSD_TOLERANCE: f64 = 1e-10;

/// Gaussian motion-coherence kernel `G_ij = exp(-rho_ij^2 / (2 beta^2))`.
///
/// Built once from the template geodesics and held fixed for the run.
/// Graph geodesics are not Euclidean in general (a grid gives Manhattan
/// distances) and the Gaussian of such a metric can be indefinite, which
/// would make the coherence penalty unbounded below. In that case the
/// matrix is replaced by its nearest positive-semidefinite neighbor
/// (negative eigenvalues clipped) rescaled back to a unit diagonal. Chains
/// and trees never need this.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    repaired: bool,
}

impl KernelMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Whether the raw Gaussian matrix was indefinite and got repaired.
    pub fn repaired(&self) -> bool {
        self.repaired
    }
}

/// Nearest PSD matrix by eigenvalue clipping, rescaled to unit diagonal.
/// `None` if `g` is already PSD within tolerance.
fn repair_psd(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min >= -PSD_TOLERANCE * max.max(1.0) {
        return None;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let scale: Vec<f64> = out.diagonal().iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = out.nrows();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= scale[i] * scale[j];
        }
    }
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    warn!("geodesic kernel was indefinite (smallest eigenvalue {min:.3e}); using its nearest PSD repair");
    Some(out)
}

pub fn build_gaussian_kernel(geodesic: &DMatrix<f64>, beta: f64) -> Result<KernelMatrix> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(TrackError::param(
            "beta",
            format!("must be positive, got {beta}"),
        ));
    }
    if geodesic.nrows() != geodesic.ncols() {
        return Err(TrackError::DimensionMismatch(format!(
            "geodesic matrix is {}x{}",
            geodesic.nrows(),
            geodesic.ncols()
        )));
    }
    let denom = 2.0 * beta * beta;
    let raw = geodesic.map(|rho| (-(rho * rho) / denom).exp());
    Ok(match repair_psd(&raw) {
        Some(values) => KernelMatrix {
            values,
            repaired: true,
        },
        None => KernelMatrix {
            values: raw,
            repaired: false,
        },
    })
}
