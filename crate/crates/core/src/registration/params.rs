use serde::{Deserialize, Serialize};

use crate::{Result, TrackError};

/// Every scalar the tracker uses. Lengths are in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Kernel width of the coherence kernel.
    pub beta: f64,
    /// Coherence regularizer weight.
    pub alpha: f64,
    /// LLE regularizer weight.
    pub gamma: f64,
    /// Prediction regularizer weight.
    pub zeta: f64,
    /// Outlier mixture weight.
    pub w: f64,
    /// Stretch limit factor on geodesic edge length.
    pub lambda: f64,
    /// Edge-pair detection radius for self-intersection rows.
    pub s_check: f64,
    /// Enforced inter-edge gap.
    pub s: f64,
    /// Depth-deficit sharpness of the visibility prior (1/m).
    pub k_vis: f64,
    pub k_lle_neighbors: usize,
    pub em_max_iter: usize,
    /// Stop when `|sigma2 - sigma2_prev|` drops below this (m^2).
    pub em_tol: f64,
    pub voxel_size: f64,
    /// Geodesic decay rate of the diminishing-rigidity model (1/m).
    pub k_rigidity: f64,
    /// Extra clearance on obstacle rows.
    pub obstacle_margin: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            alpha: 0.5,
            gamma: 1.0,
            zeta: 2.0,
            w: 0.1,
            lambda: 1.1,
            s_check: 0.02,
            s: 0.01,
            k_vis: 100.0,
            k_lle_neighbors: 8,
            em_max_iter: 100,
            em_tol: 1e-4,
            voxel_size: 0.02,
            k_rigidity: 10.0,
            obstacle_margin: 0.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("s_check", self.s_check),
            ("s", self.s),
            ("voxel_size", self.voxel_size),
            ("em_tol", self.em_tol),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(TrackError::param(
                    name,
                    format!("must be positive, got {v}"),
                ));
            }
        }
        let non_negative = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("zeta", self.zeta),
            ("k_vis", self.k_vis),
            ("k_rigidity", self.k_rigidity),
            ("obstacle_margin", self.obstacle_margin),
        ];
        for (name, v) in non_negative {
            if v < 0.0 || !v.is_finite() {
                return Err(TrackError::param(
                    name,
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(TrackError::param(
                "w",
                format!("must lie in (0, 1), got {}", self.w),
            ));
        }
        if self.lambda < 1.0 || !self.lambda.is_finite() {
            return Err(TrackError::param(
                "lambda",
                format!("must be >= 1, got {}", self.lambda),
            ));
        }
        if self.em_max_iter < 1 {
            return Err(TrackError::param("em_max_iter", "must be at least 1"));
        }
        if self.k_lle_neighbors < 1 {
            return Err(TrackError::param("k_lle_neighbors", "must be at least 1"));
        }
        if self.s >= self.s_check {
            return Err(TrackError::param(
                "s",
                format!(
                    "gap {} must be below the detection radius {}",
                    self.s, self.s_check
                ),
            ));
        }
        Ok(())
    }
}
