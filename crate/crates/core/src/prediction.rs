//! Geometric motion models producing a predicted configuration from the
//! previous estimate and the gripper motion.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::constraints::ObstacleSet;
use crate::{Result, TrackError, Vec3};

/// One gripper: pose, twist and the template nodes it holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    /// Gripper-to-world rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    /// `[v_x, v_y, v_z, w_x, w_y, w_z]` in m/s and rad/s, world frame.
    pub velocity: [f64; 6],
    pub grasped: Vec<usize>,
    /// Position of each grasped node in the gripper frame. Empty means all
    /// grasped nodes sit at the gripper origin.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grasp_offsets: Vec<[f64; 3]>,
}

impl GripperState {
    /// Identity-oriented gripper at `position`.
    pub fn at(position: Vec3, velocity: [f64; 6], grasped: Vec<usize>) -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [position.x, position.y, position.z],
            velocity,
            grasped,
            grasp_offsets: Vec::new(),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    pub fn linear_velocity(&self) -> Vec3 {
        Vec3::new(self.velocity[0], self.velocity[1], self.velocity[2])
    }

    pub fn angular_velocity(&self) -> Vec3 {
        Vec3::new(self.velocity[3], self.velocity[4], self.velocity[5])
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.grasped.is_empty() {
            return Err(TrackError::param(
                "grippers",
                "a gripper must grasp at least one node",
            ));
        }
        if let Some(&bad) = self.grasped.iter().find(|&&i| i >= num_nodes) {
            return Err(TrackError::param(
                "grippers",
                format!("grasped node {bad} outside [0, {num_nodes})"),
            ));
        }
        if !self.grasp_offsets.is_empty() && self.grasp_offsets.len() != self.grasped.len() {
            return Err(TrackError::param(
                "grippers",
                "grasp_offsets must match grasped nodes",
            ));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).amax();
        if err > 1e-6 || r.determinant() < 0.0 {
            return Err(TrackError::param("grippers", "rotation is not orthonormal"));
        }
        let finite = self
            .translation
            .iter()
            .chain(self.velocity.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(TrackError::NonFinite("gripper state"));
        }
        Ok(())
    }

    /// World-space target of each grasped node.
    pub fn grasp_targets(&self) -> Vec<(usize, Vec3)> {
        let r = self.rotation_matrix();
        let t = self.position();
        self.grasped
            .iter()
            .enumerate()
            .map(|(k, &node)| {
                let offset = self
                    .grasp_offsets
                    .get(k)
                    .map(|o| Vec3::from(*o))
                    .unwrap_or_default();
                (node, t + r * offset)
            })
            .collect()
    }
}

/// Which motion model feeds the prediction regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// No prediction term at all.
    None,
    NoMotion,
    DiminishingRigidity,
}

impl ModelId {
    pub const ALL: [ModelId; 3] = [
        ModelId::None,
        ModelId::NoMotion,
        ModelId::DiminishingRigidity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::None => "none",
            ModelId::NoMotion => "no_motion",
            ModelId::DiminishingRigidity => "diminishing_rigidity",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = TrackError;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                TrackError::param(
                    "model",
                    format!("unknown model `{s}` (none | no_motion | diminishing_rigidity)"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub points: Vec<Vec3>,
    pub model: ModelId,
}

/// Anything mapping the previous estimate and gripper motion to a
/// predicted configuration.
pub trait MotionModel: Send + Sync {
    fn id(&self) -> ModelId;

    fn predict(
        &self,
        prev: &[Vec3],
        grippers: &[GripperState],
        obstacles: &ObstacleSet,
        dt: f64,
    ) -> Result<Prediction>;
}

pub fn predict_no_motion(prev: &[Vec3]) -> Prediction {
    Prediction {
        points: prev.to_vec(),
        model: ModelId::NoMotion,
    }
}

/// Rigid gripper motion attenuated by `exp(-k * rho)`, where `rho` is the
/// geodesic distance from the node to the nearest node held by a gripper.
/// Each node follows only its nearest gripper. Without grippers the
/// prediction is the previous configuration.
pub fn predict_diminishing_rigidity(
    prev: &[Vec3],
    geodesic: &DMatrix<f64>,
    grippers: &[GripperState],
    dt: f64,
    k: f64,
) -> Result<Prediction> {
    let m = prev.len();
    if geodesic.nrows() != m || geodesic.ncols() != m {
        return Err(TrackError::DimensionMismatch(format!(
            "geodesic matrix {}x{} for {m} nodes",
            geodesic.nrows(),
            geodesic.ncols()
        )));
    }
    if dt <= 0.0 || !dt.is_finite() {
        return Err(TrackError::param(
            "dt",
            format!("must be positive, got {dt}"),
        ));
    }
    if grippers.is_empty() {
        return Ok(Prediction {
            points: prev.to_vec(),
            model: ModelId::DiminishingRigidity,
        });
    }
    for g in grippers {
        g.validate(m)?;
    }

    let points = prev
        .iter()
        .enumerate()
        .map(|(node, p)| {
            let (gripper, rho) = grippers
                .iter()
                .map(|g| {
                    let rho = g
                        .grasped
                        .iter()
                        .map(|&c| geodesic[(node, c)])
                        .fold(f64::INFINITY, f64::min);
                    (g, rho)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one gripper");
            let twist = gripper.linear_velocity()
                + gripper.angular_velocity().cross(&(p - gripper.position()));
            p + twist * ((-k * rho).exp() * dt)
        })
        .collect();
    Ok(Prediction {
        points,
        model: ModelId::DiminishingRigidity,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoMotion;

impl MotionModel for NoMotion {
    fn id(&self) -> ModelId {
        ModelId::NoMotion
    }

    fn predict(
        &self,
        prev: &[Vec3],
        _: &[GripperState],
        _: &ObstacleSet,
        _: f64,
    ) -> Result<Prediction> {
        Ok(predict_no_motion(prev))
    }
}

#[derive(Debug, Clone)]
pub struct DiminishingRigidity {
    pub geodesic: DMatrix<f64>,
    pub k: f64,
}

impl MotionModel for DiminishingRigidity {
    fn id(&self) -> ModelId {
        ModelId::DiminishingRigidity
    }

    fn predict(
        &self,
        prev: &[Vec3],
        grippers: &[GripperState],
        _: &ObstacleSet,
        dt: f64,
    ) -> Result<Prediction> {
        predict_diminishing_rigidity(prev, &self.geodesic, grippers, dt, self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DeformableTemplate;

    fn rope() -> DeformableTemplate {
        DeformableTemplate::rope(6, Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn no_motion_is_identity() {
        let t = rope();
        let mut p = t.points().to_vec();
        for _ in 0..5 {
            p = predict_no_motion(&p).points;
        }
        assert_eq!(p, t.points());
    }

    #[test]
    fn grasped_node_moves_with_gripper() {
        let t = rope();
        let g = GripperState::at(t.points()[0], [0.1, -0.2, 0.05, 0.0, 0.0, 0.0], vec![0]);
        let pred = predict_diminishing_rigidity(t.points(), t.geodesic(), &[g], 0.5, 10.0).unwrap();
        let moved = pred.points[0] - t.points()[0];
        assert!((moved - Vec3::new(0.05, -0.1, 0.025)).norm() < 1e-15);
    }

    #[test]
    fn zero_velocity_changes_nothing() {
        let t = rope();
        let g = GripperState::at(t.points()[0], [0.0; 6], vec![0]);
        let pred = predict_diminishing_rigidity(t.points(), t.geodesic(), &[g], 0.1, 10.0).unwrap();
        assert_eq!(pred.points, t.points());
    }

    #[test]
    fn huge_decay_moves_only_grasped_nodes() {
        let t = rope();
        let g = GripperState::at(t.points()[2], [0.3, 0.3, 0.0, 0.0, 0.0, 1.0], vec![2]);
        let pred = predict_diminishing_rigidity(t.points(), t.geodesic(), &[g], 0.1, 1e6).unwrap();
        for (i, (a, b)) in pred.points.iter().zip(t.points()).enumerate() {
            if i == 2 {
                assert!((a - b).norm() > 1e-3);
            } else {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn displacement_decays_along_the_rope() {
        let t = rope();
        let g = GripperState::at(t.points()[0], [0.0, 0.2, 0.0, 0.0, 0.0, 0.0], vec![0]);
        let pred = predict_diminishing_rigidity(t.points(), t.geodesic(), &[g], 0.1, 10.0).unwrap();
        let mags: Vec<f64> = pred
            .points
            .iter()
            .zip(t.points())
            .map(|(a, b)| (a - b).norm())
            .collect();
        assert!(mags.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn no_grippers_falls_back_to_no_motion() {
        let t = rope();
        let pred = predict_diminishing_rigidity(t.points(), t.geodesic(), &[], 0.1, 10.0).unwrap();
        assert_eq!(pred.points, t.points());
    }

    #[test]
    fn invalid_grasp_index_is_rejected() {
        let t = rope();
        let g = GripperState::at(Vec3::zeros(), [0.0; 6], vec![42]);
        assert!(predict_diminishing_rigidity(t.points(), t.geodesic(), &[g], 0.1, 10.0).is_err());
    }

    #[test]
    fn model_ids_parse() {
        for m in ModelId::ALL {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
        }
        assert!("physics".parse::<ModelId>().is_err());
    }
}
