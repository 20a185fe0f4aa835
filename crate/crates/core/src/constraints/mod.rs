//! Posterior constraints and the projection of the EM estimate onto them.
//!
//! Four row families are assembled per frame, all linearized at the
//! previous estimate so that the projection is a convex program:
//! stretch limits (second-order cones), grasp correspondences (equalities),
//! self-intersection gaps and obstacle half-spaces (linear inequalities).

mod generate;
mod mesh;
mod projection;

pub use generate::{
    gen_correspondence_constraints, gen_obstacle_constraints, gen_self_intersection_constraints,
    gen_stretch_constraints, ConstraintSet, CorrespondenceRow, ObstacleRow, SelfIntersectionRow,
    SelfIntersectionRows, StretchRow,
};
pub use mesh::{nearest_obstacle_point, MeshFeature, ObstacleHit, ObstacleSet, TriangleMesh};
pub use projection::{solve_projection, ProjectionResult, ProjectionStatus, FEASIBILITY_TOL};
