//! A square cloth lowered onto a horizontal cylinder.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{observe, render_static, render_triangles, sample_triangles, StaticGeometry};
use super::{Frame, SceneSequence};
use crate::camera::PinholeCamera;
use crate::constraints::{ObstacleSet, TriangleMesh};
use crate::geometry::DeformableTemplate;
use crate::{Result, TrackError, Vec3};

/// A finite solid cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    /// Midpoint of the axis.
    pub center: Vec3,
    /// Unit axis direction.
    pub axis: Vec3,
    pub radius: f64,
    pub length: f64,
}

impl Cylinder {
    /// Signed distance to the lateral surface, ignoring the caps.
    pub fn radial_distance(&self, p: &Vec3) -> f64 {
        let d = p - self.center;
        (d - self.axis * d.dot(&self.axis)).norm() - self.radius
    }

    /// Moves `p` radially onto the surface if it is inside.
    pub fn push_out(&self, p: &mut Vec3) {
        let d = *p - self.center;
        let along = d.dot(&self.axis);
        if along.abs() > self.length / 2.0 {
            return;
        }
        let radial = d - self.axis * along;
        let r = radial.norm();
        if r < self.radius && r > 1e-12 {
            *p = self.center + self.axis * along + radial * (self.radius / r);
        }
    }

    /// Tessellation with vertices on the surface, so the mesh lies inside
    /// the true cylinder.
    pub fn mesh(&self, segments: usize) -> Result<TriangleMesh> {
        TriangleMesh::cylinder(
            self.center - self.axis * (self.length / 2.0),
            self.axis,
            self.radius,
            self.length,
            segments,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClothDrapeConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub spacing: f64,
    pub cylinder: Cylinder,
    /// Initial height of the flat cloth.
    pub start_height: f64,
    /// Downward displacement applied to every node per frame.
    pub descent: f64,
    pub num_frames: usize,
    pub dt: f64,
    pub mesh_segments: usize,
    /// Constraint sweeps per frame.
    pub iterations: usize,
}

impl Default for ClothDrapeConfig {
    fn default() -> Self {
        Self {
            grid_w: 20,
            grid_h: 20,
            spacing: 0.04,
            cylinder: Cylinder {
                center: Vec3::new(0.0, 0.0, 0.3),
                axis: Vec3::y(),
                radius: 0.1,
                length: 0.8,
            },
            start_height: 0.45,
            descent: 0.01,
            num_frames: 40,
            dt: 0.1,
            mesh_segments: 48,
            iterations: 40,
        }
    }
}

fn cloth_triangles(points: &[Vec3], w: usize, h: usize) -> Vec<[Vec3; 3]> {
    let mut tris = Vec::with_capacity(2 * (w - 1) * (h - 1));
    for j in 0..h - 1 {
        for i in 0..w - 1 {
            let n = j * w + i;
            tris.push([points[n], points[n + 1], points[n + w]]);
            tris.push([points[n + 1], points[n + w + 1], points[n + w]]);
        }
    }
    tris
}

/// The cloth starts flat above the cylinder and sinks by `descent` per
/// frame. After each sink, edges longer than their rest length are
/// shortened and nodes are pushed radially out of the cylinder, so nodes in
/// contact sit exactly on its surface. No grippers act on the cloth.
pub fn generate_cloth_drape_scene(config: &ClothDrapeConfig, seed: u64) -> Result<SceneSequence> {
    let (w, h) = (config.grid_w, config.grid_h);
    if w < 5 || h < 5 {
        return Err(TrackError::param(
            "grid",
            format!("need at least 5x5, got {w}x{h}"),
        ));
    }
    if config.spacing <= 0.0 || config.descent < 0.0 {
        return Err(TrackError::param(
            "spacing",
            "spacing must be positive, descent non-negative",
        ));
    }
    if config.num_frames < 2 || config.dt <= 0.0 {
        return Err(TrackError::param(
            "num_frames",
            "need at least 2 frames and a positive dt",
        ));
    }
    let cyl = Cylinder {
        axis: config.cylinder.axis.normalize(),
        ..config.cylinder
    };

    let half_w = (w - 1) as f64 * config.spacing / 2.0;
    let half_h = (h - 1) as f64 * config.spacing / 2.0;
    let origin = Vec3::new(-half_w, -half_h, config.start_height);
    let template = DeformableTemplate::cloth(w, h, config.spacing, origin, Vec3::x(), Vec3::y())?;
    if cyl.center.x.abs() > half_w || cyl.center.y.abs() > half_h {
        warn!("cylinder axis lies outside the cloth footprint; the cloth will not drape over it");
    }
    if config.start_height - cyl.center.z <= cyl.radius {
        warn!("cloth starts intersecting the cylinder");
    }

    let mesh = cyl.mesh(config.mesh_segments)?;
    let camera = PinholeCamera::look_at(
        Vec3::new(0.0, 0.0, 1.2),
        Vec3::zeros(),
        Vec3::y(),
        320,
        240,
        60.0,
    );
    let meshes = vec![mesh];
    let scene = render_static(
        &camera,
        &StaticGeometry {
            table_height: Some(0.0),
            occluders: &[],
            meshes: &meshes,
        },
    );

    let edges = template.edges().to_vec();
    let rest: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| template.geodesic()[(i, j)])
        .collect();
    let mut points = template.points().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(config.num_frames);
    for t in 0..config.num_frames {
        if t > 0 {
            for p in &mut points {
                p.z -= config.descent;
            }
            for _ in 0..config.iterations {
                for (&(i, j), &l) in edges.iter().zip(&rest) {
                    let d = points[j] - points[i];
                    let n = d.norm();
                    if n > l {
                        let corr = d * (0.5 * (n - l) / n);
                        points[i] += corr;
                        points[j] -= corr;
                    }
                }
                for p in &mut points {
                    cyl.push_out(p);
                }
            }
        }

        let tris = cloth_triangles(&points, w, h);
        let mut front = scene.clone();
        render_triangles(&camera, &tris, &mut front);
        // one sample per triangle, two per grid cell
        let samples = sample_triangles(&tris, &mut rng);
        let view = observe(&camera, &front, &samples, &mut rng);
        frames.push(Frame {
            ground_truth: Some(points.clone()),
            cloud: view.cloud,
            depth: Some(view.depth),
            mask: Some(view.mask),
            grippers: Vec::new(),
        });
    }

    Ok(SceneSequence {
        name: "cloth_drape".into(),
        template,
        camera: Some(camera),
        obstacles: ObstacleSet::new(meshes),
        occluders: Vec::new(),
        dt: config.dt,
        frames,
    })
}
