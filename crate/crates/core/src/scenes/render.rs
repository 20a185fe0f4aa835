//! Ray-cast depth rendering and noisy surface sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{DepthRaster, MaskRaster, PinholeCamera};
use crate::constraints::TriangleMesh;
use crate::Vec3;

/// Standard deviation of the per-axis sensor noise.
pub const NOISE_SIGMA: f64 = 0.001;
/// Noise samples longer than this are redrawn.
pub const NOISE_BOUND: f64 = 0.002;
/// A sample counts as visible when it is at most this far behind the
/// rendered surface at its pixel; absorbs sub-pixel depth variation.
pub const SURFACE_TOLERANCE: f64 = 0.005;

/// Axis-aligned box that hides what is behind it but is not an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxOccluder {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoxOccluder {
    /// Entry distance of the ray, if it hits.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            if dir[k].abs() < 1e-15 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let (mut a, mut b) = (
                (self.min[k] - origin[k]) * inv,
                (self.max[k] - origin[k]) * inv,
            );
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Möller-Trumbore; distance along `dir` to the triangle.
pub(crate) fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Everything that does not move: a table plane, occluder boxes and
/// obstacle meshes.
#[derive(Debug, Clone, Default)]
pub struct StaticGeometry<'a> {
    pub table_height: Option<f64>,
    pub occluders: &'a [BoxOccluder],
    pub meshes: &'a [TriangleMesh],
}

fn depth_along(camera: &PinholeCamera, dir: &Vec3, t: f64) -> f64 {
    let axis = camera.rotation_matrix().column(2).into_owned();
    t * dir.dot(&axis)
}

/// Depth image of the static geometry, one ray per pixel center.
pub fn render_static(camera: &PinholeCamera, geometry: &StaticGeometry<'_>) -> DepthRaster {
    let mut raster = DepthRaster::empty(camera.width, camera.height);
    let origin = camera.center();
    for row in 0..camera.height {
        for col in 0..camera.width {
            let dir = camera.pixel_ray(col, row);
            let mut best = f64::INFINITY;
            if let Some(z) = geometry.table_height {
                if dir.z.abs() > 1e-12 {
                    let t = (z - origin.z) / dir.z;
                    if t > 0.0 {
                        best = best.min(t);
                    }
                }
            }
            for occ in geometry.occluders {
                if let Some(t) = occ.ray_hit(&origin, &dir) {
                    best = best.min(t);
                }
            }
            for mesh in geometry.meshes {
                let v = mesh.vertices();
                for f in mesh.faces() {
                    if let Some(t) = ray_triangle(&origin, &dir, &v[f[0]], &v[f[1]], &v[f[2]]) {
                        best = best.min(t);
                    }
                }
            }
            if best.is_finite() {
                raster.data[row * camera.width + col] = depth_along(camera, &dir, best) as f32;
            }
        }
    }
    raster
}

/// Rasterizes triangles into `raster`, keeping the nearest depth.
pub fn render_triangles(camera: &PinholeCamera, triangles: &[[Vec3; 3]], raster: &mut DepthRaster) {
    let origin = camera.center();
    for tri in triangles {
        let proj: Vec<_> = tri.iter().filter_map(|p| camera.project(p)).collect();
        if proj.len() < 3 {
            continue;
        }
        let umin = proj
            .iter()
            .map(|p| p.u)
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0) as usize;
        let vmin = proj
            .iter()
            .map(|p| p.v)
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0) as usize;
        let umax = proj
            .iter()
            .map(|p| p.u)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        let vmax = proj
            .iter()
            .map(|p| p.v)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        if umax < 0.0 || vmax < 0.0 {
            continue;
        }
        let umax = (umax as usize).min(camera.width.saturating_sub(1));
        let vmax = (vmax as usize).min(camera.height.saturating_sub(1));
        for row in vmin..=vmax {
            for col in umin..=umax {
                let dir = camera.pixel_ray(col, row);
                if let Some(t) = ray_triangle(&origin, &dir, &tri[0], &tri[1], &tri[2]) {
                    raster.splat_min(col, row, depth_along(camera, &dir, t) as f32);
                }
            }
        }
    }
}

/// Isotropic Gaussian noise redrawn until its length is within
/// [`NOISE_BOUND`].
pub fn bounded_noise(rng: &mut ChaCha8Rng) -> Vec3 {
    let normal = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    loop {
        let n = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        if n.norm() <= NOISE_BOUND {
            return n;
        }
    }
}

/// `per_edge` stratified samples along each edge of a chain.
pub fn sample_edges(
    points: &[Vec3],
    edges: &[(usize, usize)],
    per_edge: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(edges.len() * per_edge);
    for &(i, j) in edges {
        for k in 0..per_edge {
            let t = (k as f64 + rng.gen::<f64>()) / per_edge as f64;
            out.push(points[i] * (1.0 - t) + points[j] * t);
        }
    }
    out
}

/// One uniformly distributed sample per triangle.
pub fn sample_triangles(triangles: &[[Vec3; 3]], rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    triangles
        .iter()
        .map(|[a, b, c]| {
            let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            a + (b - a) * u + (c - a) * v
        })
        .collect()
}

/// A rendered frame: visible noisy samples, depth and object mask.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub cloud: Vec<Vec3>,
    pub depth: DepthRaster,
    pub mask: MaskRaster,
}

/// Keeps the samples whose noise-free position is not hidden by `scene`
/// (static geometry plus, optionally, the object's own rasterized surface),
/// adds bounded noise to them and splats them into the depth and mask.
pub fn observe(
    camera: &PinholeCamera,
    scene: &DepthRaster,
    samples: &[Vec3],
    rng: &mut ChaCha8Rng,
) -> RenderedView {
    let mut depth = scene.clone();
    let mut mask = MaskRaster::empty(camera.width, camera.height);
    let mut cloud = Vec::new();
    for s in samples {
        // noise is drawn for every sample so visibility changes do not
        // shift the random stream of later samples
        let noise = bounded_noise(rng);
        let Some((col, row, d)) = camera.pixel_of(s) else {
            continue;
        };
        if let Some(front) = scene.observed(col, row) {
            if d > front + SURFACE_TOLERANCE {
                continue;
            }
        }
        let noisy = s + noise;
        cloud.push(noisy);
        mask.set(col, row);
        depth.splat_min(col, row, camera.depth_of(&noisy) as f32);
    }
    RenderedView { cloud, depth, mask }
}

/// Whether a point is hidden behind `scene` at its pixel.
pub fn is_hidden(camera: &PinholeCamera, scene: &DepthRaster, p: &Vec3) -> bool {
    match camera.pixel_of(p) {
        Some((col, row, d)) => scene
            .observed(col, row)
            .is_some_and(|front| d > front + SURFACE_TOLERANCE),
        None => true,
    }
}
