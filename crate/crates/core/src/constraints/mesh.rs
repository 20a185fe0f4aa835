use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Result, TrackError, Vec3};

/// Which part of a triangle the closest point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFeature {
    Vertex(usize),
    Edge(usize, usize),
    Face(usize),
}

/// Closest surface point and the pseudo-normal of its feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleHit {
    pub point: Vec3,
    pub normal: Vec3,
    pub distance: f64,
    /// Negative inside the obstacle.
    pub signed_distance: f64,
    pub feature: MeshFeature,
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.min = self.min.inf(&o.min);
        self.max = self.max.sup(&o.max);
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum BvhNode {
    Leaf {
        bounds: Aabb,
        faces: Vec<usize>,
    },
    Inner {
        bounds: Aabb,
        left: Box<BvhNode>,
        right: Box<BvhNode>,
    },
}

impl BvhNode {
    fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Inner { bounds, .. } => bounds,
        }
    }

    fn build(mut faces: Vec<usize>, boxes: &[Aabb]) -> BvhNode {
        let mut bounds = Aabb::empty();
        for &f in &faces {
            bounds.merge(&boxes[f]);
        }
        if faces.len() <= 4 {
            return BvhNode::Leaf { bounds, faces };
        }
        let extent = bounds.max - bounds.min;
        let axis = extent.imax();
        let center = |f: usize| (boxes[f].min[axis] + boxes[f].max[axis]) * 0.5;
        faces.sort_by(|&a, &b| center(a).total_cmp(&center(b)).then(a.cmp(&b)));
        let right = faces.split_off(faces.len() / 2);
        BvhNode::Inner {
            bounds,
            left: Box::new(BvhNode::build(faces, boxes)),
            right: Box::new(BvhNode::build(right, boxes)),
        }
    }
}

/// A triangle mesh with outward normals, pseudo-normals and a BVH.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<Vec3>,
    vertex_normals: Vec<Vec3>,
    edge_normals: HashMap<(usize, usize), Vec3>,
    bvh: Option<BvhNode>,
}

impl PartialEq for TriangleMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.faces == other.faces
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl TriangleMesh {
    /// Builds the mesh. Closed meshes with inward winding are flipped so
    /// that normals point out; degenerate faces are dropped.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(f) = faces
            .iter()
            .find(|f| f.iter().any(|&i| i >= vertices.len()))
        {
            return Err(TrackError::InvalidTemplate(format!(
                "mesh face {f:?} references a vertex outside [0, {})",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(TrackError::NonFinite("mesh vertices"));
        }
        let mut faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| {
                let [a, b, c] = f.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() > 1e-14
            })
            .collect();

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &faces {
            for k in 0..3 {
                *edge_count
                    .entry(edge_key(f[k], f[(k + 1) % 3]))
                    .or_default() += 1;
            }
        }
        let closed = !faces.is_empty() && edge_count.values().all(|&c| c == 2);
        if closed {
            let volume: f64 = faces
                .iter()
                .map(|f| vertices[f[0]].dot(&vertices[f[1]].cross(&vertices[f[2]])))
                .sum();
            if volume < 0.0 {
                for f in &mut faces {
                    f.swap(1, 2);
                }
            }
        }

        let face_normals: Vec<Vec3> = faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).normalize()
            })
            .collect();

        let mut vertex_acc = vec![Vec3::zeros(); vertices.len()];
        let mut edge_acc: HashMap<(usize, usize), Vec3> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            let n = face_normals[fi];
            for k in 0..3 {
                let v = f[k];
                let e1 = (vertices[f[(k + 1) % 3]] - vertices[v]).normalize();
                let e2 = (vertices[f[(k + 2) % 3]] - vertices[v]).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex_acc[v] += n * angle;
                *edge_acc
                    .entry(edge_key(f[k], f[(k + 1) % 3]))
                    .or_insert_with(Vec3::zeros) += n;
            }
        }
        let vertex_normals = vertex_acc
            .into_iter()
            .map(|n| n.try_normalize(1e-300).unwrap_or_else(Vec3::z))
            .collect();
        let edge_normals = edge_acc
            .into_iter()
            .map(|(k, n)| (k, n.try_normalize(1e-300).unwrap_or_else(Vec3::z)))
            .collect();

        let boxes: Vec<Aabb> = faces
            .iter()
            .map(|f| {
                let mut b = Aabb::empty();
                for &i in f {
                    b.grow(&vertices[i]);
                }
                b
            })
            .collect();
        let bvh = (!faces.is_empty()).then(|| BvhNode::build((0..faces.len()).collect(), &boxes));

        Ok(Self {
            vertices,
            faces,
            face_normals,
            vertex_normals,
            edge_normals,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.face_normals[face]
    }

    /// Axis-aligned box, outward normals.
    pub fn cuboid(min: Vec3, max: Vec3) -> Result<Self> {
        let v = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3], // z = min
            [4, 5, 6],
            [5, 7, 6], // z = max
            [0, 1, 4],
            [1, 5, 4], // y = min
            [2, 6, 3],
            [3, 6, 7], // y = max
            [0, 4, 2],
            [2, 4, 6], // x = min
            [1, 3, 5],
            [3, 7, 5], // x = max
        ];
        Self::new(v, faces)
    }

    /// Closed cylinder with `segments` sides whose vertices lie on the
    /// circle of `radius` (so the mesh is inscribed in the true cylinder).
    pub fn cylinder(
        base_center: Vec3,
        axis: Vec3,
        radius: f64,
        length: f64,
        segments: usize,
    ) -> Result<Self> {
        if segments < 3 {
            return Err(TrackError::param(
                "segments",
                "a cylinder needs at least 3 sides",
            ));
        }
        let a = axis.normalize();
        let helper = if a.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let u = a.cross(&helper).normalize();
        let v = a.cross(&u);
        let mut verts = Vec::with_capacity(2 * segments + 2);
        for ring in 0..2 {
            let c = base_center + a * (length * ring as f64);
            for s in 0..segments {
                let th = std::f64::consts::TAU * s as f64 / segments as f64;
                verts.push(c + (u * th.cos() + v * th.sin()) * radius);
            }
        }
        let bottom = verts.len();
        verts.push(base_center);
        let top = verts.len();
        verts.push(base_center + a * length);
        let mut faces = Vec::new();
        for s in 0..segments {
            let n = (s + 1) % segments;
            let (b0, b1, t0, t1) = (s, n, s + segments, n + segments);
            faces.push([b0, b1, t1]);
            faces.push([b0, t1, t0]);
            faces.push([bottom, b1, b0]);
            faces.push([top, t0, t1]);
        }
        Self::new(verts, faces)
    }

    /// Sphere from a subdivided octahedron; vertices lie on the sphere.
    pub fn sphere(center: Vec3, radius: f64, subdivisions: usize) -> Result<Self> {
        let mut verts = vec![
            Vec3::x(),
            -Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
            Vec3::z(),
            -Vec3::z(),
        ];
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            for f in &faces {
                let mut mid = [0usize; 3];
                for k in 0..3 {
                    let key = edge_key(f[k], f[(k + 1) % 3]);
                    mid[k] = *midpoint.entry(key).or_insert_with(|| {
                        verts.push(((verts[key.0] + verts[key.1]) * 0.5).normalize());
                        verts.len() - 1
                    });
                }
                next.push([f[0], mid[0], mid[2]]);
                next.push([mid[0], f[1], mid[1]]);
                next.push([mid[2], mid[1], f[2]]);
                next.push([mid[0], mid[1], mid[2]]);
            }
            faces = next;
        }
        let verts = verts.into_iter().map(|p| center + p * radius).collect();
        Self::new(verts, faces)
    }

    /// Nearest surface point with the pseudo-normal of the closest feature.
    pub fn closest_point(&self, p: &Vec3) -> Option<ObstacleHit> {
        let root = self.bvh.as_ref()?;
        let mut best: Option<(f64, usize, Vec3, MeshFeature)> = None;
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            let bound = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            if node.bounds().distance_squared(p) > bound {
                continue;
            }
            match node {
                BvhNode::Leaf { faces, .. } => {
                    for &fi in faces {
                        let f = self.faces[fi];
                        let (q, feature) = closest_on_triangle(
                            p,
                            &self.vertices[f[0]],
                            &self.vertices[f[1]],
                            &self.vertices[f[2]],
                        );
                        let d2 = (p - q).norm_squared();
                        let better = match &best {
                            None => true,
                            Some((bd, bf, ..)) => d2 < *bd || (d2 == *bd && fi < *bf),
                        };
                        if better {
                            let feature = match feature {
                                LocalFeature::Vertex(k) => MeshFeature::Vertex(f[k]),
                                LocalFeature::Edge(a, b) => {
                                    let (a, b) = edge_key(f[a], f[b]);
                                    MeshFeature::Edge(a, b)
                                }
                                LocalFeature::Face => MeshFeature::Face(fi),
                            };
                            best = Some((d2, fi, q, feature));
                        }
                    }
                }
                BvhNode::Inner { left, right, .. } => {
                    let (dl, dr) = (
                        left.bounds().distance_squared(p),
                        right.bounds().distance_squared(p),
                    );
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        let (d2, _, point, feature) = best?;
        let normal = match feature {
            MeshFeature::Vertex(v) => self.vertex_normals[v],
            MeshFeature::Edge(a, b) => self.edge_normals[&(a, b)],
            MeshFeature::Face(f) => self.face_normals[f],
        };
        let distance = d2.sqrt();
        let side = (p - point).dot(&normal);
        Some(ObstacleHit {
            point,
            normal,
            distance,
            signed_distance: if side < 0.0 { -distance } else { distance },
            feature,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrackError::io(path, e))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "off" => Self::parse_off(&text, path),
            "obj" => Self::parse_obj(&text, path),
            _ => Err(TrackError::MeshParse {
                path: path.into(),
                reason: "expected a .off or .obj file".into(),
            }),
        }
    }

    fn parse_off(text: &str, path: &Path) -> Result<Self> {
        let bad = |reason: String| TrackError::MeshParse {
            path: path.into(),
            reason,
        };
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("OFF") {
            return Err(bad("missing OFF header".into()));
        }
        let mut next_num = |what: &str| -> Result<f64> {
            let tok = tokens
                .next()
                .ok_or_else(|| bad(format!("unexpected end of file reading {what}")))?;
            tok.parse::<f64>()
                .map_err(|_| bad(format!("invalid {what} `{tok}`")))
        };
        let nv = next_num("vertex count")? as usize;
        let nf = next_num("face count")? as usize;
        next_num("edge count")?;
        let mut verts = Vec::with_capacity(nv);
        for _ in 0..nv {
            verts.push(Vec3::new(next_num("x")?, next_num("y")?, next_num("z")?));
        }
        let mut faces = Vec::with_capacity(nf);
        for i in 0..nf {
            let k = next_num("face size")? as usize;
            if k != 3 {
                return Err(bad(format!(
                    "face {i} has {k} vertices; only triangles are supported"
                )));
            }
            faces.push([
                next_num("index")? as usize,
                next_num("index")? as usize,
                next_num("index")? as usize,
            ]);
        }
        Self::new(verts, faces)
    }

    fn parse_obj(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, reason: String| TrackError::MeshParse {
            path: path.into(),
            reason: format!("line {}: {reason}", line + 1),
        };
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .take(3)
                        .map(|t| {
                            t.parse::<f64>()
                                .map_err(|_| bad(ln, format!("invalid coordinate `{t}`")))
                        })
                        .collect::<Result<_>>()?;
                    if c.len() != 3 {
                        return Err(bad(ln, "vertex needs 3 coordinates".into()));
                    }
                    verts.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|t| {
                            let first = t.split('/').next().unwrap_or("");
                            let i: i64 = first
                                .parse()
                                .map_err(|_| bad(ln, format!("invalid index `{t}`")))?;
                            let resolved = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                            usize::try_from(resolved)
                                .map_err(|_| bad(ln, format!("index `{t}` out of range")))
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 {
                        return Err(bad(
                            ln,
                            format!(
                                "face has {} vertices; only triangles are supported",
                                idx.len()
                            ),
                        ));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(verts, faces)
    }

    /// OFF text with shortest round-trip float formatting.
    pub fn to_off(&self) -> String {
        let mut s = format!("OFF\n{} {} 0\n", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
        }
        s
    }
}

enum LocalFeature {
    Vertex(usize),
    Edge(usize, usize),
    Face,
}

/// Closest point on triangle `abc` (Ericson, Real-Time Collision Detection
/// 5.1.5) together with the Voronoi region it falls in.
fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, LocalFeature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, LocalFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, LocalFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, LocalFeature::Edge(0, 1));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, LocalFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, LocalFeature::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, LocalFeature::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, LocalFeature::Face)
}

/// All obstacle meshes of a scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleSet {
    pub meshes: Vec<TriangleMesh>,
}

impl ObstacleSet {
    pub fn new(meshes: Vec<TriangleMesh>) -> Self {
        Self { meshes }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.iter().all(|m| m.faces().is_empty())
    }

    /// Signed distance to the nearest obstacle, `None` without obstacles.
    pub fn signed_distance(&self, p: &Vec3) -> Option<f64> {
        nearest_obstacle_point(p, self).map(|h| h.signed_distance)
    }
}

/// Closest point over every mesh; `None` means "no constraint".
pub fn nearest_obstacle_point(p: &Vec3, obstacles: &ObstacleSet) -> Option<ObstacleHit> {
    obstacles
        .meshes
        .iter()
        .filter_map(|m| m.closest_point(p))
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}
