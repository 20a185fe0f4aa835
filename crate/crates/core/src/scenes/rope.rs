//! Rope scenes: a rope dragged under an occluder until its free end is
//! hidden, and a rope pulled through a loop that crosses over itself.

use std::f64::consts::PI;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::render::{is_hidden, observe, render_static, sample_edges, BoxOccluder, StaticGeometry};
use super::{Frame, SceneSequence};
use crate::camera::PinholeCamera;
use crate::constraints::ObstacleSet;
use crate::geometry::DeformableTemplate;
use crate::prediction::GripperState;
use crate::{Result, TrackError, Vec3};

/// Height of the rope centerline above the table.
const ROPE_HEIGHT: f64 = 0.005;
const SAMPLES_PER_EDGE: usize = 10;
const IMAGE_WIDTH: usize = 320;
const IMAGE_HEIGHT: usize = 240;

#[derive(Debug, Clone, PartialEq)]
pub struct RopeDragConfig {
    pub num_nodes: usize,
    pub spacing: f64,
    /// Total frames, including the final `hold_frames`.
    pub num_frames: usize,
    /// Frames at the end during which the gripper stays still.
    pub hold_frames: usize,
    pub dt: f64,
    /// Initial position of the grasped end (node 0).
    pub head_start: Vec3,
    /// Direction from node 0 towards the free end in the initial straight
    /// configuration.
    pub rope_direction: Vec3,
    /// Waypoints the head visits after `head_start`, at constant speed.
    pub head_waypoints: Vec<Vec3>,
    pub occluder: BoxOccluder,
    /// Table point straight below the top-down camera.
    pub camera_target: Vec3,
}

impl Default for RopeDragConfig {
    fn default() -> Self {
        Self {
            num_nodes: 50,
            spacing: 0.02,
            num_frames: 100,
            hold_frames: 0,
            dt: 0.1,
            head_start: Vec3::new(-0.6, 0.0, ROPE_HEIGHT),
            rope_direction: -Vec3::x(),
            head_waypoints: vec![Vec3::new(0.65, 0.0, ROPE_HEIGHT)],
            occluder: BoxOccluder {
                min: Vec3::new(-0.45, -0.12, 0.2),
                max: Vec3::new(0.2, 0.12, 0.24),
            },
            camera_target: Vec3::new(-0.45, 0.0, 0.0),
        }
    }
}

/// Piecewise linear head trajectory parameterized by arc length.
struct Polyline {
    points: Vec<Vec3>,
    cumulative: Vec<f64>,
}

impl Polyline {
    fn new(points: Vec<Vec3>) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Self { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn at(&self, s: f64) -> Vec3 {
        if self.points.len() == 1 {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.length());
        let k = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, self.points.len() - 1);
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        let t = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        self.points[k - 1] + (self.points[k] - self.points[k - 1]) * t
    }
}

/// Moves node 0 to `head` and lets every other node follow its predecessor
/// at exactly `spacing`.
fn follow_the_leader(points: &mut [Vec3], head: Vec3, spacing: f64) {
    points[0] = head;
    for i in 1..points.len() {
        let d = points[i] - points[i - 1];
        let n = d.norm();
        if n > 1e-12 {
            points[i] = points[i - 1] + d * (spacing / n);
        }
    }
}

fn gripper_for(head: Vec3, prev_head: Option<Vec3>, dt: f64) -> GripperState {
    let v = prev_head.map_or(Vec3::zeros(), |p| (head - p) / dt);
    GripperState::at(head, [v.x, v.y, v.z, 0.0, 0.0, 0.0], vec![0])
}

fn chain_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n - 1).map(|i| (i, i + 1)).collect()
}

fn check_frames(num_frames: usize, dt: f64) -> Result<()> {
    if num_frames < 2 {
        return Err(TrackError::param("num_frames", "need at least 2 frames"));
    }
    if dt <= 0.0 || !dt.is_finite() {
        return Err(TrackError::param(
            "dt",
            format!("must be positive, got {dt}"),
        ));
    }
    Ok(())
}

/// A rope lying straight on a table is dragged by node 0 through a list of
/// waypoints, optionally followed by frames where the gripper holds still.
/// Every other node follows its predecessor at exactly the edge length. With
/// the default settings the head passes under a floating box and out the far
/// side, and the drag stops once the free end is hidden beneath it.
pub fn generate_rope_drag_scene(config: &RopeDragConfig, seed: u64) -> Result<SceneSequence> {
    if config.num_nodes < 10 {
        return Err(TrackError::param(
            "num_nodes",
            format!("need at least 10, got {}", config.num_nodes),
        ));
    }
    if config.spacing <= 0.0 {
        return Err(TrackError::param("spacing", "must be positive"));
    }
    check_frames(config.num_frames, config.dt)?;
    if config.hold_frames + 2 > config.num_frames {
        return Err(TrackError::param(
            "hold_frames",
            "leave at least 2 frames of motion",
        ));
    }
    let dir_norm = config.rope_direction.norm();
    if dir_norm.is_nan() || dir_norm <= 1e-12 {
        return Err(TrackError::param(
            "rope_direction",
            "must be a nonzero vector",
        ));
    }
    let dir = config.rope_direction / dir_norm;

    let mut waypoints = vec![config.head_start];
    waypoints.extend(config.head_waypoints.iter().copied());
    let path = Polyline::new(waypoints);
    let mut points: Vec<Vec3> = (0..config.num_nodes)
        .map(|i| config.head_start + dir * (i as f64 * config.spacing))
        .collect();
    let edges = chain_edges(config.num_nodes);
    let template = DeformableTemplate::new(points.clone(), edges.clone())?;

    let camera = PinholeCamera::look_at(
        config.camera_target + Vec3::z() * 2.2,
        config.camera_target,
        Vec3::y(),
        IMAGE_WIDTH,
        IMAGE_HEIGHT,
        60.0,
    );
    let occluders = vec![config.occluder];
    let scene = render_static(
        &camera,
        &StaticGeometry {
            table_height: Some(0.0),
            occluders: &occluders,
            meshes: &[],
        },
    );

    let moving = config.num_frames - config.hold_frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(config.num_frames);
    let mut prev_head = None;
    let mut any_hidden = false;
    for t in 0..config.num_frames {
        let s = path.length() * t.min(moving - 1) as f64 / (moving - 1) as f64;
        let head = path.at(s);
        follow_the_leader(&mut points, head, config.spacing);
        any_hidden |= points.iter().any(|p| is_hidden(&camera, &scene, p));

        let samples = sample_edges(&points, &edges, SAMPLES_PER_EDGE, &mut rng);
        let view = observe(&camera, &scene, &samples, &mut rng);
        frames.push(Frame {
            ground_truth: Some(points.clone()),
            cloud: view.cloud,
            depth: Some(view.depth),
            mask: Some(view.mask),
            grippers: vec![gripper_for(head, prev_head, config.dt)],
        });
        prev_head = Some(head);
    }
    if !any_hidden {
        warn!("occluder never hides the rope; the scene exercises no occlusion");
    }

    Ok(SceneSequence {
        name: "rope_drag".into(),
        template,
        camera: Some(camera),
        obstacles: ObstacleSet::empty(),
        occluders,
        dt: config.dt,
        frames,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RopeCrossingConfig {
    pub num_nodes: usize,
    pub spacing: f64,
    pub num_frames: usize,
    pub dt: f64,
    /// Vertical clearance between the strands at the crossing.
    pub gap: f64,
    /// How far the head is pulled along its strand over the sequence.
    pub pull: f64,
}

impl Default for RopeCrossingConfig {
    fn default() -> Self {
        Self {
            num_nodes: 70,
            spacing: 0.02,
            num_frames: 40,
            dt: 0.1,
            gap: 0.012,
            pull: 0.15,
        }
    }
}

/// A lower strand along +x, a 225 degree left loop, and an upper strand
/// leaving diagonally across the lower one.
struct LoopPath {
    start: Vec3,
    lower: f64,
    radius: f64,
    sweep: f64,
    gap: f64,
}

impl LoopPath {
    fn upper_start(&self) -> (f64, Vec3) {
        let c = self.start + Vec3::new(self.lower, self.radius, 0.0);
        let p = c + Vec3::new(self.sweep.sin(), -self.sweep.cos(), 0.0) * self.radius;
        (self.lower + self.radius * self.sweep, p)
    }

    fn upper_dir(&self) -> Vec3 {
        Vec3::new(self.sweep.cos(), self.sweep.sin(), 0.0)
    }

    /// Distance along the upper strand to the point above the lower strand.
    fn crossing_offset(&self) -> f64 {
        let (_, p) = self.upper_start();
        (p.y - self.start.y) / -self.upper_dir().y
    }

    fn lift(&self, d: f64) -> f64 {
        let (flat, ramp) = (0.04, 0.05);
        let x = (d.abs() - flat) / ramp;
        if x <= 0.0 {
            1.0
        } else if x >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (PI * x).cos())
        }
    }

    fn at(&self, s: f64) -> Vec3 {
        let s = s.max(0.0);
        let arc_end = self.lower + self.radius * self.sweep;
        if s <= self.lower {
            self.start + Vec3::x() * s
        } else if s <= arc_end {
            let th = (s - self.lower) / self.radius;
            let c = self.start + Vec3::new(self.lower, self.radius, 0.0);
            c + Vec3::new(th.sin(), -th.cos(), 0.0) * self.radius
        } else {
            let (s0, p0) = self.upper_start();
            let d = s - s0;
            let z = self.gap * self.lift(d - self.crossing_offset());
            p0 + self.upper_dir() * d + Vec3::z() * z
        }
    }
}

/// A rope lies in a loop whose last strand rests on top of its first strand
/// with a small vertical clearance. A gripper on node 0 pulls the rope along
/// its own path, so the nodes slide through the crossing while its shape
/// stays put.
pub fn generate_rope_crossing_scene(
    config: &RopeCrossingConfig,
    seed: u64,
) -> Result<SceneSequence> {
    if config.num_nodes < 10 {
        return Err(TrackError::param(
            "num_nodes",
            format!("need at least 10, got {}", config.num_nodes),
        ));
    }
    if config.gap <= 0.0 || config.spacing <= 0.0 || config.pull < 0.0 {
        return Err(TrackError::param(
            "gap",
            "gap and spacing must be positive, pull non-negative",
        ));
    }
    check_frames(config.num_frames, config.dt)?;

    let path = LoopPath {
        start: Vec3::new(-0.45, 0.0, ROPE_HEIGHT),
        lower: 0.55,
        radius: 0.1,
        sweep: 1.25 * PI,
        gap: config.gap,
    };
    let rope_length = (config.num_nodes - 1) as f64 * config.spacing;
    let (s_upper, p_upper) = path.upper_start();
    let crossing = s_upper + path.crossing_offset();
    let crossing_on_lower = p_upper.x + path.upper_dir().x * path.crossing_offset() - path.start.x;
    if rope_length <= crossing || config.pull >= crossing_on_lower {
        warn!("rope does not reach across itself for the whole sequence; no crossing is exercised");
    }

    let place = |head_s: f64| -> Vec<Vec3> {
        (0..config.num_nodes)
            .map(|i| path.at(head_s - i as f64 * config.spacing))
            .collect()
    };
    let edges = chain_edges(config.num_nodes);
    let template = DeformableTemplate::new(place(rope_length), edges.clone())?;

    let camera = PinholeCamera::look_at(
        Vec3::new(-0.15, -0.02, 1.0),
        Vec3::new(-0.15, -0.02, 0.0),
        Vec3::y(),
        IMAGE_WIDTH,
        IMAGE_HEIGHT,
        60.0,
    );
    let scene = render_static(
        &camera,
        &StaticGeometry {
            table_height: Some(0.0),
            occluders: &[],
            meshes: &[],
        },
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(config.num_frames);
    let mut prev_head = None;
    for t in 0..config.num_frames {
        let head_s = rope_length + config.pull * t as f64 / (config.num_frames - 1) as f64;
        let points = place(head_s);
        let samples = sample_edges(&points, &edges, SAMPLES_PER_EDGE, &mut rng);
        let view = observe(&camera, &scene, &samples, &mut rng);
        frames.push(Frame {
            ground_truth: Some(points.clone()),
            cloud: view.cloud,
            depth: Some(view.depth),
            mask: Some(view.mask),
            grippers: vec![gripper_for(points[0], prev_head, config.dt)],
        });
        prev_head = Some(points[0]);
    }

    Ok(SceneSequence {
        name: "rope_crossing".into(),
        template,
        camera: Some(camera),
        obstacles: ObstacleSet::empty(),
        occluders: Vec::new(),
        dt: config.dt,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_drag() -> RopeDragConfig {
        RopeDragConfig {
            num_frames: 12,
            ..Default::default()
        }
    }

    #[test]
    fn polyline_is_continuous() {
        let path = Polyline::new(vec![
            Vec3::zeros(),
            Vec3::new(0.3, 0.0, 0.0),
            Vec3::new(0.3, 0.4, 0.0),
        ]);
        assert!((path.length() - 0.7).abs() < 1e-15);
        let n = 2000;
        let ds = path.length() / n as f64;
        for k in 0..n {
            let step = (path.at((k + 1) as f64 * ds) - path.at(k as f64 * ds)).norm();
            assert!(step <= ds + 1e-12 && step > 0.7 * ds);
        }
        assert_eq!(path.at(10.0), Vec3::new(0.3, 0.4, 0.0));
    }

    #[test]
    fn frame_zero_is_fully_observed() {
        let seq = generate_rope_drag_scene(&short_drag(), 7).unwrap();
        let f0 = &seq.frames[0];
        assert_eq!(f0.cloud.len(), 49 * SAMPLES_PER_EDGE);
        assert!(seq.hidden_nodes(0).unwrap().is_empty());
    }

    #[test]
    fn edge_lengths_are_constant() {
        let seq = generate_rope_drag_scene(&short_drag(), 1).unwrap();
        for f in &seq.frames {
            let gt = f.ground_truth.as_ref().unwrap();
            for w in gt.windows(2) {
                assert!(((w[0] - w[1]).norm() - 0.02).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        let cfg = RopeDragConfig {
            num_nodes: 9,
            ..Default::default()
        };
        assert!(generate_rope_drag_scene(&cfg, 0).is_err());
    }

    #[test]
    fn loop_path_crosses_with_clearance() {
        let cfg = RopeCrossingConfig {
            num_frames: 3,
            ..Default::default()
        };
        let seq = generate_rope_crossing_scene(&cfg, 0).unwrap();
        let gt = seq.frames[2].ground_truth.as_ref().unwrap();
        let edges = seq.template.edges();
        let mut min_dist = f64::INFINITY;
        for a in 0..edges.len() {
            for b in (a + 2)..edges.len() {
                let (i, j) = (edges[a], edges[b]);
                let c = crate::geometry::closest_points_between_segments(
                    &gt[i.0], &gt[i.1], &gt[j.0], &gt[j.1],
                );
                min_dist = min_dist.min(c.distance);
            }
        }
        assert!(min_dist > 0.0115 && min_dist < 0.0125, "{min_dist}");
    }
}
