//! Synthetic scenes with ground truth, the on-disk sequence format and
//! evaluation metrics.

mod cloth;
mod io;
mod metrics;
mod render;
mod rope;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cloth::{generate_cloth_drape_scene, ClothDrapeConfig, Cylinder};
pub use io::{read_sequence, write_sequence};
pub use metrics::{count_penetrations, mean_distance_error, min_projected_gap, MetricSeries};
pub use render::{
    bounded_noise, is_hidden, observe, render_static, render_triangles, BoxOccluder, RenderedView,
    StaticGeometry, NOISE_BOUND, NOISE_SIGMA, SURFACE_TOLERANCE,
};
pub use rope::{
    generate_rope_crossing_scene, generate_rope_drag_scene, RopeCrossingConfig, RopeDragConfig,
};

use crate::camera::{DepthRaster, MaskRaster, PinholeCamera};
use crate::constraints::ObstacleSet;
use crate::geometry::DeformableTemplate;
use crate::prediction::GripperState;
use crate::{Result, TrackError, Vec3};

/// One time step of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<Vec3>>,
    pub cloud: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthRaster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskRaster>,
    #[serde(default)]
    pub grippers: Vec<GripperState>,
}

/// A generated or loaded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub name: String,
    pub template: DeformableTemplate,
    pub camera: Option<PinholeCamera>,
    /// Obstacles known to the tracker.
    pub obstacles: ObstacleSet,
    /// Boxes that only hide things; the tracker does not see them.
    pub occluders: Vec<BoxOccluder>,
    /// Seconds between frames.
    pub dt: f64,
    pub frames: Vec<Frame>,
}

impl SceneSequence {
    /// Ground-truth nodes hidden from the camera in `frame`, judged against
    /// that frame's depth raster.
    pub fn hidden_nodes(&self, frame: usize) -> Result<Vec<usize>> {
        let f = self
            .frames
            .get(frame)
            .ok_or_else(|| TrackError::param("frame", format!("index {frame} out of range")))?;
        let (Some(gt), Some(depth), Some(camera)) = (&f.ground_truth, &f.depth, &self.camera)
        else {
            return Ok(Vec::new());
        };
        Ok((0..gt.len())
            .filter(|&i| is_hidden(camera, depth, &gt[i]))
            .collect())
    }
}

/// The built-in scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneId {
    RopeDrag,
    ClothDrape,
    RopeCrossing,
}

impl SceneId {
    pub const ALL: [SceneId; 3] = [
        SceneId::RopeDrag,
        SceneId::ClothDrape,
        SceneId::RopeCrossing,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SceneId::RopeDrag => "rope_drag",
            SceneId::ClothDrape => "cloth_drape",
            SceneId::RopeCrossing => "rope_crossing",
        }
    }

    /// Generates the scene with its default configuration, optionally
    /// overriding the frame count.
    pub fn generate(&self, seed: u64, num_frames: Option<usize>) -> Result<SceneSequence> {
        match self {
            SceneId::RopeDrag => {
                let mut c = RopeDragConfig::default();
                c.num_frames = num_frames.unwrap_or(c.num_frames);
                generate_rope_drag_scene(&c, seed)
            }
            SceneId::ClothDrape => {
                let mut c = ClothDrapeConfig::default();
                c.num_frames = num_frames.unwrap_or(c.num_frames);
                generate_cloth_drape_scene(&c, seed)
            }
            SceneId::RopeCrossing => {
                let mut c = RopeCrossingConfig::default();
                c.num_frames = num_frames.unwrap_or(c.num_frames);
                generate_rope_crossing_scene(&c, seed)
            }
        }
    }
}

impl fmt::Display for SceneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneId {
    type Err = TrackError;

    fn from_str(s: &str) -> Result<Self> {
        SceneId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                TrackError::param(
                    "scene",
                    format!("unknown scene `{s}` (rope_drag | cloth_drape | rope_crossing)"),
                )
            })
    }
}
