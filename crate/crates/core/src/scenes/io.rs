//! Sequence directories: `meta.json`, `frame_%05d.json` and obstacle meshes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoxOccluder, Frame, SceneSequence};
use crate::camera::PinholeCamera;
use crate::constraints::{ObstacleSet, TriangleMesh};
use crate::geometry::{DeformableTemplate, TemplateFile};
use crate::{Result, TrackError};

#[derive(Serialize, Deserialize)]
struct Meta {
    scene: String,
    dt: f64,
    num_frames: usize,
    template: TemplateFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<PinholeCamera>,
    /// Mesh files relative to the sequence directory.
    #[serde(default)]
    obstacles: Vec<String>,
    #[serde(default)]
    occluders: Vec<BoxOccluder>,
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:05}.json")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| TrackError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| TrackError::io(path, e))
}

fn seq_err(path: &Path, reason: impl Into<String>) -> TrackError {
    TrackError::Sequence {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Writes the sequence into `dir`, creating it if needed.
pub fn write_sequence(seq: &SceneSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TrackError::io(dir, e))?;
    let mut obstacle_files = Vec::new();
    for (k, mesh) in seq.obstacles.meshes.iter().enumerate() {
        let name = format!("obstacle_{k:02}.off");
        write_bytes(&dir.join(&name), mesh.to_off().as_bytes())?;
        obstacle_files.push(name);
    }
    let meta = Meta {
        scene: seq.name.clone(),
        dt: seq.dt,
        num_frames: seq.frames.len(),
        template: seq.template.to_file(),
        camera: seq.camera.clone(),
        obstacles: obstacle_files,
        occluders: seq.occluders.clone(),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_vec_pretty(&meta).map_err(|e| seq_err(&path, e.to_string()))?;
    write_bytes(&path, &text)?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(frame_name(i));
        let text = serde_json::to_vec(frame).map_err(|e| seq_err(&path, e.to_string()))?;
        write_bytes(&path, &text)?;
    }
    Ok(())
}

/// Loads a sequence directory written by [`write_sequence`] or by hand.
pub fn read_sequence(dir: &Path) -> Result<SceneSequence> {
    let meta_path = dir.join("meta.json");
    let file = File::open(&meta_path).map_err(|e| TrackError::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| seq_err(&meta_path, e.to_string()))?;
    let template = DeformableTemplate::from_file(&meta.template)?;
    let meshes = meta
        .obstacles
        .iter()
        .map(|name| TriangleMesh::read(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::with_capacity(meta.num_frames);
    for i in 0..meta.num_frames {
        let path = dir.join(frame_name(i));
        let file = File::open(&path).map_err(|e| TrackError::io(&path, e))?;
        let frame: Frame = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| seq_err(&path, format!("frame {i}: {e}")))?;
        if let Some(gt) = &frame.ground_truth {
            if gt.len() != template.num_nodes() {
                return Err(seq_err(
                    &path,
                    format!(
                        "frame {i}: ground truth has {} nodes, template {}",
                        gt.len(),
                        template.num_nodes()
                    ),
                ));
            }
        }
        if !frame.cloud.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(seq_err(
                &path,
                format!("frame {i}: non-finite cloud coordinate"),
            ));
        }
        frames.push(frame);
    }
    Ok(SceneSequence {
        name: meta.scene,
        template,
        camera: meta.camera,
        obstacles: ObstacleSet::new(meshes),
        occluders: meta.occluders,
        dt: meta.dt,
        frames,
    })
}
