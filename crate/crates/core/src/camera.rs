//! Pinhole camera and depth/mask rasters.
//!
//! Camera frame: `x` right, `y` down, `z` forward. Depth is the camera-frame
//! `z` coordinate. A depth value of `0` means "no return".

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::Matrix3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera center in world coordinates.
    pub position: [f64; 3],
    /// Camera-to-world rotation, row-major. Columns are the camera axes.
    pub rotation: [[f64; 3]; 3],
}

/// A projected point: continuous pixel coordinates plus depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl PinholeCamera {
    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        width: usize,
        height: usize,
        fov_x_deg: f64,
    ) -> Self {
        let z = (target - eye).normalize();
        let y = (-up + z * up.dot(&z)).normalize();
        let x = y.cross(&z);
        let fx = (width as f64 / 2.0) / (fov_x_deg.to_radians() / 2.0).tan();
        let rot = Matrix3::from_columns(&[x, y, z]);
        Self {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            position: [eye.x, eye.y, eye.z],
            rotation: [
                [rot[(0, 0)], rot[(0, 1)], rot[(0, 2)]],
                [rot[(1, 0)], rot[(1, 1)], rot[(1, 2)]],
                [rot[(2, 0)], rot[(2, 1)], rot[(2, 2)]],
            ],
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix().transpose() * (p - self.center())
    }

    /// `None` for points at or behind the image plane.
    pub fn project(&self, p: &Vec3) -> Option<Projection> {
        let c = self.world_to_camera(p);
        if c.z <= 1e-9 {
            return None;
        }
        Some(Projection {
            u: self.fx * c.x / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
            depth: c.z,
        })
    }

    /// Pixel `(col, row)` containing the projection, if inside the image.
    pub fn pixel_of(&self, p: &Vec3) -> Option<(usize, usize, f64)> {
        let proj = self.project(p)?;
        if proj.u < 0.0 || proj.v < 0.0 {
            return None;
        }
        let (col, row) = (proj.u.floor() as usize, proj.v.floor() as usize);
        (col < self.width && row < self.height).then_some((col, row, proj.depth))
    }

    /// World-space unit direction of the ray through a pixel center.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        let d = Vec3::new(
            (col as f64 + 0.5 - self.cx) / self.fx,
            (row as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        (self.rotation_matrix() * d).normalize()
    }

    /// Camera-frame depth of a world point along the optical axis.
    pub fn depth_of(&self, p: &Vec3) -> f64 {
        self.world_to_camera(p).z
    }
}

/// Row-major `f32` depth image in meters; `0` is "no return".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthRaster {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Observed depth, `None` when the pixel has no return.
    pub fn observed(&self, col: usize, row: usize) -> Option<f64> {
        let d = self.get(col, row);
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }

    /// Keeps the nearer of the current and the new return.
    pub fn splat_min(&mut self, col: usize, row: usize, depth: f32) {
        let slot = &mut self.data[row * self.width + col];
        if *slot <= 0.0 || depth < *slot {
            *slot = depth;
        }
    }
}

/// Row-major object mask; nonzero where the object is visible.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl MaskRaster {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize) {
        self.data[row * self.width + col] = 1;
    }
}

#[derive(Serialize, Deserialize)]
struct RasterRepr {
    width: usize,
    height: usize,
    encoding: String,
    data: String,
}

const DEPTH_ENCODING: &str = "base64-f32le";
const MASK_ENCODING: &str = "base64-u8";

impl Serialize for DepthRaster {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        RasterRepr {
            width: self.width,
            height: self.height,
            encoding: DEPTH_ENCODING.into(),
            data: B64.encode(bytes),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DepthRaster {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = RasterRepr::deserialize(d)?;
        if repr.encoding != DEPTH_ENCODING {
            return Err(D::Error::custom(format!(
                "unsupported depth encoding {}",
                repr.encoding
            )));
        }
        let bytes = B64.decode(repr.data.as_bytes()).map_err(D::Error::custom)?;
        if bytes.len() != repr.width * repr.height * 4 {
            return Err(D::Error::custom(
                "depth raster size does not match width x height",
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(DepthRaster {
            width: repr.width,
            height: repr.height,
            data,
        })
    }
}

impl Serialize for MaskRaster {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RasterRepr {
            width: self.width,
            height: self.height,
            encoding: MASK_ENCODING.into(),
            data: B64.encode(&self.data),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaskRaster {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = RasterRepr::deserialize(d)?;
        if repr.encoding != MASK_ENCODING {
            return Err(D::Error::custom(format!(
                "unsupported mask encoding {}",
                repr.encoding
            )));
        }
        let data = B64.decode(repr.data.as_bytes()).map_err(D::Error::custom)?;
        if data.len() != repr.width * repr.height {
            return Err(D::Error::custom(
                "mask raster size does not match width x height",
            ));
        }
        Ok(MaskRaster {
            width: repr.width,
            height: repr.height,
            data,
        })
    }
}
