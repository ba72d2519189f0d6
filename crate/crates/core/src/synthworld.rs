//! Synthetic calibrated driving scenes with analytic ground truth.
//!
//! A scene is a flat ground plane carrying a dark road band of configurable
//! half-width along the world X axis, brighter off-road terrain on either
//! side, a smooth sky, and optional box obstacles. The camera rig is fixed
//! relative to the vehicle; the vehicle drives straight down the road at a
//! constant speed, so frame `f` only shifts the camera by
//! `f * speed / frame_rate` meters along X.
//!
//! Everything is computed per pixel by exact ray casting against the ground
//! plane, and all textures are seeded value noise anchored in world
//! coordinates, which means: rendering is deterministic, optical flow
//! between frames is exactly the flow induced by the known motion, and the
//! true road mask of any frame is available analytically through
//! [`exact_mask`] (a pure ground test: obstacles are rendered but do not
//! change the mask). That combination makes these scenes the oracle for
//! end-to-end tests: a training pipeline can be scored against masks no
//! human ever labeled.
//!
//! [`render_sequence`] emits exactly the directory layout the training
//! pipeline ingests (frames, per-frame calibration, per-frame speed) plus
//! `gt/` masks for evaluation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    CameraExtrinsics, CameraIntrinsics, CameraRig, GeometryError, RotationConvention,
};
use crate::img::RgbImage;
use crate::weakmask::{BinaryMask, MaskError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {reason}")]
    InvalidSpec { reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Img(#[from] crate::img::ImgError),
    #[error("scene spec file is not valid JSON: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// An axis-aligned box standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub height: f64,
}

/// Full description of a synthetic scene; serializable as flat JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub image_width: usize,
    pub image_height: usize,
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    /// Camera position in the vehicle frame (origin under the rear axle
    /// center on the ground, X forward, Y left, Z up), meters.
    pub camera_x: f64,
    pub camera_y: f64,
    pub camera_z: f64,
    /// Camera mounting angles, radians.
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Half-width of the road band around the world X axis, meters.
    pub road_half_width: f64,
    #[serde(default = "default_vehicle_width")]
    pub vehicle_width: f64,
    pub road_seed: u64,
    pub offroad_seed: u64,
    #[serde(default)]
    pub obstacles: Vec<ObstacleBox>,
    /// Forward speed, m/s.
    pub speed: f64,
    /// Frames per second.
    pub frame_rate: f64,
    pub frame_count: usize,
}

fn default_vehicle_width() -> f64 {
    1.8
}

impl Default for SceneSpec {
    /// The desk-scale default: 256x128, a 2 m half-width road, 8 m/s at
    /// 20 Hz for 60 frames.
    fn default() -> Self {
        Self {
            image_width: 256,
            image_height: 128,
            fx: 200.0,
            fy: 200.0,
            u0: 128.0,
            v0: 64.0,
            camera_x: 0.3,
            camera_y: 0.0,
            camera_z: 1.3,
            roll: 0.0,
            pitch: -0.05,
            yaw: 0.0,
            road_half_width: 2.0,
            vehicle_width: 1.8,
            road_seed: 7,
            offroad_seed: 8,
            obstacles: Vec::new(),
            speed: 8.0,
            frame_rate: 20.0,
            frame_count: 60,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| Err(SynthError::InvalidSpec { reason });
        if self.image_width == 0 || self.image_height == 0 {
            return fail(format!(
                "image is {}x{}, need nonzero dimensions",
                self.image_width, self.image_height
            ));
        }
        if !(self.road_half_width > self.vehicle_width / 2.0) {
            return fail(format!(
                "road_half_width {} must exceed half the vehicle width {}",
                self.road_half_width, self.vehicle_width
            ));
        }
        if !(self.speed >= 0.0) {
            return fail(format!("speed {} must be nonnegative", self.speed));
        }
        if !(self.frame_rate > 0.0) {
            return fail(format!("frame_rate {} must be positive", self.frame_rate));
        }
        if self.frame_count == 0 {
            return fail("frame_count must be at least 1".into());
        }
        for (i, b) in self.obstacles.iter().enumerate() {
            if !(b.x_min < b.x_max && b.y_min < b.y_max && b.height > 0.0) {
                return fail(format!("obstacle {i} has an empty extent"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The camera rig in the vehicle frame; identical for every frame.
    pub fn rig(&self) -> Result<CameraRig, SynthError> {
        let intr = CameraIntrinsics::new(
            self.fx,
            self.fy,
            self.u0,
            self.v0,
            self.image_width as u32,
            self.image_height as u32,
        )?;
        let extr = CameraExtrinsics {
            x: self.camera_x,
            y: self.camera_y,
            z: self.camera_z,
            roll: self.roll,
            pitch: self.pitch,
            yaw: self.yaw,
        };
        Ok(CameraRig::new(intr, extr, RotationConvention::VehicleToOptical)?)
    }

    /// How far the vehicle has moved along world X by `frame`.
    pub fn travel(&self, frame: usize) -> f64 {
        frame as f64 * self.speed / self.frame_rate
    }

    /// The calibration JSON the training pipeline parses.
    pub fn calibration_json(&self) -> String {
        serde_json::json!({
            "intrinsic": { "fx": self.fx, "fy": self.fy, "u0": self.u0, "v0": self.v0 },
            "extrinsic": {
                "x": self.camera_x, "y": self.camera_y, "z": self.camera_z,
                "roll": self.roll, "pitch": self.pitch, "yaw": self.yaw,
            },
        })
        .to_string()
    }
}

fn hash01(key: u64) -> f64 {
    let mut z = key.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let key = seed
        .wrapping_mul(0x100000001B3)
        .wrapping_add(octave.wrapping_mul(0xD6E8FEB86659FD93))
        ^ (ix as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2AE3D27D4EB4F);
    hash01(key)
}

/// Seeded multi-octave value noise in [0, 1], anchored in world meters so
/// that a moving camera sees the texture move exactly with the world.
/// The finest octave puts trackable gradient detail at pavement scale;
/// the coarse octaves keep structure visible at low pyramid resolutions.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    const OCTAVES: [(f64, f64); 4] = [(0.08, 0.22), (0.25, 0.26), (0.7, 0.24), (2.0, 0.28)];
    let mut v = 0.0;
    for (o, &(cell, weight)) in OCTAVES.iter().enumerate() {
        let (gx, gy) = (x / cell, y / cell);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let top = lattice(seed, o as u64, ix, iy) * (1.0 - fx)
            + lattice(seed, o as u64, ix + 1, iy) * fx;
        let bot = lattice(seed, o as u64, ix, iy + 1) * (1.0 - fx)
            + lattice(seed, o as u64, ix + 1, iy + 1) * fx;
        v += weight * (top * (1.0 - fy) + bot * fy);
    }
    v
}

/// World-space ray through one pixel center: origin and direction.
struct PixelRay {
    origin: [f64; 3],
    dir: [f64; 3],
}

/// Precomputed per-frame raycasting state.
struct FrameGeometry {
    rays_dir: Vec<[f64; 3]>,
    origin: [f64; 3],
    width: usize,
}

impl FrameGeometry {
    fn new(spec: &SceneSpec, rig: &CameraRig, frame: usize) -> Self {
        let (w, h) = (spec.image_width, spec.image_height);
        // World rotation equals the rig's vehicle-to-camera rotation because
        // the vehicle stays aligned with the world axes; directions are
        // R^T K^-1 (u, v, 1).
        let r = rig.rotation;
        let origin = [
            spec.camera_x + spec.travel(frame),
            spec.camera_y,
            spec.camera_z,
        ];
        let mut rays_dir = Vec::with_capacity(w * h);
        for py in 0..h {
            for px in 0..w {
                let u = px as f64 + 0.5;
                let v = py as f64 + 0.5;
                let cam = [(u - spec.u0) / spec.fx, (v - spec.v0) / spec.fy, 1.0];
                // R^T * cam.
                let dir = [
                    r[(0, 0)] * cam[0] + r[(1, 0)] * cam[1] + r[(2, 0)] * cam[2],
                    r[(0, 1)] * cam[0] + r[(1, 1)] * cam[1] + r[(2, 1)] * cam[2],
                    r[(0, 2)] * cam[0] + r[(1, 2)] * cam[1] + r[(2, 2)] * cam[2],
                ];
                rays_dir.push(dir);
            }
        }
        Self {
            rays_dir,
            origin,
            width: w,
        }
    }

    fn ray(&self, px: usize, py: usize) -> PixelRay {
        PixelRay {
            origin: self.origin,
            dir: self.rays_dir[py * self.width + px],
        }
    }
}

/// Ground-plane hit point of a ray, if it hits in front of the camera.
fn ground_hit(ray: &PixelRay) -> Option<(f64, f64)> {
    let dz = ray.dir[2];
    if dz >= -1e-12 {
        return None;
    }
    let t = -ray.origin[2] / dz;
    Some((
        ray.origin[0] + t * ray.dir[0],
        ray.origin[1] + t * ray.dir[1],
    ))
}

/// Entry distance of a ray into an obstacle box, if any, by the slab method.
fn box_hit(ray: &PixelRay, b: &ObstacleBox) -> Option<(f64, [f64; 3])> {
    let mut t_near = 0.0f64;
    let mut t_far = f64::INFINITY;
    let bounds = [
        (b.x_min, b.x_max),
        (b.y_min, b.y_max),
        (0.0, b.height),
    ];
    for axis in 0..3 {
        let (lo, hi) = bounds[axis];
        let o = ray.origin[axis];
        let d = ray.dir[axis];
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((lo - o) / d, (hi - o) / d);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_near <= 0.0 {
        return None;
    }
    let p = [
        ray.origin[0] + t_near * ray.dir[0],
        ray.origin[1] + t_near * ray.dir[1],
        ray.origin[2] + t_near * ray.dir[2],
    ];
    Some((t_near, p))
}

fn shade(spec: &SceneSpec, ray: &PixelRay, py: usize) -> [f64; 3] {
    // Nearest obstacle, if any.
    let mut best: Option<(f64, usize, [f64; 3])> = None;
    for (i, b) in spec.obstacles.iter().enumerate() {
        if let Some((t, p)) = box_hit(ray, b) {
            if best.map_or(true, |(bt, _, _)| t < bt) {
                best = Some((t, i, p));
            }
        }
    }
    let ground = ground_hit(ray);
    let ground_t = ground.map(|_| -ray.origin[2] / ray.dir[2]);

    if let Some((t_box, idx, p)) = best {
        if ground_t.map_or(true, |tg| t_box < tg) {
            let n = value_noise(
                spec.road_seed ^ 0xB0B0_0000u64.wrapping_add(idx as u64),
                p[0] + p[2] * 1.7,
                p[1] - p[2] * 1.3,
            );
            let lum = 0.40 + 0.12 * n;
            return [lum, lum, lum];
        }
    }

    match ground {
        Some((gx, gy)) => {
            if gy.abs() <= spec.road_half_width {
                let n = value_noise(spec.road_seed, gx, gy);
                let lum = 0.22 + 0.12 * n;
                [0.95 * lum, lum, 1.08 * lum]
            } else {
                let n = value_noise(spec.offroad_seed, gx, gy);
                let lum = 0.56 + 0.12 * n;
                [1.05 * lum, lum, 0.80 * lum]
            }
        }
        None => {
            // Sky: a smooth vertical gradient, brighter near the top.
            let g = 0.06 * (1.0 - py as f64 / spec.image_height as f64);
            [0.70 + g, 0.76 + g, 0.86 + g]
        }
    }
}

/// Renders one frame. Pure: same spec and frame index, same pixels.
pub fn render_frame(spec: &SceneSpec, frame: usize) -> Result<RgbImage, SynthError> {
    spec.validate()?;
    let rig = spec.rig()?;
    let geom = FrameGeometry::new(spec, &rig, frame);
    let (w, h) = (spec.image_width, spec.image_height);
    let mut img = RgbImage::zeros(w, h);
    img.data
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(py, row)| {
            for px in 0..w {
                let rgb = shade(spec, &geom.ray(px, py), py);
                for c in 0..3 {
                    row[px * 3 + c] = rgb[c].clamp(0.0, 1.0);
                }
            }
        });
    Ok(img)
}

/// The true road mask of one frame: ROAD exactly where the pixel-center ray
/// hits the ground plane inside the road band, in front of the camera.
/// Obstacles are ignored by design; see the module docs.
pub fn exact_mask(spec: &SceneSpec, frame: usize) -> Result<BinaryMask, SynthError> {
    spec.validate()?;
    let rig = spec.rig()?;
    let geom = FrameGeometry::new(spec, &rig, frame);
    let (w, h) = (spec.image_width, spec.image_height);
    let mut road = vec![false; w * h];
    road.par_chunks_mut(w).enumerate().for_each(|(py, row)| {
        for (px, slot) in row.iter_mut().enumerate() {
            *slot = ground_hit(&geom.ray(px, py))
                .is_some_and(|(_, gy)| gy.abs() <= spec.road_half_width);
        }
    });
    Ok(BinaryMask {
        width: w,
        height: h,
        road,
    })
}

/// Canonical zero-padded frame file stem.
pub fn frame_id(frame: usize) -> String {
    format!("{frame:06}")
}

/// Renders the whole sequence into `out_dir` using the training pipeline's
/// dataset layout: `<out>/<frame_id>.png` frames, `camera/<frame_id>.json`
/// calibrations, `vehicle/<frame_id>.json` speeds, and `gt/<frame_id>.png`
/// ground-truth masks (0 = not road, 255 = road).
pub fn render_sequence(spec: &SceneSpec, out_dir: &Path) -> Result<(), SynthError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join("camera"))?;
    std::fs::create_dir_all(out_dir.join("vehicle"))?;
    std::fs::create_dir_all(out_dir.join("gt"))?;

    let calibration = spec.calibration_json();
    let speed_json = serde_json::json!({ "speed": spec.speed }).to_string();
    let results: Vec<Result<(), SynthError>> = (0..spec.frame_count)
        .into_par_iter()
        .map(|f| {
            let id = frame_id(f);
            render_frame(spec, f)?.save_png(&out_dir.join(format!("{id}.png")))?;
            exact_mask(spec, f)?.save_png(&out_dir.join("gt").join(format!("{id}.png")))?;
            std::fs::write(out_dir.join("camera").join(format!("{id}.json")), &calibration)?;
            std::fs::write(out_dir.join("vehicle").join(format!("{id}.json")), &speed_json)?;
            Ok(())
        })
        .collect();
    results.into_iter().collect()
}
