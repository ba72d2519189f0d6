//! Geometric weak labels: rasterizing the two regions whose ground-truth is
//! known without any annotation.
//!
//! Everything strictly above the horizon is NONROAD (road lives on the
//! ground plane), and the small rectangle of ground the car is about to
//! drive over is ROAD. Every other pixel is IGNORE and contributes nothing
//! to the loss.
//!
//! Rasterization is defined on pixel centers: pixel `(i, j)` is tested at
//! `(i + 0.5, j + 0.5)`. A pixel is NONROAD iff its center lies strictly on
//! the sky side of the horizon line; it is ROAD iff its center is inside the
//! projected road rectangle under the even-odd rule with boundary ties
//! resolved top-left (an edge is owned by the pixel to its right/below).
//! The two regions cannot overlap for a valid rig, since the projected
//! rectangle is an image of ground points and therefore below the horizon.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{CameraRig, GeometryError, ImageQuad, VehicleParams};

/// Grayscale PNG value for NONROAD pixels.
pub const PNG_NONROAD: u8 = 0;
/// Grayscale PNG value for IGNORE pixels.
pub const PNG_IGNORE: u8 = 128;
/// Grayscale PNG value for ROAD pixels.
pub const PNG_ROAD: u8 = 255;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mask has no {region} pixels for this rig and image size")]
    EmptyRegion { region: &'static str },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to encode {path}: {source}")]
    Encode {
        path: String,
        source: image::ImageError,
    },
    #[error("{path} is not an 8-bit grayscale PNG")]
    NotGrayscale { path: String },
    #[error("{path} has pixel value {value} at ({x}, {y}); expected {expected}")]
    BadPixelValue {
        path: String,
        value: u8,
        x: u32,
        y: u32,
        expected: &'static str,
    },
    #[error("mask dimensions {width}x{height} are invalid")]
    BadDimensions { width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    NonRoad,
    Ignore,
    Road,
}

/// Sparse supervision mask: most pixels are IGNORE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Label>,
}

impl PartialMask {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    /// (road, nonroad, ignore) pixel counts; always sums to width * height.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for l in &self.labels {
            match l {
                Label::Road => c.0 += 1,
                Label::NonRoad => c.1 += 1,
                Label::Ignore => c.2 += 1,
            }
        }
        c
    }

    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let buf: Vec<u8> = self
            .labels
            .iter()
            .map(|l| match l {
                Label::NonRoad => PNG_NONROAD,
                Label::Ignore => PNG_IGNORE,
                Label::Road => PNG_ROAD,
            })
            .collect();
        save_gray_exact(path, self.width, self.height, buf)
    }

    pub fn load_png(path: &Path) -> Result<Self, MaskError> {
        let (width, height, raw) = load_gray_exact(path)?;
        let mut labels = Vec::with_capacity(raw.len());
        for (i, &v) in raw.iter().enumerate() {
            labels.push(match v {
                PNG_NONROAD => Label::NonRoad,
                PNG_IGNORE => Label::Ignore,
                PNG_ROAD => Label::Road,
                other => {
                    return Err(MaskError::BadPixelValue {
                        path: path.display().to_string(),
                        value: other,
                        x: (i % width) as u32,
                        y: (i / width) as u32,
                        expected: "0 (NONROAD), 128 (IGNORE) or 255 (ROAD)",
                    })
                }
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }
}

/// Dense binary road mask (ground truth or thresholded prediction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    /// true = road.
    pub road: Vec<bool>,
}

impl BinaryMask {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut road = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                road.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            road,
        }
    }

    #[inline]
    pub fn is_road(&self, x: usize, y: usize) -> bool {
        self.road[y * self.width + x]
    }

    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let buf: Vec<u8> = self.road.iter().map(|&r| if r { 255 } else { 0 }).collect();
        save_gray_exact(path, self.width, self.height, buf)
    }

    pub fn load_png(path: &Path) -> Result<Self, MaskError> {
        let (width, height, raw) = load_gray_exact(path)?;
        let mut road = Vec::with_capacity(raw.len());
        for (i, &v) in raw.iter().enumerate() {
            road.push(match v {
                0 => false,
                255 => true,
                other => {
                    return Err(MaskError::BadPixelValue {
                        path: path.display().to_string(),
                        value: other,
                        x: (i % width) as u32,
                        y: (i / width) as u32,
                        expected: "0 or 255",
                    })
                }
            });
        }
        Ok(Self {
            width,
            height,
            road,
        })
    }
}

fn save_gray_exact(
    path: &Path,
    width: usize,
    height: usize,
    buf: Vec<u8>,
) -> Result<(), MaskError> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, buf).ok_or(
        MaskError::BadDimensions {
            width: width as u32,
            height: height as u32,
        },
    )?;
    img.save(path).map_err(|source| MaskError::Encode {
        path: path.display().to_string(),
        source,
    })
}

fn load_gray_exact(path: &Path) -> Result<(usize, usize, Vec<u8>), MaskError> {
    let dynimg = image::open(path).map_err(|source| MaskError::Decode {
        path: path.display().to_string(),
        source,
    })?;
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => Ok((
            img.width() as usize,
            img.height() as usize,
            img.into_raw(),
        )),
        _ => Err(MaskError::NotGrayscale {
            path: path.display().to_string(),
        }),
    }
}

/// Even-odd point-in-polygon with top-left boundary ownership: crossings are
/// counted strictly to the right of the query point on half-open edge spans,
/// which puts centers on a left edge inside, on a right edge outside, on a
/// top edge inside and on a bottom edge outside.
pub fn point_in_quad(quad: &ImageQuad, px: f64, py: f64) -> bool {
    let v = &quad.vertices;
    let mut inside = false;
    let mut j = 3;
    for i in 0..4 {
        let (xi, yi) = (v[i][0], v[i][1]);
        let (xj, yj) = (v[j][0], v[j][1]);
        if (yi > py) != (yj > py) {
            let xint = xi + (py - yi) * (xj - xi) / (yj - yi);
            if px < xint {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Rasterizes the weak-label mask for one frame.
///
/// Fails with [`MaskError::EmptyRegion`] when either labeled region comes out
/// empty (a mask that cannot supervise both classes is useless downstream).
pub fn rasterize_partial_mask(
    rig: &CameraRig,
    vehicle: &VehicleParams,
    near_m: f64,
    far_m: f64,
) -> Result<PartialMask, MaskError> {
    let width = rig.intrinsics.image_width as usize;
    let height = rig.intrinsics.image_height as usize;
    let horizon = rig.horizon_line()?;
    let quad = rig.road_quadrilateral(vehicle, near_m, far_m)?;

    // Orient the horizon: the projection of the rectangle's center ground
    // point tells us which sign is the road side.
    let mid = nalgebra::Vector3::new(vehicle.front_bumper + (near_m + far_m) / 2.0, 0.0, 0.0);
    let (mu, mv) = rig.project_point(mid)?;
    let road_sign = horizon.eval(mu, mv);
    assert!(road_sign != 0.0, "reference ground point sits on the horizon");

    let mut labels = vec![Label::Ignore; width * height];
    labels
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            let cy = y as f64 + 0.5;
            for (x, out) in row.iter_mut().enumerate() {
                let cx = x as f64 + 0.5;
                let s = horizon.eval(cx, cy);
                if s != 0.0 && s.signum() != road_sign.signum() {
                    *out = Label::NonRoad;
                } else if point_in_quad(&quad, cx, cy) {
                    *out = Label::Road;
                }
            }
        });

    let mask = PartialMask {
        width,
        height,
        labels,
    };
    let (road, nonroad, _) = mask.counts();
    if road == 0 {
        return Err(MaskError::EmptyRegion { region: "ROAD" });
    }
    if nonroad == 0 {
        return Err(MaskError::EmptyRegion { region: "NONROAD" });
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraExtrinsics, CameraIntrinsics, CameraRig, RotationConvention};

    fn rig(
        width: u32,
        height: u32,
        f: f64,
        pitch: f64,
    ) -> CameraRig {
        let intr = CameraIntrinsics::new(
            f,
            f,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
        .unwrap();
        let extr = CameraExtrinsics {
            x: 0.0,
            y: 0.0,
            z: 1.2,
            roll: 0.0,
            pitch,
            yaw: 0.0,
        };
        CameraRig::new(intr, extr, RotationConvention::VehicleToOptical).unwrap()
    }

    #[test]
    fn level_camera_marks_exactly_the_top_half_nonroad() {
        let r = rig(1920, 1080, 1000.0, 0.0);
        let mask = rasterize_partial_mask(&r, &VehicleParams::default(), 2.0, 5.0).unwrap();
        for y in 0..540 {
            for x in 0..1920 {
                assert_eq!(mask.label(x, y), Label::NonRoad, "({x},{y})");
            }
        }
        for x in 0..1920 {
            assert_ne!(mask.label(x, 540), Label::NonRoad);
        }
        let (road, nonroad, ignore) = mask.counts();
        assert_eq!(nonroad, 1920 * 540);
        assert!(road > 0);
        assert_eq!(road + nonroad + ignore, 1920 * 1080);
    }

    // Independent oracle: winding number by signed-angle accumulation.
    fn winding_inside(quad: &ImageQuad, px: f64, py: f64) -> bool {
        let mut total = 0.0f64;
        for i in 0..4 {
            let a = quad.vertices[i];
            let b = quad.vertices[(i + 1) % 4];
            let (ax, ay) = (a[0] - px, a[1] - py);
            let (bx, by) = (b[0] - px, b[1] - py);
            total += (ax * by - ay * bx).atan2(ax * bx + ay * by);
        }
        total.abs() > std::f64::consts::PI
    }

    #[test]
    fn quad_fill_matches_winding_number_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..10 {
            // Random simple quad: four random points ordered by angle about
            // their centroid. Random floats keep pixel centers off the edges.
            let mut pts: Vec<[f64; 2]> = (0..4)
                .map(|_| [rng.gen_range(2.0..62.0), rng.gen_range(2.0..46.0)])
                .collect();
            let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
            let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
            pts.sort_by(|p, q| {
                let pa = (p[1] - cy).atan2(p[0] - cx);
                let qa = (q[1] - cy).atan2(q[0] - cx);
                pa.partial_cmp(&qa).unwrap()
            });
            let quad = ImageQuad {
                vertices: [pts[0], pts[1], pts[2], pts[3]],
            };
            for y in 0..48 {
                for x in 0..64 {
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    assert_eq!(
                        point_in_quad(&quad, cx, cy),
                        winding_inside(&quad, cx, cy),
                        "case {case}, pixel ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn boundary_ties_are_owned_top_left() {
        // Axis-aligned unit-square-grid quad: edges pass exactly through
        // pixel centers at 10.5 / 20.5.
        let quad = ImageQuad {
            vertices: [
                [10.5, 20.5],
                [20.5, 20.5],
                [20.5, 10.5],
                [10.5, 10.5],
            ],
        };
        assert!(point_in_quad(&quad, 10.5, 15.5)); // left edge: inside
        assert!(!point_in_quad(&quad, 20.5, 15.5)); // right edge: outside
        assert!(point_in_quad(&quad, 15.5, 10.5)); // top edge: inside
        assert!(!point_in_quad(&quad, 15.5, 20.5)); // bottom edge: outside
        assert!(point_in_quad(&quad, 10.5, 10.5)); // top-left corner
        assert!(!point_in_quad(&quad, 20.5, 20.5)); // bottom-right corner
    }

    #[test]
    fn nonroad_count_is_monotone_along_the_pitch_grid() {
        // Raising pitch moves the horizon down the image, so the sky region
        // can only grow.
        let mut last = 0usize;
        for step in 0..9 {
            let pitch = -0.12 + 0.03 * step as f64;
            let r = rig(256, 128, 150.0, pitch);
            let mask = rasterize_partial_mask(&r, &VehicleParams::default(), 2.0, 5.0).unwrap();
            let (_, nonroad, _) = mask.counts();
            assert!(
                nonroad >= last,
                "pitch {pitch}: nonroad {nonroad} < previous {last}"
            );
            last = nonroad;
        }
    }

    #[test]
    fn road_pixels_backproject_into_the_road_band() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let vehicle = VehicleParams {
            width: 1.8,
            front_bumper: 2.0,
        };
        for _ in 0..10 {
            let f = rng.gen_range(120.0..300.0);
            let intr = CameraIntrinsics::new(
                f,
                f * rng.gen_range(0.95..1.05),
                rng.gen_range(100.0..156.0),
                rng.gen_range(40.0..88.0),
                256,
                128,
            )
            .unwrap();
            let extr = CameraExtrinsics {
                x: rng.gen_range(-0.3..0.3),
                y: rng.gen_range(-0.2..0.2),
                z: rng.gen_range(0.8..1.8),
                roll: rng.gen_range(-0.05..0.05),
                pitch: rng.gen_range(-0.05..0.05),
                yaw: rng.gen_range(-0.05..0.05),
            };
            let r = CameraRig::new(intr, extr, RotationConvention::VehicleToOptical).unwrap();
            let mask = rasterize_partial_mask(&r, &vehicle, 2.0, 5.0).unwrap();
            // Backproject every ROAD center through the ground plane and
            // check it lands inside the known rectangle.
            let rinv = r.rotation.transpose();
            let kinv = r.intrinsics.matrix().try_inverse().unwrap();
            let cam = r.position();
            for y in 0..128 {
                for x in 0..256 {
                    if mask.label(x, y) != Label::Road {
                        continue;
                    }
                    let px = nalgebra::Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
                    let dir = rinv * (kinv * px);
                    let t = -cam.z / dir.z;
                    assert!(t > 0.0);
                    let gx = cam.x + t * dir.x;
                    let gy = cam.y + t * dir.y;
                    assert!(
                        gx >= 4.0 - 1e-9 && gx <= 7.0 + 1e-9,
                        "({x},{y}) -> gx {gx}"
                    );
                    assert!(gy.abs() <= 0.9 + 1e-9, "({x},{y}) -> gy {gy}");
                }
            }
        }
    }

    #[test]
    fn empty_regions_are_rejected() {
        // Pitch far down: the horizon leaves the top of the image, nothing
        // is NONROAD.
        let r = rig(1920, 1080, 1000.0, -0.5);
        assert!(matches!(
            rasterize_partial_mask(&r, &VehicleParams::default(), 2.0, 5.0),
            Err(MaskError::EmptyRegion { region: "NONROAD" })
        ));
        // Strong yaw on a narrow sensor: the quad projects outside the image.
        let intr = CameraIntrinsics::new(400.0, 400.0, 64.0, 64.0, 128, 128).unwrap();
        let extr = CameraExtrinsics {
            x: 0.0,
            y: 0.0,
            z: 1.2,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.9,
        };
        let r = CameraRig::new(intr, extr, RotationConvention::VehicleToOptical).unwrap();
        assert!(matches!(
            rasterize_partial_mask(&r, &VehicleParams::default(), 2.0, 5.0),
            Err(MaskError::EmptyRegion { region: "ROAD" })
        ));
    }

    #[test]
    fn partial_mask_png_round_trip_is_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<Label> = (0..24 * 16)
            .map(|_| match rng.gen_range(0..3) {
                0 => Label::NonRoad,
                1 => Label::Ignore,
                _ => Label::Road,
            })
            .collect();
        let mask = PartialMask {
            width: 24,
            height: 16,
            labels,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        mask.save_png(&path).unwrap();
        let back = PartialMask::load_png(&path).unwrap();
        assert_eq!(mask, back);
    }

    #[test]
    fn unexpected_png_content_is_rejected() {
        let dir = tempfile::tempdir().unwrap();

        let bad_value = dir.path().join("bad_value.png");
        image::GrayImage::from_raw(4, 4, vec![7u8; 16])
            .unwrap()
            .save(&bad_value)
            .unwrap();
        match PartialMask::load_png(&bad_value) {
            Err(MaskError::BadPixelValue { value: 7, x: 0, y: 0, .. }) => {}
            other => panic!("expected BadPixelValue, got {other:?}"),
        }

        let rgb = dir.path().join("rgb.png");
        image::RgbImage::from_raw(4, 4, vec![0u8; 48])
            .unwrap()
            .save(&rgb)
            .unwrap();
        assert!(matches!(
            PartialMask::load_png(&rgb),
            Err(MaskError::NotGrayscale { .. })
        ));

        let missing = dir.path().join("missing.png");
        assert!(matches!(
            PartialMask::load_png(&missing),
            Err(MaskError::Decode { .. })
        ));
    }

    #[test]
    fn binary_mask_png_round_trip_is_exact() {
        let mask = BinaryMask::from_fn(17, 9, |x, y| (x + y) % 3 == 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.png");
        mask.save_png(&path).unwrap();
        assert_eq!(BinaryMask::load_png(&path).unwrap(), mask);
        let gray = dir.path().join("gray.png");
        image::GrayImage::from_raw(2, 2, vec![0, 255, 128, 0])
            .unwrap()
            .save(&gray)
            .unwrap();
        assert!(matches!(
            BinaryMask::load_png(&gray),
            Err(MaskError::BadPixelValue { value: 128, .. })
        ));
    }
}
