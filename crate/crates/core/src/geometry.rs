//! Camera rig geometry: building a vehicle-frame projection from a
//! Cityscapes-style calibration, and deriving the two image-space primitives
//! the weak labeler needs (the horizon line and the road rectangle in front
//! of the car).
//!
//! # Frames and conventions
//!
//! * **Vehicle frame**: origin on the ground under the center of the rear
//!   axle, X forward, Y left, Z up. All world points handed to this module
//!   are vehicle-frame coordinates in meters.
//! * **Camera frame**: X right, Y down, Z along the optical axis (standard
//!   pinhole). Pixel `u` grows right, `v` grows down.
//! * **Extrinsics** `(x, y, z, roll, pitch, yaw)`: the camera sits at
//!   `(x, y, z)` in the vehicle frame (so `z` is its height above ground) and
//!   the angles are frame rotations about the vehicle X, Y, Z axes.
//!
//! The vehicle-to-camera rotation is the transposed product of the three
//! elementary frame rotations, `(Rz(yaw) * Ry(pitch) * Rx(roll))^T`, composed
//! with a fixed axis permutation `cam(x, y, z) = (-Y_v, -Z_v, X_v)` so that
//! zero angles mean "camera level, looking along vehicle X". Consequences
//! worth memorizing:
//!
//! * zero angles, camera height `h`: a ground point `(X, 0, 0)` projects to
//!   `(u0, v0 + fy * h / X)`;
//! * pitch `d` alone moves the horizon to `v = v0 + f * tan(d)` (positive
//!   pitch tilts the optical axis up, so the horizon drops in the image);
//! * roll `r` alone tilts the horizon to slope `(fy / fx) * tan(r)`;
//! * yaw `y` alone moves the forward vanishing point to `u = u0 - f * tan(y)`.
//!
//! [`RotationConvention::Raw`] drops the axis permutation for anyone probing
//! the bare roll/pitch/yaw composition; with it, zero angles point the
//! optical axis along vehicle Z (straight up), which is rarely what you want.
//!
//! Homogeneous pixel coordinates use the convention that pixel `(i, j)`
//! covers `[i, i+1) x [j, j+1)`, i.e. continuous coordinate `(i + 0.5,
//! j + 0.5)` is the center of pixel `(i, j)`.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::Deserialize;
use thiserror::Error;

/// Depth threshold below which a point counts as "on or behind the camera
/// plane" and refuses to project.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-9;

/// Road rectangle near edge, meters ahead of the front bumper.
pub const DEFAULT_QUAD_NEAR_M: f64 = 2.0;
/// Road rectangle far edge, meters ahead of the front bumper.
pub const DEFAULT_QUAD_FAR_M: f64 = 5.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid calibration: {field}: {reason}")]
    InvalidCalibration { field: &'static str, reason: String },
    #[error("calibration JSON is missing key \"{key}\"")]
    MissingKey { key: &'static str },
    #[error("calibration JSON is malformed: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error("point is on or behind the camera plane (depth <= {MIN_PROJECTION_DEPTH})")]
    Unprojectable,
    #[error("horizon is degenerate for this rig (ground vanishing line has no finite direction)")]
    DegenerateHorizon,
    #[error("road rectangle corner projects behind the camera")]
    QuadBehindCamera,
}

/// Pinhole intrinsics tied to a concrete sensor size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        u0: f64,
        v0: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let c = Self {
            fx,
            fy,
            u0,
            v0,
            image_width,
            image_height,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let bad = |field: &'static str, reason: String| {
            Err(GeometryError::InvalidCalibration { field, reason })
        };
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size", "must be nonzero".into());
        }
        if !(self.fx.is_finite() && self.fx > 0.0) {
            return bad("fx", format!("must be finite and > 0, got {}", self.fx));
        }
        if !(self.fy.is_finite() && self.fy > 0.0) {
            return bad("fy", format!("must be finite and > 0, got {}", self.fy));
        }
        if !(self.u0.is_finite() && self.u0 >= 0.0 && self.u0 < self.image_width as f64) {
            return bad("u0", format!("must lie in [0, image_width), got {}", self.u0));
        }
        if !(self.v0.is_finite() && self.v0 >= 0.0 && self.v0 < self.image_height as f64) {
            return bad("v0", format!("must lie in [0, image_height), got {}", self.v0));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.u0, 0.0, self.fy, self.v0, 0.0, 0.0, 1.0)
    }
}

/// Camera pose in the vehicle frame: position in meters, frame-rotation
/// angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl CameraExtrinsics {
    fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.x, self.y, self.z, self.roll, self.pitch, self.yaw];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidCalibration {
                field: "extrinsic",
                reason: "all fields must be finite".into(),
            });
        }
        if self.z <= 0.0 {
            return Err(GeometryError::InvalidCalibration {
                field: "z",
                reason: format!("camera height must be > 0 (above ground), got {}", self.z),
            });
        }
        Ok(())
    }
}

/// Car footprint: overall width and the distance from the rear axle to the
/// front bumper, both in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub width: f64,
    pub front_bumper: f64,
}

impl Default for VehicleParams {
    /// Compact-car placeholder, good enough for synthetic scenes.
    fn default() -> Self {
        Self {
            width: 1.8,
            front_bumper: 2.0,
        }
    }
}

/// Whether to compose the roll/pitch/yaw rotation with the vehicle-to-optical
/// axis permutation (the default) or use it bare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationConvention {
    /// `cam(x, y, z) = (-Y_v, -Z_v, X_v)` after the angle rotation: zero
    /// angles look forward along vehicle X, upright.
    #[default]
    VehicleToOptical,
    /// Bare `(Rz * Ry * Rx)^T`: zero angles leave the camera axes equal to
    /// the vehicle axes (optical axis pointing up).
    Raw,
}

/// Fixed permutation mapping vehicle axes to camera axes: X -> z, Y -> -x,
/// Z -> -y.
fn axis_permutation() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

/// Elementary frame rotation about X: coordinates of a fixed vector in a
/// frame rotated by `a` around the X axis.
fn frame_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

fn frame_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

fn frame_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Vehicle-to-camera rotation for the given angles.
///
/// The camera-to-vehicle rotation is `Rz(yaw) * Ry(pitch) * Rx(roll)` in
/// elementary frame rotations; this returns its transpose, left-multiplied by
/// the axis permutation unless `convention` is [`RotationConvention::Raw`].
pub fn rotation_from_rpy(
    roll: f64,
    pitch: f64,
    yaw: f64,
    convention: RotationConvention,
) -> Matrix3<f64> {
    let cam_to_vehicle = frame_rot_z(yaw) * frame_rot_y(pitch) * frame_rot_x(roll);
    let r = cam_to_vehicle.transpose();
    match convention {
        RotationConvention::VehicleToOptical => axis_permutation() * r,
        RotationConvention::Raw => r,
    }
}

/// Image line `a*u + b*v + c = 0` in canonical form: `a^2 + b^2 = 1` and
/// `b >= 0` (with `a >= 0` when `b == 0`), so equal lines compare equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ImageLine {
    /// Canonicalizes an arbitrary homogeneous line triple. Returns `None`
    /// when the triple has no finite direction (`a` and `b` both ~ 0).
    pub fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let n = a.hypot(b);
        if n <= 1e-9 * c.abs().max(1.0) {
            return None;
        }
        let (mut a, mut b, mut c) = (a / n, b / n, c / n);
        if b < 0.0 || (b == 0.0 && a < 0.0) {
            a = -a;
            b = -b;
            c = -c;
        }
        Some(Self { a, b, c })
    }

    /// Signed distance-like evaluation; zero on the line, sign tells the side.
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.a * u + self.b * v + self.c
    }
}

/// Projected road rectangle, vertices in pixel coordinates ordered
/// near-left, near-right, far-right, far-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageQuad {
    pub vertices: [[f64; 2]; 4],
}

impl ImageQuad {
    pub fn near_left(&self) -> [f64; 2] {
        self.vertices[0]
    }
    pub fn near_right(&self) -> [f64; 2] {
        self.vertices[1]
    }
    pub fn far_right(&self) -> [f64; 2] {
        self.vertices[2]
    }
    pub fn far_left(&self) -> [f64; 2] {
        self.vertices[3]
    }
}

/// Calibrated camera with precomposed projection.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    /// Vehicle-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// `-rotation * camera_position`; camera-frame coords of a vehicle point
    /// `p` are `rotation * p + translation`.
    pub translation: Vector3<f64>,
    /// `K * [rotation | translation]`.
    pub projection: Matrix3x4<f64>,
}

impl CameraRig {
    pub fn new(
        intrinsics: CameraIntrinsics,
        extrinsics: CameraExtrinsics,
        convention: RotationConvention,
    ) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        extrinsics.validate()?;
        let rotation = rotation_from_rpy(
            extrinsics.roll,
            extrinsics.pitch,
            extrinsics.yaw,
            convention,
        );
        let position = Vector3::new(extrinsics.x, extrinsics.y, extrinsics.z);
        let translation = -rotation * position;
        let k = intrinsics.matrix();
        let rt = Matrix3x4::from_columns(&[
            rotation.column(0).into_owned(),
            rotation.column(1).into_owned(),
            rotation.column(2).into_owned(),
            translation,
        ]);
        let projection = k * rt;
        Ok(Self {
            intrinsics,
            extrinsics,
            rotation,
            translation,
            projection,
        })
    }

    /// Camera position in the vehicle frame.
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.extrinsics.x, self.extrinsics.y, self.extrinsics.z)
    }

    /// Projects a vehicle-frame point to pixel coordinates.
    pub fn project_point(&self, p: Vector3<f64>) -> Result<(f64, f64), GeometryError> {
        let h = self.projection * Vector4::new(p.x, p.y, p.z, 1.0);
        if h.z <= MIN_PROJECTION_DEPTH {
            return Err(GeometryError::Unprojectable);
        }
        Ok((h.x / h.z, h.y / h.z))
    }

    /// Image of the ground plane's line at infinity: the line through the
    /// projections of the homogeneous directions `(1, 0, 0, 0)` and
    /// `(0, 1, 0, 0)`. Independent of camera height by construction.
    pub fn horizon_line(&self) -> Result<ImageLine, GeometryError> {
        let k = self.intrinsics.matrix();
        let h1 = k * self.rotation.column(0).into_owned();
        let h2 = k * self.rotation.column(1).into_owned();
        let line = h1.cross(&h2);
        ImageLine::new(line.x, line.y, line.z).ok_or(GeometryError::DegenerateHorizon)
    }

    /// Projects the known-road rectangle: a car-width band on the ground from
    /// `near_m` to `far_m` meters ahead of the front bumper.
    pub fn road_quadrilateral(
        &self,
        vehicle: &VehicleParams,
        near_m: f64,
        far_m: f64,
    ) -> Result<ImageQuad, GeometryError> {
        assert!(
            near_m > 0.0 && far_m > near_m,
            "road rectangle range must satisfy 0 < near < far"
        );
        let x_near = vehicle.front_bumper + near_m;
        let x_far = vehicle.front_bumper + far_m;
        let hw = vehicle.width / 2.0;
        let corners = [
            Vector3::new(x_near, hw, 0.0),
            Vector3::new(x_near, -hw, 0.0),
            Vector3::new(x_far, -hw, 0.0),
            Vector3::new(x_far, hw, 0.0),
        ];
        let mut vertices = [[0.0; 2]; 4];
        for (i, c) in corners.iter().enumerate() {
            let (u, v) = self
                .project_point(*c)
                .map_err(|_| GeometryError::QuadBehindCamera)?;
            vertices[i] = [u, v];
        }
        Ok(ImageQuad { vertices })
    }
}

#[derive(Deserialize)]
struct RawIntrinsic {
    fx: Option<f64>,
    fy: Option<f64>,
    u0: Option<f64>,
    v0: Option<f64>,
}

#[derive(Deserialize)]
struct RawExtrinsic {
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    roll: Option<f64>,
    pitch: Option<f64>,
    yaw: Option<f64>,
}

#[derive(Deserialize)]
struct RawCalibration {
    intrinsic: Option<RawIntrinsic>,
    extrinsic: Option<RawExtrinsic>,
}

/// Parses a Cityscapes-style calibration JSON.
///
/// Expected shape: top-level `"intrinsic"` object with `fx, fy, u0, v0` and
/// `"extrinsic"` object with `x, y, z, roll, pitch, yaw`. Unknown keys are
/// ignored; a missing key is an error naming the key. The sensor size is not
/// part of the file and must be supplied by the caller.
pub fn parse_calibration(
    text: &str,
    image_width: u32,
    image_height: u32,
) -> Result<(CameraIntrinsics, CameraExtrinsics), GeometryError> {
    let raw: RawCalibration = serde_json::from_str(text)?;
    let intr = raw.intrinsic.ok_or(GeometryError::MissingKey { key: "intrinsic" })?;
    let extr = raw.extrinsic.ok_or(GeometryError::MissingKey { key: "extrinsic" })?;
    let need = |v: Option<f64>, key: &'static str| v.ok_or(GeometryError::MissingKey { key });
    let intrinsics = CameraIntrinsics::new(
        need(intr.fx, "intrinsic.fx")?,
        need(intr.fy, "intrinsic.fy")?,
        need(intr.u0, "intrinsic.u0")?,
        need(intr.v0, "intrinsic.v0")?,
        image_width,
        image_height,
    )?;
    let extrinsics = CameraExtrinsics {
        x: need(extr.x, "extrinsic.x")?,
        y: need(extr.y, "extrinsic.y")?,
        z: need(extr.z, "extrinsic.z")?,
        roll: need(extr.roll, "extrinsic.roll")?,
        pitch: need(extr.pitch, "extrinsic.pitch")?,
        yaw: need(extr.yaw, "extrinsic.yaw")?,
    };
    extrinsics.validate()?;
    Ok((intrinsics, extrinsics))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: textbook frame-rotation matrices multiplied by
    // hand, no nalgebra, no shared helpers.
    fn oracle_rotation(roll: f64, pitch: f64, yaw: f64, permuted: bool) -> [[f64; 3]; 3] {
        fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        }
        fn transpose(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = a[j][i];
                }
            }
            out
        }
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        let rx = [[1.0, 0.0, 0.0], [0.0, cr, sr], [0.0, -sr, cr]];
        let ry = [[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]];
        let rz = [[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]];
        let r = transpose(matmul(matmul(rz, ry), rx));
        if permuted {
            let perm = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
            matmul(perm, r)
        } else {
            r
        }
    }

    fn assert_mat_eq(m: &Matrix3<f64>, o: &[[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                let d = (m[(i, j)] - o[i][j]).abs();
                assert!(d <= tol, "entry ({i},{j}): {} vs {}", m[(i, j)], o[i][j]);
            }
        }
    }

    fn rig_1080p(extr: CameraExtrinsics) -> CameraRig {
        let intr = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0, 1920, 1080).unwrap();
        CameraRig::new(intr, extr, RotationConvention::VehicleToOptical).unwrap()
    }

    fn level_extr(z: f64) -> CameraExtrinsics {
        CameraExtrinsics {
            x: 0.0,
            y: 0.0,
            z,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }

    #[test]
    fn zero_angles_give_exact_axis_permutation() {
        let r = rotation_from_rpy(0.0, 0.0, 0.0, RotationConvention::VehicleToOptical);
        let expected = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
        assert_mat_eq(&r, &expected, 0.0);
        let raw = rotation_from_rpy(0.0, 0.0, 0.0, RotationConvention::Raw);
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_mat_eq(&raw, &id, 0.0);
    }

    #[test]
    fn rotation_matches_elementary_product_oracle() {
        for (roll, pitch, yaw) in [
            (0.01, -0.02, 0.03),
            (0.3, -0.6, 1.2),
            (-1.0, 0.4, -2.5),
            (0.0, 1.5, 0.0),
        ] {
            for permuted in [true, false] {
                let conv = if permuted {
                    RotationConvention::VehicleToOptical
                } else {
                    RotationConvention::Raw
                };
                let got = rotation_from_rpy(roll, pitch, yaw, conv);
                let want = oracle_rotation(roll, pitch, yaw, permuted);
                assert_mat_eq(&got, &want, 1e-15);
            }
        }
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation_from_rpy(0.3, -0.7, 2.0, RotationConvention::VehicleToOptical);
        let should_be_id = r * r.transpose();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((should_be_id[(i, j)] - want).abs() < 1e-15);
            }
        }
        assert!((r.determinant() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_ground_point_projects_to_known_pixel() {
        let rig = rig_1080p(level_extr(1.2));
        let (u, v) = rig.project_point(Vector3::new(10.0, 0.0, 0.0)).unwrap();
        assert!((u - 960.0).abs() < 1e-9, "u={u}");
        assert!((v - 660.0).abs() < 1e-9, "v={v}"); // v0 + fy * z / X = 540 + 120
    }

    #[test]
    fn translation_is_minus_rotation_times_position() {
        let extr = CameraExtrinsics {
            x: 0.5,
            y: -0.2,
            z: 1.3,
            roll: 0.02,
            pitch: -0.04,
            yaw: 0.1,
        };
        let rig = rig_1080p(extr);
        let want = -rig.rotation * Vector3::new(0.5, -0.2, 1.3);
        assert!((rig.translation - want).norm() < 1e-15);
        // The camera's own position must map to the camera-frame origin.
        let cam = rig.rotation * rig.position() + rig.translation;
        assert!(cam.norm() < 1e-15);
    }

    #[test]
    fn points_behind_or_on_camera_plane_are_unprojectable() {
        let rig = rig_1080p(level_extr(1.2));
        assert!(matches!(
            rig.project_point(Vector3::new(-5.0, 0.0, 0.0)),
            Err(GeometryError::Unprojectable)
        ));
        // Depth exactly at the threshold boundary still refuses.
        assert!(matches!(
            rig.project_point(Vector3::new(1e-10, 0.0, 0.0)),
            Err(GeometryError::Unprojectable)
        ));
    }

    #[test]
    fn level_camera_horizon_is_v_equals_v0() {
        let rig = rig_1080p(level_extr(1.5));
        let line = rig.horizon_line().unwrap();
        // Canonical form of v = 540: (0, 1, -540).
        assert!(line.a.abs() < 1e-12, "a={}", line.a);
        assert!((line.b - 1.0).abs() < 1e-12);
        assert!((line.c + 540.0).abs() < 1e-9);
    }

    #[test]
    fn pitch_moves_horizon_by_f_tan_pitch() {
        for delta in [0.05, -0.08, 0.2] {
            let mut extr = level_extr(1.2);
            extr.pitch = delta;
            let rig = rig_1080p(extr);
            let line = rig.horizon_line().unwrap();
            // Horizontal line: v at u0 is -(c + a*u0)/b.
            let v = -(line.c + line.a * 960.0) / line.b;
            let want = 540.0 + 1000.0 * delta.tan();
            assert!((v - want).abs() < 1e-9, "pitch {delta}: v={v} want={want}");
            assert!(line.a.abs() < 1e-12, "horizon should stay horizontal");
        }
    }

    #[test]
    fn roll_tilts_horizon_through_principal_point() {
        for rho in [0.1, -0.3] {
            let mut extr = level_extr(1.2);
            extr.roll = rho;
            let rig = rig_1080p(extr);
            let line = rig.horizon_line().unwrap();
            assert!(line.eval(960.0, 540.0).abs() < 1e-9);
            let slope = -line.a / line.b;
            assert!((slope - rho.tan()).abs() < 1e-12, "rho {rho}: slope={slope}");
        }
    }

    #[test]
    fn horizon_does_not_depend_on_camera_height() {
        let mut extr = level_extr(0.5);
        extr.roll = 0.03;
        extr.pitch = -0.06;
        extr.yaw = 0.2;
        let lo = rig_1080p(extr).horizon_line().unwrap();
        extr.z = 3.0;
        let hi = rig_1080p(extr).horizon_line().unwrap();
        assert!((lo.a - hi.a).abs() < 1e-12);
        assert!((lo.b - hi.b).abs() < 1e-12);
        assert!((lo.c - hi.c).abs() < 1e-9);
    }

    #[test]
    fn camera_pointing_straight_down_has_no_horizon() {
        // pitch = -pi/2 points the optical axis along -Z (straight down);
        // both ground directions then project to ideal points.
        let mut extr = level_extr(1.2);
        extr.pitch = -std::f64::consts::FRAC_PI_2;
        let rig = rig_1080p(extr);
        assert!(matches!(
            rig.horizon_line(),
            Err(GeometryError::DegenerateHorizon)
        ));
    }

    // Independent oracle: ground-plane homography H = K [r1 r2 t] built from
    // the hand-multiplied rotation, applied to (X, Y, 1) by hand.
    fn oracle_ground_to_pixel(
        fx: f64,
        fy: f64,
        u0: f64,
        v0: f64,
        extr: &CameraExtrinsics,
        gx: f64,
        gy: f64,
    ) -> [f64; 2] {
        let r = oracle_rotation(extr.roll, extr.pitch, extr.yaw, true);
        let mut t = [0.0; 3];
        for i in 0..3 {
            t[i] = -(r[i][0] * extr.x + r[i][1] * extr.y + r[i][2] * extr.z);
        }
        // h = K * (r1 * gx + r2 * gy + t)
        let mut cam = [0.0; 3];
        for i in 0..3 {
            cam[i] = r[i][0] * gx + r[i][1] * gy + t[i];
        }
        let hx = fx * cam[0] + u0 * cam[2];
        let hy = fy * cam[1] + v0 * cam[2];
        let hw = cam[2];
        [hx / hw, hy / hw]
    }

    #[test]
    fn quad_matches_ground_plane_homography_oracle() {
        let extr = CameraExtrinsics {
            x: 0.5,
            y: 0.1,
            z: 1.3,
            roll: 0.02,
            pitch: 0.03,
            yaw: -0.05,
        };
        let rig = rig_1080p(extr);
        let vehicle = VehicleParams {
            width: 1.8,
            front_bumper: 2.0,
        };
        let quad = rig
            .road_quadrilateral(&vehicle, DEFAULT_QUAD_NEAR_M, DEFAULT_QUAD_FAR_M)
            .unwrap();
        let ground = [
            (4.0, 0.9),
            (4.0, -0.9),
            (7.0, -0.9),
            (7.0, 0.9),
        ];
        for (vertex, (gx, gy)) in quad.vertices.iter().zip(ground) {
            let want = oracle_ground_to_pixel(1000.0, 1000.0, 960.0, 540.0, &extr, gx, gy);
            assert!(
                (vertex[0] - want[0]).abs() < 1e-9 && (vertex[1] - want[1]).abs() < 1e-9,
                "vertex {vertex:?} vs oracle {want:?}"
            );
        }
    }

    #[test]
    fn quad_is_symmetric_about_u0_for_centered_level_camera() {
        let rig = rig_1080p(level_extr(1.2));
        let vehicle = VehicleParams::default();
        let quad = rig.road_quadrilateral(&vehicle, 2.0, 5.0).unwrap();
        let [nl, nr, fr, fl] = quad.vertices;
        assert!((nl[0] + nr[0] - 2.0 * 960.0).abs() < 1e-9);
        assert!((fl[0] + fr[0] - 2.0 * 960.0).abs() < 1e-9);
        assert!((nl[1] - nr[1]).abs() < 1e-12);
        assert!((fl[1] - fr[1]).abs() < 1e-12);
        // Far edge sits higher in the image (smaller v) than the near edge.
        assert!(fl[1] < nl[1]);
    }

    #[test]
    fn quad_behind_camera_is_rejected() {
        let mut extr = level_extr(1.2);
        extr.yaw = std::f64::consts::PI; // camera looking backward
        let rig = rig_1080p(extr);
        assert!(matches!(
            rig.road_quadrilateral(&VehicleParams::default(), 2.0, 5.0),
            Err(GeometryError::QuadBehindCamera)
        ));
    }

    #[test]
    fn forward_ground_points_project_on_one_side_of_horizon() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let extr = CameraExtrinsics {
                x: rng.gen_range(-1.0..1.0),
                y: rng.gen_range(-0.5..0.5),
                z: rng.gen_range(0.5..3.0),
                roll: rng.gen_range(-0.15..0.15),
                pitch: rng.gen_range(-0.15..0.15),
                yaw: rng.gen_range(-0.3..0.3),
            };
            let rig = rig_1080p(extr);
            let line = rig.horizon_line().unwrap();
            let mut reference = 0.0f64;
            for _ in 0..1000 {
                let gx = rig.extrinsics.x + rng.gen_range(0.5..1e4);
                let gy = rng.gen_range(-50.0..50.0);
                let Ok((u, v)) = rig.project_point(Vector3::new(gx, gy, 0.0)) else {
                    continue;
                };
                let s = line.eval(u, v);
                assert!(s != 0.0);
                if reference == 0.0 {
                    reference = s;
                } else {
                    assert!(
                        s.signum() == reference.signum(),
                        "ground point ({gx},{gy}) crossed the horizon: {s} vs {reference}"
                    );
                }
            }
        }
    }

    #[test]
    fn image_line_canonical_form_is_scale_invariant() {
        let l1 = ImageLine::new(2.0, -4.0, 8.0).unwrap();
        let l2 = ImageLine::new(-1.0, 2.0, -4.0).unwrap();
        assert!((l1.a - l2.a).abs() < 1e-15);
        assert!((l1.b - l2.b).abs() < 1e-15);
        assert!((l1.c - l2.c).abs() < 1e-15);
        assert!((l1.a * l1.a + l1.b * l1.b - 1.0).abs() < 1e-15);
        assert!(l1.b >= 0.0);
        // Vertical line tie-break: b == 0 forces a > 0.
        let v = ImageLine::new(-3.0, 0.0, 6.0).unwrap();
        assert!(v.a > 0.0 && v.b == 0.0);
        // No finite direction: reject.
        assert!(ImageLine::new(0.0, 0.0, 5.0).is_none());
    }

    const FIXTURE: &str = r#"{
        "baseline": 0.21,
        "intrinsic": { "fx": 2262.52, "fy": 2265.3017905988554,
                       "u0": 1096.98, "v0": 513.137, "extra": 1 },
        "extrinsic": { "x": 1.7, "y": 0.1, "z": 1.22,
                       "roll": 0.04, "pitch": -0.013, "yaw": 0.0195 }
    }"#;

    #[test]
    fn calibration_fixture_parses_with_unknown_keys_ignored() {
        let (intr, extr) = parse_calibration(FIXTURE, 2048, 1024).unwrap();
        assert_eq!(intr.fx, 2262.52);
        assert_eq!(intr.fy, 2265.3017905988554);
        assert_eq!(intr.u0, 1096.98);
        assert_eq!(intr.v0, 513.137);
        assert_eq!(intr.image_width, 2048);
        assert_eq!(extr.x, 1.7);
        assert_eq!(extr.z, 1.22);
        assert_eq!(extr.yaw, 0.0195);
        let rig = CameraRig::new(intr, extr, RotationConvention::VehicleToOptical).unwrap();
        rig.horizon_line().unwrap();
    }

    #[test]
    fn missing_calibration_key_is_named() {
        let text = r#"{ "intrinsic": { "fx": 1.0, "fy": 2.0, "u0": 3.0 },
                        "extrinsic": { "x": 0, "y": 0, "z": 1,
                                       "roll": 0, "pitch": 0, "yaw": 0 } }"#;
        match parse_calibration(text, 100, 100) {
            Err(GeometryError::MissingKey { key }) => assert_eq!(key, "intrinsic.v0"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
        match parse_calibration("{}", 100, 100) {
            Err(GeometryError::MissingKey { key }) => assert_eq!(key, "intrinsic"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
        assert!(matches!(
            parse_calibration("not json", 100, 100),
            Err(GeometryError::MalformedJson(_))
        ));
    }

    #[test]
    fn out_of_range_calibration_fields_are_rejected() {
        assert!(matches!(
            CameraIntrinsics::new(-1.0, 1.0, 0.0, 0.0, 10, 10),
            Err(GeometryError::InvalidCalibration { field: "fx", .. })
        ));
        assert!(matches!(
            CameraIntrinsics::new(1.0, 1.0, 20.0, 0.0, 10, 10),
            Err(GeometryError::InvalidCalibration { field: "u0", .. })
        ));
        let intr = CameraIntrinsics::new(100.0, 100.0, 5.0, 5.0, 10, 10).unwrap();
        let mut extr = level_extr(1.0);
        extr.z = -0.5;
        assert!(matches!(
            CameraRig::new(intr, extr, RotationConvention::VehicleToOptical),
            Err(GeometryError::InvalidCalibration { field: "z", .. })
        ));
    }
}
