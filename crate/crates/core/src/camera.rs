//! Pinhole camera model and rigid pose algebra.
//!
//! Extrinsics follow the world-to-camera convention `x_cam = R * x_world + t`.
//! Under this convention a pixel `u = (col, row, 1)` with depth `d` lifts to
//! `p = Rᵀ (d K⁻¹ u − t)`, which is the exact inverse of [`project`]. Poses
//! imported from camera-to-world pipelines (OpenGL, COLMAP exports of camera
//! centres, ...) must be inverted before use.
//!
//! Pixel centres sit at integer coordinates: pixel `(0, 0)` covers
//! `[-0.5, 0.5) x [-0.5, 0.5)`.

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Tolerance for accepting a rotation matrix as orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<S: Real> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: usize,
    pub height: usize,
}

impl<S: Real> CameraIntrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = S::zero();
        if !(self.fx > zero && self.fy > zero) {
            return Err(Error::Invalid(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("image size must be non-zero".into()));
        }
        let w: S = lit(self.width as f64);
        let h: S = lit(self.height as f64);
        if !(self.cx >= zero && self.cx < w && self.cy >= zero && self.cy < h) {
            return Err(Error::Invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<S> {
        let (o, z) = (S::one(), S::zero());
        Matrix3::new(self.fx, z, self.cx, z, self.fy, self.cy, z, z, o)
    }

    /// `K⁻¹ u` for a pixel `(col, row)`; the result has unit z.
    #[inline]
    pub fn unproject_ray(&self, pixel: &Vector2<S>) -> Vector3<S> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            S::one(),
        )
    }

    /// Whether a continuous pixel coordinate falls on the image.
    pub fn contains(&self, pixel: &Vector2<S>) -> bool {
        let half: S = lit(0.5);
        let w: S = lit(self.width as f64);
        let h: S = lit(self.height as f64);
        pixel.x >= -half && pixel.x < w - half && pixel.y >= -half && pixel.y < h - half
    }

    /// Scales the image plane by `factor`, e.g. `0.5` for half-resolution previews.
    pub fn scaled(&self, factor: f64, width: usize, height: usize) -> Self {
        let f: S = lit(factor);
        let half: S = lit(0.5);
        // Pixel centres are at integers, so the scaling is about the (-0.5, -0.5) corner.
        Self {
            fx: self.fx * f,
            fy: self.fy * f,
            cx: (self.cx + half) * f - half,
            cy: (self.cy + half) * f - half,
            width,
            height,
        }
    }

    pub fn cast<T: Real>(&self) -> CameraIntrinsics<T> {
        CameraIntrinsics {
            fx: lit(to_f64(self.fx)),
            fy: lit(to_f64(self.fy)),
            cx: lit(to_f64(self.cx)),
            cy: lit(to_f64(self.cy)),
            width: self.width,
            height: self.height,
        }
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<S: Real> {
    rotation: Matrix3<S>,
    translation: Vector3<S>,
}

impl<S: Real> CameraPose<S> {
    /// Builds a pose, rejecting rotations that are not orthonormal with det +1.
    pub fn new(rotation: Matrix3<S>, translation: Vector3<S>) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<S>, translation: Vector3<S>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<S> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<S> {
        &self.translation
    }

    /// Camera centre in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vector3<S> {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Point3<S>) -> Vector3<S> {
        self.rotation * p.coords + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, x: &Vector3<S>) -> Point3<S> {
        Point3::from(self.rotation.transpose() * (x - self.translation))
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn cast<T: Real>(&self) -> CameraPose<T> {
        CameraPose {
            rotation: self.rotation.map(|v| lit(to_f64(v))),
            translation: self.translation.map(|v| lit(to_f64(v))),
        }
    }
}

fn check_rotation<S: Real>(r: &Matrix3<S>) -> Result<()> {
    let tol: S = lit(ROTATION_TOLERANCE);
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid("rotation must be finite".into()));
    }
    let gram = r.transpose() * r - Matrix3::identity();
    if gram.iter().any(|v| v.abs() > tol) {
        return Err(Error::Invalid("rotation is not orthonormal".into()));
    }
    if (r.determinant() - S::one()).abs() > tol {
        return Err(Error::Invalid("rotation determinant is not +1".into()));
    }
    Ok(())
}

/// Rotation by `angle` radians about the z axis.
pub fn rot_z<S: Real>(angle: S) -> Matrix3<S> {
    let (s, c) = angle.sin_cos();
    let (o, z) = (S::one(), S::zero());
    Matrix3::new(c, -s, z, s, c, z, z, z, o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraTrack<S: Real> {
    pub intrinsics: CameraIntrinsics<S>,
    poses: Vec<CameraPose<S>>,
}

impl<S: Real> CameraTrack<S> {
    pub fn new(intrinsics: CameraIntrinsics<S>, poses: Vec<CameraPose<S>>) -> Result<Self> {
        intrinsics.validate()?;
        if poses.is_empty() {
            return Err(Error::Invalid("camera track needs at least one pose".into()));
        }
        Ok(Self { intrinsics, poses })
    }

    /// A track that holds `pose` for `frames` frames.
    pub fn constant(intrinsics: CameraIntrinsics<S>, pose: CameraPose<S>, frames: usize) -> Result<Self> {
        Self::new(intrinsics, vec![pose; frames])
    }

    pub fn poses(&self) -> &[CameraPose<S>] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Pose of 1-based frame `t`.
    pub fn pose(&self, t: usize) -> Option<&CameraPose<S>> {
        t.checked_sub(1).and_then(|i| self.poses.get(i))
    }
}

/// Pixel location and camera-space depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<S: Real> {
    pub pixel: Vector2<S>,
    pub depth: S,
}

/// The point lies on or behind the image plane; callers normally cull it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("point is behind the camera")]
pub struct BehindCamera;

/// Lifts pixel `(col, row)` at metric `depth` into the world frame.
pub fn back_project<S: Real>(
    pixel: &Vector2<S>,
    depth: S,
    k: &CameraIntrinsics<S>,
    pose: &CameraPose<S>,
) -> Result<Point3<S>> {
    if !(depth > S::zero()) || !depth.is_finite() {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    if !k.contains(pixel) {
        return Err(Error::Bounds(format!(
            "pixel ({}, {}) outside {}x{} image",
            pixel.x, pixel.y, k.width, k.height
        )));
    }
    let cam = k.unproject_ray(pixel) * depth;
    Ok(pose.camera_to_world(&cam))
}

/// Projects a world point to `(pixel, depth)`.
#[inline]
pub fn project<S: Real>(
    p: &Point3<S>,
    k: &CameraIntrinsics<S>,
    pose: &CameraPose<S>,
) -> std::result::Result<Projection<S>, BehindCamera> {
    project_camera(&pose.world_to_camera(p), k)
}

/// Projects a point already expressed in camera coordinates.
#[inline]
pub fn project_camera<S: Real>(
    x: &Vector3<S>,
    k: &CameraIntrinsics<S>,
) -> std::result::Result<Projection<S>, BehindCamera> {
    if !(x.z > S::zero()) {
        return Err(BehindCamera);
    }
    Ok(Projection {
        pixel: Vector2::new(k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy),
        depth: x.z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&CameraIntrinsics<f64>> for IntrinsicsJson {
    fn from(k: &CameraIntrinsics<f64>) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl TryFrom<IntrinsicsJson> for CameraIntrinsics<f64> {
    type Error = Error;

    fn try_from(j: IntrinsicsJson) -> Result<Self> {
        CameraIntrinsics::new(j.fx, j.fy, j.cx, j.cy, j.width, j.height)
    }
}

/// One frame of the pose file: `{"R": [9 row-major], "t": [3]}`.
///
/// A unit quaternion `"q": [w, x, y, z]` may be given instead of `"R"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f64; 4]>,
    pub t: [f64; 3],
}

impl From<&CameraPose<f64>> for PoseJson {
    fn from(p: &CameraPose<f64>) -> Self {
        let r = p.rotation();
        let mut rot = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rot[i * 3 + j] = r[(i, j)];
            }
        }
        Self {
            rotation: Some(rot),
            q: None,
            t: [p.translation().x, p.translation().y, p.translation().z],
        }
    }
}

impl TryFrom<&PoseJson> for CameraPose<f64> {
    type Error = Error;

    fn try_from(j: &PoseJson) -> Result<Self> {
        let t = Vector3::from(j.t);
        match (&j.rotation, &j.q) {
            (Some(r), _) => CameraPose::new(Matrix3::from_row_slice(r), t),
            (None, Some([w, x, y, z])) => {
                let q = nalgebra::Quaternion::new(*w, *x, *y, *z);
                if (q.norm() - 1.0).abs() > ROTATION_TOLERANCE {
                    return Err(Error::Invalid("quaternion is not unit length".into()));
                }
                CameraPose::new(UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner(), t)
            }
            (None, None) => Err(Error::Invalid("pose needs either \"R\" or \"q\"".into())),
        }
    }
}

pub fn poses_to_json(poses: &[CameraPose<f64>]) -> Vec<PoseJson> {
    poses.iter().map(PoseJson::from).collect()
}

pub fn poses_from_json(frames: &[PoseJson]) -> Result<Vec<CameraPose<f64>>> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            CameraPose::try_from(f).map_err(|e| Error::Invalid(format!("poses[{i}]: {e}")))
        })
        .collect()
}
