//! Pinhole camera model, normalized coordinates, motion-field matrices and
//! the SE(3) utilities used to chain per-frame displacements.
//!
//! Conventions: angles in radians, lengths in meters, image quantities in
//! pixels unless a type says "normalized".

use nalgebra::{Matrix2x3, Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};

/// Below this rotation magnitude the Rodrigues coefficients switch to their
/// Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Pinhole intrinsics with square pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::invalid(format!("focal length must be > 0, got {f}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(cx >= 0.0 && cx < width as f64) || !(cy >= 0.0 && cy < height as f64) {
            return Err(Error::invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            f,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn normalize(&self, u: f64, v: f64) -> NormalizedPoint {
        normalize_pixel(self, u, v)
    }

    pub fn denormalize(&self, p: NormalizedPoint) -> (f64, f64) {
        (p.x * self.f + self.cx, p.y * self.f + self.cy)
    }
}

/// Rectified stereo pair sharing one set of intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::invalid(format!(
                "baseline must be > 0, got {baseline}"
            )));
        }
        Ok(Self {
            intrinsics,
            baseline,
        })
    }

    /// The product f·b that links depth and disparity.
    pub fn fb(&self) -> f64 {
        self.intrinsics.f * self.baseline
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }
}

/// Camera displacement over one frame interval, in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    /// Linear displacement, meters per frame.
    pub v: Vector3<f64>,
    /// Angular displacement, radians per frame.
    pub omega: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self { v, omega }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            v: Vector3::new(a[0], a[1], a[2]),
            omega: Vector3::new(a[3], a[4], a[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.v.x,
            self.v.y,
            self.v.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
        ]
    }

    /// Stacked as (v, ω).
    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_row_slice(&self.to_array())
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self::from_array([x[0], x[1], x[2], x[3], x[4], x[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    /// ‖self − reference‖ / ‖reference‖ over the stacked 6-vector.
    pub fn relative_error(&self, reference: &Twist) -> f64 {
        let diff = (self.as_vector() - reference.as_vector()).norm();
        let scale = reference.norm();
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.v + rhs.v, self.omega + rhs.omega)
    }
}

/// Point in the normalized camera frame: ((u − cx)/f, (v − cy)/f).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

pub fn normalize_pixel(intr: &CameraIntrinsics, u: f64, v: f64) -> NormalizedPoint {
    NormalizedPoint {
        x: (u - intr.cx) / intr.f,
        y: (v - intr.cy) / intr.f,
    }
}

/// The translational (A) and rotational (B) motion-field matrices at `p`.
pub fn motion_matrices(p: NormalizedPoint) -> (Matrix2x3<f64>, Matrix2x3<f64>) {
    let (x, y) = (p.x, p.y);
    let a = Matrix2x3::new(-1.0, 0.0, x, 0.0, -1.0, y);
    let b = Matrix2x3::new(x * y, -(1.0 + x * x), y, 1.0 + y * y, -x * y, -x);
    (a, b)
}

pub fn disparity_to_depth(rig: &StereoRig, disparity: f64) -> Result<f64> {
    if !(disparity > 0.0) {
        return Err(Error::invalid(format!(
            "disparity must be > 0, got {disparity}"
        )));
    }
    Ok(rig.fb() / disparity)
}

pub fn depth_to_disparity(rig: &StereoRig, depth: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(Error::invalid(format!("depth must be > 0, got {depth}")));
    }
    Ok(rig.fb() / depth)
}

/// Rigid transform; for trajectories this is world-from-camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SE3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE3Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        SE3Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3Pose {
        let rt = self.rotation.transpose();
        SE3Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// max |RᵀR − I| entry.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

/// Angle of a rotation matrix. Uses atan2 of the skew and trace parts,
/// which keeps full precision near zero and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin2 = s.norm();
    let cos2 = r.trace() - 1.0;
    sin2.atan2(cos2)
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// SE(3) exponential of a per-frame twist: R = exp([ω]×), t = V·v.
pub fn twist_exp(t: &Twist) -> SE3Pose {
    let w = skew(&t.omega);
    let w2 = w * w;
    let theta2 = t.omega.norm_squared();
    let theta = theta2.sqrt();
    let (a, b, c) = if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0,
            0.5 - theta2 / 24.0,
            1.0 / 6.0 - theta2 / 120.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        (
            s / theta,
            (1.0 - co) / theta2,
            (theta - s) / (theta2 * theta),
        )
    };
    let id = Matrix3::identity();
    let rotation = id + w * a + w2 * b;
    let v_mat = id + w * b + w2 * c;
    SE3Pose {
        rotation,
        translation: v_mat * t.v,
    }
}
