//! Rigid (6-DOF) and affine (12-DOF) spatial transforms.
//!
//! All transforms use the pull-back convention: a registration result maps
//! fixed-space world points (mm) into moving space, matching how
//! resampling consumes them. Rotation matrices compose as Rz·Ry·Rx
//! (extrinsic Euler, Z·Y·X order).

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3;

/// A rigid transform: rotation by Euler angles about `center`, then
/// translation.  `map(p) = R (p - c) + c + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidParams {
    /// (rx, ry, rz) in radians.
    pub angles: [f64; 3],
    /// (tx, ty, tz) in millimetres.
    pub translation: [f64; 3],
    /// Rotation center in world millimetres.
    pub center: [f64; 3],
}

impl RigidParams {
    pub fn identity() -> Self {
        Self { angles: [0.0; 3], translation: [0.0; 3], center: [0.0; 3] }
    }

    pub fn new(angles: [f64; 3], translation: [f64; 3], center: [f64; 3]) -> Self {
        Self { angles, translation, center }
    }

    pub fn is_identity(&self) -> bool {
        self.angles == [0.0; 3] && self.translation == [0.0; 3]
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.angles[0], self.angles[1], self.angles[2])
    }

    pub fn matrix4(&self) -> Matrix4<f64> {
        let r = self.rotation();
        let c = vec3(self.center);
        let t = vec3(self.translation);
        let v = c + t - r * c;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&v);
        m
    }

    #[inline]
    pub fn map_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation();
        let q = r * (vec3(p) - vec3(self.center)) + vec3(self.center) + vec3(self.translation);
        [q.x, q.y, q.z]
    }

    /// Inverse transform, expressed about the same center.
    pub fn invert(&self) -> Self {
        let r_inv = self.rotation().inverse();
        let (rx, ry, rz) = r_inv.euler_angles();
        let t = vec3(self.translation);
        let ti = -(r_inv * t);
        Self { angles: [rx, ry, rz], translation: [ti.x, ti.y, ti.z], center: self.center }
    }

    /// Composition `self ∘ other` (apply `other` first), expressed about
    /// `self.center`.
    pub fn compose(&self, other: &RigidParams) -> Self {
        let m = self.matrix4() * other.matrix4();
        let r = Rotation3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned());
        let (rx, ry, rz) = r.euler_angles();
        let v = m.fixed_view::<3, 1>(0, 3).into_owned();
        let c = vec3(self.center);
        let t = v - c + r * c;
        Self { angles: [rx, ry, rz], translation: [t.x, t.y, t.z], center: self.center }
    }

    /// Same spatial map re-expressed about a different rotation center.
    pub fn with_center(&self, center: [f64; 3]) -> Self {
        let r = self.rotation();
        let dc = vec3(center) - vec3(self.center);
        let t = vec3(self.translation) + (r * dc - dc);
        Self { angles: self.angles, translation: [t.x, t.y, t.z], center }
    }
}

/// General affine transform as a 4×4 homogeneous matrix (last row 0 0 0 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub matrix: [[f64; 4]; 4],
}

impl AffineTransform {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { matrix: m }
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Self {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)];
            }
        }
        out[3] = [0.0, 0.0, 0.0, 1.0];
        Self { matrix: out }
    }

    /// Build from rigid + anisotropic scale + shear parameters about a
    /// center: `map(p) = R·Sh·K (p - c) + c + t`.
    pub fn from_params(
        angles: [f64; 3],
        translation: [f64; 3],
        scale: [f64; 3],
        shear: [f64; 3],
        center: [f64; 3],
    ) -> Self {
        let r = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
        let sh = Matrix3::new(1.0, shear[0], shear[1], 0.0, 1.0, shear[2], 0.0, 0.0, 1.0);
        let k = Matrix3::from_diagonal(&Vector3::new(scale[0], scale[1], scale[2]));
        let m3 = r.matrix() * sh * k;
        let c = vec3(center);
        let v = c + vec3(translation) - m3 * c;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&m3);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&v);
        Self::from_matrix4(&m)
    }

    pub fn matrix4(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.matrix[r][c])
    }

    #[inline]
    pub fn map_point(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
        ]
    }

    pub fn determinant3(&self) -> f64 {
        self.matrix4().fixed_view::<3, 3>(0, 0).determinant()
    }

    pub fn invert(&self) -> Result<Self> {
        if self.determinant3().abs() <= 1e-12 {
            return Err(Error::Argument("affine matrix is singular".into()));
        }
        let inv = self
            .matrix4()
            .try_inverse()
            .ok_or_else(|| Error::Argument("affine matrix is singular".into()))?;
        Ok(Self::from_matrix4(&inv))
    }

    pub fn compose(&self, other: &AffineTransform) -> Self {
        Self::from_matrix4(&(self.matrix4() * other.matrix4()))
    }
}

impl From<&RigidParams> for AffineTransform {
    fn from(r: &RigidParams) -> Self {
        AffineTransform::from_matrix4(&r.matrix4())
    }
}

/// Anything that acts as a homogeneous world-space map.
pub trait SpatialTransform {
    fn to_matrix4(&self) -> Matrix4<f64>;

    fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let m = self.to_matrix4();
        [
            m[(0, 0)] * p[0] + m[(0, 1)] * p[1] + m[(0, 2)] * p[2] + m[(0, 3)],
            m[(1, 0)] * p[0] + m[(1, 1)] * p[1] + m[(1, 2)] * p[2] + m[(1, 3)],
            m[(2, 0)] * p[0] + m[(2, 1)] * p[1] + m[(2, 2)] * p[2] + m[(2, 3)],
        ]
    }
}

impl SpatialTransform for RigidParams {
    fn to_matrix4(&self) -> Matrix4<f64> {
        self.matrix4()
    }
}

impl SpatialTransform for AffineTransform {
    fn to_matrix4(&self) -> Matrix4<f64> {
        self.matrix4()
    }
}

/// Serialized form of a transform as stored in transform.json files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TransformSpec {
    Rigid {
        angles_rad: [f64; 3],
        translation_mm: [f64; 3],
        center_mm: [f64; 3],
        convention: String,
        units: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        final_ncc: Option<f64>,
    },
    Affine {
        matrix: [[f64; 4]; 4],
        convention: String,
        units: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        final_ncc: Option<f64>,
    },
}

impl TransformSpec {
    pub fn rigid(p: &RigidParams, final_ncc: Option<f64>) -> Self {
        TransformSpec::Rigid {
            angles_rad: p.angles,
            translation_mm: p.translation,
            center_mm: p.center,
            convention: "pullback".into(),
            units: "mm,rad".into(),
            final_ncc,
        }
    }

    pub fn affine(a: &AffineTransform, final_ncc: Option<f64>) -> Self {
        TransformSpec::Affine {
            matrix: a.matrix,
            convention: "pullback".into(),
            units: "mm,rad".into(),
            final_ncc,
        }
    }
}
