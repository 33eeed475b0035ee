//! Volume geometry: grid dimensions, voxel spacing, world-space placement.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement of a regular 3D voxel grid in world space (millimetres).
///
/// `direction` holds the world-space directions of the voxel axes as
/// columns; it must be orthonormal. Voxel (0,0,0) has its *center* at
/// `origin`. Data indexed x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub direction: [[f64; 3]; 3],
}

impl VolumeGeometry {
    /// Axis-aligned geometry with the given dims/spacing/origin.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        Self {
            dims,
            spacing,
            origin,
            direction: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Unit-spacing grid with origin at zero. Handy for tests.
    pub fn unit(dims: [usize; 3]) -> Self {
        Self::axis_aligned(dims, [1.0; 3], [0.0; 3])
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!("dims must be >= 1, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Geometry(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        let d = self.direction_matrix();
        let err = (d.transpose() * d - Matrix3::identity()).abs().max();
        if err > 1e-6 {
            return Err(Error::Geometry(format!(
                "direction matrix is not orthonormal (|D^T D - I| = {err:.3e})"
            )));
        }
        Ok(())
    }

    /// Direction cosines as a matrix; `direction[r][c]` is row r, column c.
    pub fn direction_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.direction[r][c])
    }

    /// World coordinates (mm) of a continuous voxel-space point.
    #[inline]
    pub fn voxel_to_world(&self, voxel: [f64; 3]) -> [f64; 3] {
        let d = &self.direction;
        let sx = self.spacing[0] * voxel[0];
        let sy = self.spacing[1] * voxel[1];
        let sz = self.spacing[2] * voxel[2];
        [
            self.origin[0] + d[0][0] * sx + d[0][1] * sy + d[0][2] * sz,
            self.origin[1] + d[1][0] * sx + d[1][1] * sy + d[1][2] * sz,
            self.origin[2] + d[2][0] * sx + d[2][1] * sy + d[2][2] * sz,
        ]
    }

    /// Continuous voxel coordinates of a world point (mm).
    ///
    /// Uses the transpose of `direction`, which equals its inverse for the
    /// orthonormal matrices this crate accepts.
    #[inline]
    pub fn world_to_voxel(&self, world: [f64; 3]) -> [f64; 3] {
        let d = &self.direction;
        let px = world[0] - self.origin[0];
        let py = world[1] - self.origin[1];
        let pz = world[2] - self.origin[2];
        [
            (d[0][0] * px + d[1][0] * py + d[2][0] * pz) / self.spacing[0],
            (d[0][1] * px + d[1][1] * py + d[2][1] * pz) / self.spacing[1],
            (d[0][2] * px + d[1][2] * py + d[2][2] * pz) / self.spacing[2],
        ]
    }

    /// World coordinates of the voxel-center at integer index (i, j, k).
    #[inline]
    pub fn index_to_world(&self, index: [usize; 3]) -> [f64; 3] {
        self.voxel_to_world([index[0] as f64, index[1] as f64, index[2] as f64])
    }

    /// Flat index into x-fastest storage.
    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    /// Homogeneous matrix mapping continuous voxel coords to world mm.
    pub fn voxel_to_world_matrix4(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = self.direction[r][c] * self.spacing[c];
            }
            m[(r, 3)] = self.origin[r];
        }
        m
    }

    /// Homogeneous matrix mapping world mm to continuous voxel coords.
    pub fn world_to_voxel_matrix4(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = self.direction[c][r] / self.spacing[r];
            }
        }
        let o = m.fixed_view::<3, 3>(0, 0) * vec3(self.origin);
        for r in 0..3 {
            m[(r, 3)] = -o[r];
        }
        m
    }

    /// True when dims match exactly and spacing/origin/direction agree
    /// within `tol`.
    pub fn approx_eq(&self, other: &VolumeGeometry, tol: f64) -> bool {
        if self.dims != other.dims {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        self.spacing.iter().zip(&other.spacing).all(|(a, b)| close(*a, *b))
            && self.origin.iter().zip(&other.origin).all(|(a, b)| close(*a, *b))
            && self
                .direction
                .iter()
                .flatten()
                .zip(other.direction.iter().flatten())
                .all(|(a, b)| close(*a, *b))
    }

    pub(crate) fn same_dims(&self, other: &VolumeGeometry) -> bool {
        self.dims == other.dims
    }
}

pub(crate) fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_voxel_round_trip() {
        let mut geo = VolumeGeometry::axis_aligned([10, 12, 14], [0.5, 0.7, 1.1], [-3.0, 2.0, 9.5]);
        // quarter-turn about z keeps the matrix orthonormal
        geo.direction = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        geo.validate().unwrap();
        for p in [[0.0, 0.0, 0.0], [3.0, 4.5, 13.0], [9.0, 11.0, 0.25]] {
            let w = geo.voxel_to_world(p);
            let back = geo.world_to_voxel(w);
            for a in 0..3 {
                assert!((back[a] - p[a]).abs() < 1e-9, "{back:?} vs {p:?}");
            }
        }
    }

    #[test]
    fn rejects_non_orthonormal_direction() {
        let mut geo = VolumeGeometry::unit([4, 4, 4]);
        geo.direction[0][1] = 0.2;
        assert!(matches!(geo.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_zero_dims_and_spacing() {
        let geo = VolumeGeometry::unit([0, 4, 4]);
        assert!(geo.validate().is_err());
        let geo = VolumeGeometry::axis_aligned([4, 4, 4], [1.0, 0.0, 1.0], [0.0; 3]);
        assert!(geo.validate().is_err());
    }
}
