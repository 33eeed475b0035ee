//! Scalar and label volumes plus the per-voxel operations on them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::par;

/// Out-of-grid fill for scalar interpolation: air.
pub const AIR_HU: f32 = -1024.0;

/// Dense 3D grid of Hounsfield-unit intensities, x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub geometry: VolumeGeometry,
    pub data: Vec<f32>,
}

/// Dense 3D grid of small-integer class labels sharing scalar geometry.
///
/// Every nonzero value present in `data` must have an entry in
/// `label_names` (0 is implicit background).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub geometry: VolumeGeometry,
    pub data: Vec<u8>,
    pub label_names: BTreeMap<u8, String>,
}

impl ScalarVolume {
    pub fn new(geometry: VolumeGeometry, data: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.voxel_count() {
            return Err(Error::Geometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: VolumeGeometry, value: f32) -> Self {
        let n = geometry.voxel_count();
        Self { geometry, data: vec![value; n] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.geometry.linear(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.geometry.linear(x, y, z);
        self.data[i] = v;
    }

    /// Trilinear interpolation at a world-space point (mm).
    ///
    /// Points outside the grid return `fill`. The supported domain is
    /// continuous voxel coordinates in `[0, dim-1]` per axis (voxel-center
    /// convention), with the upper boundary included exactly.
    #[inline]
    pub fn sample_trilinear(&self, world: [f64; 3], fill: f32) -> f32 {
        let p = self.geometry.world_to_voxel(world);
        let [nx, ny, nz] = self.geometry.dims;
        let inside = |v: f64, n: usize| v >= 0.0 && v <= (n - 1) as f64;
        if !inside(p[0], nx) || !inside(p[1], ny) || !inside(p[2], nz) {
            return fill;
        }
        // clamp the cell index so that p == dim-1 lands in the last cell
        // with fractional weight exactly 1
        let cell = |v: f64, n: usize| -> (usize, f64) {
            let i = (v.floor() as usize).min(n.saturating_sub(2));
            (i, v - i as f64)
        };
        let (x0, fx) = cell(p[0], nx);
        let (y0, fy) = cell(p[1], ny);
        let (z0, fz) = cell(p[2], nz);
        let x1 = (x0 + 1).min(nx - 1);
        let y1 = (y0 + 1).min(ny - 1);
        let z1 = (z0 + 1).min(nz - 1);
        let at = |x: usize, y: usize, z: usize| self.data[self.geometry.linear(x, y, z)] as f64;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), fx);
        let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), fx);
        let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), fx);
        let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz) as f32
    }

    /// Trilinear interpolation with edge replication: coordinates are
    /// clamped into the voxel-center domain instead of returning a fill.
    #[inline]
    pub fn sample_trilinear_clamped(&self, world: [f64; 3]) -> f32 {
        let p = self.geometry.world_to_voxel(world);
        let [nx, ny, nz] = self.geometry.dims;
        let clamped = [
            p[0].clamp(0.0, (nx - 1) as f64),
            p[1].clamp(0.0, (ny - 1) as f64),
            p[2].clamp(0.0, (nz - 1) as f64),
        ];
        let w = self.geometry.voxel_to_world(clamped);
        self.sample_trilinear(w, AIR_HU)
    }

    /// Resample onto an isotropic grid with the given spacing.
    ///
    /// Output dimension per axis is `max(1, round(dim * spacing / target))`
    /// (round half up); origin and direction are preserved and values come
    /// from trilinear sampling of the source with edge replication, so the
    /// outermost half-voxel ring extends the border instead of filling
    /// with air.
    pub fn resample_isotropic(&self, target_spacing: f64) -> Result<ScalarVolume> {
        if !(target_spacing > 0.0) || !target_spacing.is_finite() {
            return Err(Error::Argument(format!(
                "target spacing must be positive, got {target_spacing}"
            )));
        }
        let src = &self.geometry;
        let dims = [0, 1, 2].map(|a| {
            let extent = src.dims[a] as f64 * src.spacing[a] / target_spacing;
            ((extent + 0.5).floor() as usize).max(1)
        });
        let out_geo = VolumeGeometry {
            dims,
            spacing: [target_spacing; 3],
            origin: src.origin,
            direction: src.direction,
        };
        let mut out = vec![0.0f32; out_geo.voxel_count()];
        let slice = dims[0] * dims[1];
        par::for_each_chunk_mut(&mut out, slice, |z, plane| {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let w = out_geo.voxel_to_world([x as f64, y as f64, z as f64]);
                    plane[y * dims[0] + x] = self.sample_trilinear_clamped(w);
                }
            }
        });
        Ok(ScalarVolume { geometry: out_geo, data: out })
    }

    /// Keep voxels where `mask` is nonzero, replace the rest by `fill`.
    pub fn apply_mask(&self, mask: &LabelVolume, fill: f32) -> Result<ScalarVolume> {
        if !self.geometry.same_dims(&mask.geometry) {
            return Err(Error::Geometry(format!(
                "mask dims {:?} do not match volume dims {:?}",
                mask.geometry.dims, self.geometry.dims
            )));
        }
        let mut out = self.clone();
        let slice = self.geometry.dims[0] * self.geometry.dims[1];
        par::for_each_chunk_mut(&mut out.data, slice, |z, plane| {
            let base = z * slice;
            for (i, v) in plane.iter_mut().enumerate() {
                if mask.data[base + i] == 0 {
                    *v = fill;
                }
            }
        });
        Ok(out)
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

impl LabelVolume {
    pub fn new(
        geometry: VolumeGeometry,
        data: Vec<u8>,
        label_names: BTreeMap<u8, String>,
    ) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.voxel_count() {
            return Err(Error::Geometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        let vol = Self { geometry, data, label_names };
        vol.validate_names()?;
        Ok(vol)
    }

    /// Binary mask named `name` for label value 1.
    pub fn binary(geometry: VolumeGeometry, data: Vec<u8>, name: &str) -> Result<Self> {
        let mut names = BTreeMap::new();
        names.insert(1u8, name.to_string());
        Self::new(geometry, data, names)
    }

    pub fn validate_names(&self) -> Result<()> {
        for &v in &self.data {
            if v != 0 && !self.label_names.contains_key(&v) {
                return Err(Error::Argument(format!("label value {v} has no name")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.geometry.linear(x, y, z)]
    }

    /// Nearest-voxel label lookup at a world point; outside the grid
    /// returns 0. Label images are never interpolated linearly.
    #[inline]
    pub fn sample_nearest(&self, world: [f64; 3]) -> u8 {
        let p = self.geometry.world_to_voxel(world);
        let [nx, ny, nz] = self.geometry.dims;
        let round = |v: f64| (v + 0.5).floor();
        let (x, y, z) = (round(p[0]), round(p[1]), round(p[2]));
        if x < 0.0 || y < 0.0 || z < 0.0 {
            return 0;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= nx || y >= ny || z >= nz {
            return 0;
        }
        self.data[self.geometry.linear(x, y, z)]
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Sparse set of voxel indices tied to a geometry, kept sorted in
/// x-fastest raster order so traversals are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub geometry: VolumeGeometry,
    indices: Vec<[u32; 3]>,
}

impl VoxelSet {
    pub fn new(geometry: VolumeGeometry, mut indices: Vec<[u32; 3]>) -> Result<Self> {
        let [nx, ny, nz] = geometry.dims;
        for idx in &indices {
            if idx[0] as usize >= nx || idx[1] as usize >= ny || idx[2] as usize >= nz {
                return Err(Error::Geometry(format!(
                    "voxel index {idx:?} outside dims {:?}",
                    geometry.dims
                )));
            }
        }
        indices.sort_unstable_by_key(|v| ((v[2] as u64 * ny as u64 + v[1] as u64) * nx as u64) + v[0] as u64);
        indices.dedup();
        Ok(Self { geometry, indices })
    }

    /// All nonzero voxels of a label volume.
    pub fn from_mask(mask: &LabelVolume) -> Self {
        let [nx, ny, _] = mask.geometry.dims;
        let mut indices = Vec::new();
        for (i, &v) in mask.data.iter().enumerate() {
            if v != 0 {
                let x = i % nx;
                let y = (i / nx) % ny;
                let z = i / (nx * ny);
                indices.push([x as u32, y as u32, z as u32]);
            }
        }
        Self { geometry: mask.geometry.clone(), indices }
    }

    /// Voxels of a label volume equal to `value`.
    pub fn from_label(mask: &LabelVolume, value: u8) -> Self {
        let [nx, ny, _] = mask.geometry.dims;
        let mut indices = Vec::new();
        for (i, &v) in mask.data.iter().enumerate() {
            if v == value && value != 0 {
                let x = i % nx;
                let y = (i / nx) % ny;
                let z = i / (nx * ny);
                indices.push([x as u32, y as u32, z as u32]);
            }
        }
        Self { geometry: mask.geometry.clone(), indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[[u32; 3]] {
        &self.indices
    }

    pub fn contains(&self, idx: [u32; 3]) -> bool {
        let [nx, ny, _] = self.geometry.dims;
        let key = |v: &[u32; 3]| ((v[2] as u64 * ny as u64 + v[1] as u64) * nx as u64) + v[0] as u64;
        self.indices.binary_search_by_key(&key(&idx), key).is_ok()
    }

    /// World-mm voxel-center coordinates, in raster order.
    pub fn world_points(&self) -> Vec<[f64; 3]> {
        self.indices
            .iter()
            .map(|&[x, y, z]| self.geometry.index_to_world([x as usize, y as usize, z as usize]))
            .collect()
    }

    /// Render as a binary uint8 volume.
    pub fn to_mask(&self, name: &str) -> LabelVolume {
        let mut data = vec![0u8; self.geometry.voxel_count()];
        for &[x, y, z] in &self.indices {
            data[self.geometry.linear(x as usize, y as usize, z as usize)] = 1;
        }
        let mut names = BTreeMap::new();
        names.insert(1u8, name.to_string());
        LabelVolume { geometry: self.geometry.clone(), data, label_names: names }
    }

    /// Newline-delimited "i j k" text form.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.indices.len() * 12);
        for &[x, y, z] in &self.indices {
            s.push_str(&format!("{x} {y} {z}\n"));
        }
        s
    }

    pub fn from_text(geometry: VolumeGeometry, text: &str) -> Result<Self> {
        let mut indices = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<u32> {
                it.next()
                    .ok_or_else(|| Error::Format(format!("line {}: expected 'i j k'", ln + 1)))?
                    .parse()
                    .map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)))
            };
            indices.push([next()?, next()?, next()?]);
        }
        Self::new(geometry, indices)
    }
}
