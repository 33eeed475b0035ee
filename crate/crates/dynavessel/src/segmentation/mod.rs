//! Threshold-based vessel mask extraction and the geometric primitives
//! the metrics layer needs: local (Phansalkar) and global entropy (Kapur/
//! Rényi) thresholding, connected components, surface extraction, and
//! topology-preserving 3D thinning.

mod thinning;

pub use thinning::skeletonize;

use crate::error::{Error, Result};
use crate::par;
use crate::volume::{LabelVolume, ScalarVolume, VoxelSet};

/// Parameters of the local adaptive threshold, applied to intensities
/// min-max normalized to [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct PhansalkarParams {
    pub window_radius: usize,
    pub k: f64,
    pub r: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for PhansalkarParams {
    fn default() -> Self {
        Self { window_radius: 15, k: 0.25, r: 0.5, p: 2.0, q: 10.0 }
    }
}

/// Local adaptive threshold: with m/s the window mean/standard deviation
/// of normalized intensities, a voxel is foreground iff
/// `n > m * (1 + p*exp(-q*m) + k*(s/r - 1))`.
///
/// Window statistics use 3D summed-area tables in f64; windows clip at
/// the volume border. When `roi` is given, normalization uses only ROI
/// voxels and everything outside the ROI is background.
pub fn phansalkar_threshold(
    vol: &ScalarVolume,
    params: &PhansalkarParams,
    roi: Option<&LabelVolume>,
) -> Result<LabelVolume> {
    if params.window_radius == 0 || params.r <= 0.0 {
        return Err(Error::Argument("window_radius must be >= 1 and r > 0".into()));
    }
    if let Some(m) = roi {
        if m.geometry.dims != vol.geometry.dims {
            return Err(Error::Geometry("roi dims differ from volume".into()));
        }
    }
    let (lo, hi) = roi_min_max(vol, roi);
    if !(hi > lo) {
        return Err(Error::Normalization(format!(
            "constant intensities over the normalization domain (value {lo})"
        )));
    }
    let geo = &vol.geometry;
    let [nx, ny, nz] = geo.dims;
    let scale = 1.0 / (hi - lo) as f64;
    let norm: Vec<f64> = vol
        .data
        .iter()
        .map(|&v| (((v - lo) as f64) * scale).clamp(0.0, 1.0))
        .collect();

    let (sum, sum_sq) = summed_area_tables(&norm, geo.dims);

    let mut out = vec![0u8; norm.len()];
    let r = params.window_radius as isize;
    let slice = nx * ny;
    par::for_each_chunk_mut(&mut out, slice, |z, plane| {
        let z = z as isize;
        let (z0, z1) = ((z - r).max(0) as usize, ((z + r) as usize).min(nz - 1));
        for y in 0..ny as isize {
            let (y0, y1) = ((y - r).max(0) as usize, ((y + r) as usize).min(ny - 1));
            for x in 0..nx as isize {
                let i = (y as usize) * nx + x as usize;
                let idx = z as usize * slice + i;
                if let Some(m) = roi {
                    if m.data[idx] == 0 {
                        continue;
                    }
                }
                let (x0, x1) = ((x - r).max(0) as usize, ((x + r) as usize).min(nx - 1));
                let count = ((x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1)) as f64;
                let s1 = box_sum(&sum, geo.dims, [x0, y0, z0], [x1, y1, z1]);
                let s2 = box_sum(&sum_sq, geo.dims, [x0, y0, z0], [x1, y1, z1]);
                let mean = s1 / count;
                let var = (s2 / count - mean * mean).max(0.0);
                let sd = var.sqrt();
                let t = mean
                    * (1.0 + params.p * (-params.q * mean).exp() + params.k * (sd / params.r - 1.0));
                if norm[idx] > t {
                    plane[i] = 1;
                }
            }
        }
    });
    LabelVolume::binary(geo.clone(), out, "foreground")
}

fn roi_min_max(vol: &ScalarVolume, roi: Option<&LabelVolume>) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for (i, &v) in vol.data.iter().enumerate() {
        if let Some(m) = roi {
            if m.data[i] == 0 {
                continue;
            }
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Inclusive 3D prefix sums with one layer of zero padding, for values
/// and their squares.
fn summed_area_tables(values: &[f64], dims: [usize; 3]) -> (Vec<f64>, Vec<f64>) {
    let [nx, ny, nz] = dims;
    let (px, py) = (nx + 1, ny + 1);
    let plane = px * py;
    let mut s1 = vec![0.0f64; plane * (nz + 1)];
    let mut s2 = vec![0.0f64; plane * (nz + 1)];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = values[(z * ny + y) * nx + x];
                let i = (z + 1) * plane + (y + 1) * px + (x + 1);
                let at = |t: &[f64], dx: usize, dy: usize, dz: usize| {
                    t[(z + 1 - dz) * plane + (y + 1 - dy) * px + (x + 1 - dx)]
                };
                s1[i] = v + at(&s1, 1, 0, 0) + at(&s1, 0, 1, 0) + at(&s1, 0, 0, 1)
                    - at(&s1, 1, 1, 0)
                    - at(&s1, 1, 0, 1)
                    - at(&s1, 0, 1, 1)
                    + at(&s1, 1, 1, 1);
                s2[i] = v * v + at(&s2, 1, 0, 0) + at(&s2, 0, 1, 0) + at(&s2, 0, 0, 1)
                    - at(&s2, 1, 1, 0)
                    - at(&s2, 1, 0, 1)
                    - at(&s2, 0, 1, 1)
                    + at(&s2, 1, 1, 1);
            }
        }
    }
    (s1, s2)
}

/// Window sum over the inclusive voxel box [lo, hi] from a padded table.
fn box_sum(table: &[f64], dims: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> f64 {
    let px = dims[0] + 1;
    let plane = px * (dims[1] + 1);
    let at = |x: usize, y: usize, z: usize| table[z * plane + y * px + x];
    at(hi[0] + 1, hi[1] + 1, hi[2] + 1) - at(lo[0], hi[1] + 1, hi[2] + 1)
        - at(hi[0] + 1, lo[1], hi[2] + 1)
        - at(hi[0] + 1, hi[1] + 1, lo[2])
        + at(lo[0], lo[1], hi[2] + 1)
        + at(lo[0], hi[1] + 1, lo[2])
        + at(hi[0] + 1, lo[1], lo[2])
        - at(lo[0], lo[1], lo[2])
}

/// Global threshold maximizing the sum of foreground and background Rényi
/// entropies over a `bins`-bin histogram; order 1 is the Shannon limit.
/// Returns the selected bin edge in HU; ties break toward the lower edge.
pub fn kapur_threshold(
    vol: &ScalarVolume,
    bins: usize,
    renyi_alpha: f64,
    roi: Option<&LabelVolume>,
) -> Result<f32> {
    if bins < 2 {
        return Err(Error::Argument(format!("need at least 2 bins, got {bins}")));
    }
    if !(renyi_alpha > 0.0) {
        return Err(Error::Argument("renyi order must be positive".into()));
    }
    if let Some(m) = roi {
        if m.geometry.dims != vol.geometry.dims {
            return Err(Error::Geometry("roi dims differ from volume".into()));
        }
    }
    let (lo, hi) = roi_min_max(vol, roi);
    if !(hi > lo) {
        return Err(Error::DegenerateHistogram(
            "constant intensities over the histogram domain".into(),
        ));
    }
    let mut hist = vec![0u64; bins];
    let width = (hi - lo) as f64 / bins as f64;
    for (i, &v) in vol.data.iter().enumerate() {
        if let Some(m) = roi {
            if m.data[i] == 0 {
                continue;
            }
        }
        let b = (((v - lo) as f64 / width) as usize).min(bins - 1);
        hist[b] += 1;
    }
    let total: u64 = hist.iter().sum();
    let probs: Vec<f64> = hist.iter().map(|&h| h as f64 / total as f64).collect();

    let shannon = (renyi_alpha - 1.0).abs() < 1e-12;
    let class_entropy = |range: std::ops::Range<usize>, mass: f64| -> f64 {
        if shannon {
            let mut h = 0.0;
            for p in &probs[range] {
                if *p > 0.0 {
                    let q = p / mass;
                    h -= q * q.ln();
                }
            }
            h
        } else {
            let mut s = 0.0;
            for p in &probs[range] {
                if *p > 0.0 {
                    s += (p / mass).powf(renyi_alpha);
                }
            }
            s.ln() / (1.0 - renyi_alpha)
        }
    };

    let mut cumulative = 0.0f64;
    let mut best_t = None;
    let mut best_h = f64::NEG_INFINITY;
    for t in 0..bins - 1 {
        cumulative += probs[t];
        let w0 = cumulative;
        let w1 = 1.0 - cumulative;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let h = class_entropy(0..t + 1, w0) + class_entropy(t + 1..bins, w1);
        if h > best_h {
            best_h = h;
            best_t = Some(t);
        }
    }
    let t = best_t.ok_or_else(|| {
        Error::DegenerateHistogram("no split leaves both classes non-empty".into())
    })?;
    Ok(lo + ((t + 1) as f64 * width) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub(crate) fn offsets(&self) -> &'static [[isize; 3]] {
        const SIX: [[isize; 3]; 6] =
            [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
        const TWENTY_SIX: [[isize; 3]; 26] = {
            let mut out = [[0isize; 3]; 26];
            let mut i = 0;
            let mut dz = -1;
            while dz <= 1 {
                let mut dy = -1;
                while dy <= 1 {
                    let mut dx = -1;
                    while dx <= 1 {
                        if !(dx == 0 && dy == 0 && dz == 0) {
                            out[i] = [dx, dy, dz];
                            i += 1;
                        }
                        dx += 1;
                    }
                    dy += 1;
                }
                dz += 1;
            }
            out
        };
        match self {
            Connectivity::Six => &SIX,
            Connectivity::TwentySix => &TWENTY_SIX,
        }
    }
}

/// Component labeling of the nonzero voxels. Ids are assigned in
/// raster-scan order of each component's first voxel, starting at 1, so
/// the labeling depends only on the mask content.
#[derive(Debug, Clone)]
pub struct ComponentMap {
    pub geometry: crate::geometry::VolumeGeometry,
    pub labels: Vec<u32>,
    /// sizes[id - 1] is the voxel count of component `id`.
    pub sizes: Vec<u64>,
}

pub fn connected_components(mask: &LabelVolume, connectivity: Connectivity) -> ComponentMap {
    let geo = &mask.geometry;
    let [nx, ny, nz] = geo.dims;
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; mask.data.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.data.len() {
        if mask.data[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0u64;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let x = (i % nx) as isize;
            let y = ((i / nx) % ny) as isize;
            let z = (i / (nx * ny)) as isize;
            for d in offsets {
                let (qx, qy, qz) = (x + d[0], y + d[1], z + d[2]);
                if qx < 0 || qy < 0 || qz < 0 {
                    continue;
                }
                let (qx, qy, qz) = (qx as usize, qy as usize, qz as usize);
                if qx >= nx || qy >= ny || qz >= nz {
                    continue;
                }
                let j = (qz * ny + qy) * nx + qx;
                if mask.data[j] != 0 && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    ComponentMap { geometry: geo.clone(), labels, sizes }
}

/// Drop components smaller than `min_voxels`, preserving surviving label
/// values.
pub fn remove_small_components(
    mask: &LabelVolume,
    connectivity: Connectivity,
    min_voxels: u64,
) -> LabelVolume {
    if min_voxels <= 1 {
        return mask.clone();
    }
    let cc = connected_components(mask, connectivity);
    let mut out = mask.clone();
    for (v, &id) in out.data.iter_mut().zip(&cc.labels) {
        if id != 0 && cc.sizes[id as usize - 1] < min_voxels {
            *v = 0;
        }
    }
    out
}

/// Foreground voxels with at least one background 6-neighbor; missing
/// neighbors at the grid border count as background.
pub fn extract_surface(mask: &LabelVolume) -> VoxelSet {
    let geo = &mask.geometry;
    let [nx, ny, nz] = geo.dims;
    let per_slice = par::map_indexed(nz, |z| {
        let mut out = Vec::new();
        for y in 0..ny {
            for x in 0..nx {
                if mask.data[(z * ny + y) * nx + x] == 0 {
                    continue;
                }
                let mut boundary = false;
                for d in Connectivity::Six.offsets() {
                    let (qx, qy, qz) =
                        (x as isize + d[0], y as isize + d[1], z as isize + d[2]);
                    if qx < 0
                        || qy < 0
                        || qz < 0
                        || qx as usize >= nx
                        || qy as usize >= ny
                        || qz as usize >= nz
                    {
                        boundary = true;
                        break;
                    }
                    if mask.data[(qz as usize * ny + qy as usize) * nx + qx as usize] == 0 {
                        boundary = true;
                        break;
                    }
                }
                if boundary {
                    out.push([x as u32, y as u32, z as u32]);
                }
            }
        }
        out
    });
    let indices = per_slice.into_iter().flatten().collect();
    VoxelSet::new(geo.clone(), indices).expect("surface indices are in range")
}
