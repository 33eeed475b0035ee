//! Intensity-based rigid and affine registration.
//!
//! Maximizes normalized cross correlation with a derivative-free cyclic
//! coordinate search over a Gaussian pyramid. NCC is the right objective
//! across contrast phases because it ignores affine intensity changes;
//! the optimizer is deterministic: fixed parameter order, stratified
//! (every k-th voxel) sampling, and slab-ordered metric accumulation.

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::par;
use crate::transform::{AffineTransform, RigidParams, SpatialTransform};
use crate::volume::{LabelVolume, ScalarVolume, AIR_HU};

#[derive(Debug, Clone)]
pub struct RegistrationOptions {
    /// Pyramid depth; each level downsamples by 2 after 2 mm smoothing.
    pub pyramid_levels: usize,
    /// Coordinate-descent cycles per pyramid level.
    pub max_iterations: usize,
    /// Stop once the parameter step norm falls below this.
    pub convergence_tol: f64,
    /// Fraction of eligible fixed voxels entering the metric (every k-th).
    pub sampling_fraction: f64,
    /// Fixed voxels at or below this intensity are ignored.
    pub intensity_floor: f32,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            max_iterations: 200,
            convergence_tol: 1e-4,
            sampling_fraction: 0.25,
            intensity_floor: -500.0,
        }
    }
}

impl RegistrationOptions {
    fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::Argument("pyramid_levels must be >= 1".into()));
        }
        if !(self.sampling_fraction > 0.0 && self.sampling_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "sampling_fraction must be in (0, 1], got {}",
                self.sampling_fraction
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Argument("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Per-level record of the best metric after each accepted cycle.
#[derive(Debug, Clone)]
pub struct LevelTrace {
    /// 0 is full resolution.
    pub level: usize,
    pub ncc: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RigidResult {
    pub params: RigidParams,
    /// Sampled NCC at full resolution for the final parameters.
    pub final_ncc: f64,
    pub trace: Vec<LevelTrace>,
}

#[derive(Debug, Clone)]
pub struct AffineResult {
    pub transform: AffineTransform,
    pub final_ncc: f64,
    pub trace: Vec<LevelTrace>,
}

/// Resample `moving` onto `reference`, pulling values through `t`
/// (which maps reference-space world points into moving space).
pub fn resample_with_transform<T: SpatialTransform>(
    moving: &ScalarVolume,
    t: &T,
    reference: &VolumeGeometry,
    fill: f32,
) -> ScalarVolume {
    // reference voxel -> reference world -> moving world -> moving voxel
    let a = moving.geometry.world_to_voxel_matrix4()
        * t.to_matrix4()
        * reference.voxel_to_world_matrix4();
    let dims = reference.dims;
    let mut out = vec![fill; reference.voxel_count()];
    let slice = dims[0] * dims[1];
    par::for_each_chunk_mut(&mut out, slice, |z, plane| {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let q = apply3x4(&a, [x as f64, y as f64, z as f64]);
                plane[y * dims[0] + x] =
                    trilinear_voxel(&moving.data, moving.geometry.dims, q, fill);
            }
        }
    });
    ScalarVolume { geometry: reference.clone(), data: out }
}

/// Nearest-neighbor pull-back resampling for label volumes.
pub fn resample_labels_with_transform<T: SpatialTransform>(
    moving: &LabelVolume,
    t: &T,
    reference: &VolumeGeometry,
) -> LabelVolume {
    let a = moving.geometry.world_to_voxel_matrix4()
        * t.to_matrix4()
        * reference.voxel_to_world_matrix4();
    let dims = reference.dims;
    let [mx, my, mz] = moving.geometry.dims;
    let mut out = vec![0u8; reference.voxel_count()];
    let slice = dims[0] * dims[1];
    par::for_each_chunk_mut(&mut out, slice, |z, plane| {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let q = apply3x4(&a, [x as f64, y as f64, z as f64]);
                let (i, j, k) = ((q[0] + 0.5).floor(), (q[1] + 0.5).floor(), (q[2] + 0.5).floor());
                let v = if i < 0.0 || j < 0.0 || k < 0.0 {
                    0
                } else {
                    let (i, j, k) = (i as usize, j as usize, k as usize);
                    if i >= mx || j >= my || k >= mz {
                        0
                    } else {
                        moving.data[(k * my + j) * mx + i]
                    }
                };
                plane[y * dims[0] + x] = v;
            }
        }
    });
    LabelVolume {
        geometry: reference.clone(),
        data: out,
        label_names: moving.label_names.clone(),
    }
}

/// Pearson correlation of two same-shaped volumes over an optional mask.
///
/// Accumulated in 64-bit partial sums combined in slab order, so the value
/// is bit-identical for any thread count.
pub fn ncc(a: &ScalarVolume, b: &ScalarVolume, mask: Option<&LabelVolume>) -> Result<f64> {
    if a.geometry.dims != b.geometry.dims {
        return Err(Error::Geometry(format!(
            "dims {:?} vs {:?}",
            a.geometry.dims, b.geometry.dims
        )));
    }
    if let Some(m) = mask {
        if m.geometry.dims != a.geometry.dims {
            return Err(Error::Geometry("mask dims differ from volumes".into()));
        }
    }
    let n = a.data.len();
    let sums = par::slab_sums::<6, _>(n, |range| {
        let mut s = [0.0f64; 6];
        for i in range {
            if let Some(m) = mask {
                if m.data[i] == 0 {
                    continue;
                }
            }
            let x = a.data[i] as f64;
            let y = b.data[i] as f64;
            s[0] += 1.0;
            s[1] += x;
            s[2] += y;
            s[3] += x * x;
            s[4] += y * y;
            s[5] += x * y;
        }
        s
    });
    pearson(&sums).ok_or_else(|| {
        Error::DegenerateMetric("constant intensities over the metric domain".into())
    })
}

/// Rigid registration: find the pull-back transform maximizing NCC between
/// `fixed` and the resampled `moving`.
pub fn register_rigid(
    fixed: &ScalarVolume,
    moving: &ScalarVolume,
    opts: &RegistrationOptions,
) -> Result<RigidResult> {
    opts.validate()?;
    let center = intensity_centroid(fixed, opts.intensity_floor)?;
    let init = vec![0.0; 6];
    let (params, final_ncc, trace) = optimize(fixed, moving, opts, &init, &RIGID_STEPS, |p| {
        rigid_from(p, center).matrix4()
    })?;
    Ok(RigidResult { params: rigid_from(&params, center), final_ncc, trace })
}

/// Affine registration (rigid 6 + scale 3 + shear 3), initialized from a
/// rigid pre-registration.
pub fn register_affine(
    fixed: &ScalarVolume,
    moving: &ScalarVolume,
    opts: &RegistrationOptions,
) -> Result<AffineResult> {
    opts.validate()?;
    let rigid = register_rigid(fixed, moving, opts)?;
    let center = rigid.params.center;
    let mut init = vec![0.0; 12];
    init[..3].copy_from_slice(&rigid.params.translation);
    init[3..6].copy_from_slice(&rigid.params.angles);
    init[6..9].copy_from_slice(&[1.0, 1.0, 1.0]);
    let to_matrix = |p: &[f64]| affine_from(p, center).matrix4();
    let (mut params, mut final_ncc, mut trace) =
        optimize(fixed, moving, opts, &init, &AFFINE_STEPS, to_matrix)?;

    // Metric smoothing commutes with rigid maps but not with scaling: the
    // pulled-back blur width changes with scale, biasing the optimum by a
    // few percent. Polish on lightly smoothed full-res volumes.
    {
        let f = gaussian_smooth(fixed, POLISH_SIGMA_MM);
        let m = gaussian_smooth(moving, POLISH_SIGMA_MM);
        let domain = MetricDomain::build(&f, opts);
        let steps: Vec<f64> = AFFINE_STEPS.iter().map(|s| s / 8.0).collect();
        if let Some((p, ncc_val, t)) = refine(
            &params,
            &steps,
            opts,
            |p| domain.sampled_ncc(&m, &to_matrix(p)),
        ) {
            params = p;
            final_ncc = ncc_val;
            trace.push(LevelTrace { level: 0, ncc: t });
        }
    }

    let mut full_trace = rigid.trace;
    full_trace.append(&mut trace);
    Ok(AffineResult {
        transform: affine_from(&params, center),
        final_ncc,
        trace: full_trace,
    })
}

// param layout: [tx ty tz rx ry rz (kx ky kz sxy sxz syz)]
const RIGID_STEPS: [f64; 6] = [2.0, 2.0, 2.0, DEG2, DEG2, DEG2];
const AFFINE_STEPS: [f64; 12] =
    [2.0, 2.0, 2.0, DEG2, DEG2, DEG2, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05];
const DEG2: f64 = 2.0 * std::f64::consts::PI / 180.0;
const SMOOTH_SIGMA_MM: f64 = 2.0;
const POLISH_SIGMA_MM: f64 = 0.5;

fn rigid_from(p: &[f64], center: [f64; 3]) -> RigidParams {
    RigidParams::new([p[3], p[4], p[5]], [p[0], p[1], p[2]], center)
}

fn affine_from(p: &[f64], center: [f64; 3]) -> AffineTransform {
    AffineTransform::from_params(
        [p[3], p[4], p[5]],
        [p[0], p[1], p[2]],
        [p[6], p[7], p[8]],
        [p[9], p[10], p[11]],
        center,
    )
}

fn optimize(
    fixed: &ScalarVolume,
    moving: &ScalarVolume,
    opts: &RegistrationOptions,
    init: &[f64],
    base_steps: &[f64],
    to_matrix: impl Fn(&[f64]) -> Matrix4<f64>,
) -> Result<(Vec<f64>, f64, Vec<LevelTrace>)> {
    let fixed_pyr = build_pyramid(fixed, opts.pyramid_levels);
    let moving_pyr = build_pyramid(moving, opts.pyramid_levels);
    let levels = fixed_pyr.len().min(moving_pyr.len());

    let mut params = init.to_vec();
    let mut trace = Vec::new();
    // coarsest first; finer levels restart with proportionally smaller steps
    for level in (0..levels).rev() {
        let domain = MetricDomain::build(&fixed_pyr[level], opts);
        let objective = |p: &[f64]| domain.sampled_ncc(&moving_pyr[level], &to_matrix(p));

        let (new_params, _best, level_trace) =
            refine(&params, base_steps, opts, objective).ok_or_else(|| {
                Error::RegistrationFailed(format!(
                    "degenerate metric at pyramid level {level}{}",
                    if level == levels - 1 { " (coarsest)" } else { "" }
                ))
            })?;
        params = new_params;
        trace.push(LevelTrace { level, ncc: level_trace });
    }

    let full_domain = MetricDomain::build(&fixed_pyr[0], opts);
    let final_ncc = full_domain
        .sampled_ncc(&moving_pyr[0], &to_matrix(&params))
        .ok_or_else(|| Error::RegistrationFailed("degenerate metric at full resolution".into()))?;
    Ok((params, final_ncc, trace))
}

/// Cyclic coordinate descent with adaptive step halving. Returns the
/// refined parameters, the best objective and its per-cycle trace, or
/// None when the objective is undefined at the starting point.
fn refine(
    init: &[f64],
    base_steps: &[f64],
    opts: &RegistrationOptions,
    objective: impl Fn(&[f64]) -> Option<f64>,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let mut params = init.to_vec();
    let mut best = objective(&params)?;
    let mut steps = base_steps.to_vec();
    let mut trace = vec![best];
    for _cycle in 0..opts.max_iterations {
        let mut improved = false;
        for i in 0..params.len() {
            for dir in [1.0f64, -1.0] {
                // greedy walk along one coordinate, bounded per cycle
                for _ in 0..64 {
                    let mut cand = params.clone();
                    cand[i] += dir * steps[i];
                    match objective(&cand) {
                        Some(m) if m > best + 1e-12 => {
                            params = cand;
                            best = m;
                            improved = true;
                        }
                        _ => break,
                    }
                }
            }
        }
        trace.push(best);
        if !improved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
            let norm = steps.iter().map(|s| s * s).sum::<f64>().sqrt();
            if norm < opts.convergence_tol {
                break;
            }
        }
    }
    Some((params, best, trace))
}

/// Stratified sample of the fixed volume: every k-th voxel above the
/// intensity floor, in raster order.
struct MetricDomain {
    world: Vec<[f64; 3]>,
    fixed_vals: Vec<f32>,
}

impl MetricDomain {
    fn build(fixed: &ScalarVolume, opts: &RegistrationOptions) -> Self {
        let k = (1.0 / opts.sampling_fraction).round().max(1.0) as usize;
        let [nx, ny, _] = fixed.geometry.dims;
        let mut world = Vec::new();
        let mut fixed_vals = Vec::new();
        let mut eligible = 0usize;
        for (i, &v) in fixed.data.iter().enumerate() {
            if v > opts.intensity_floor {
                if eligible % k == 0 {
                    let x = i % nx;
                    let y = (i / nx) % ny;
                    let z = i / (nx * ny);
                    world.push(fixed.geometry.index_to_world([x, y, z]));
                    fixed_vals.push(v);
                }
                eligible += 1;
            }
        }
        Self { world, fixed_vals }
    }

    /// Sampled NCC of fixed values against `moving` pulled through `t`.
    /// Returns None when either side is constant over the domain.
    fn sampled_ncc(&self, moving: &ScalarVolume, t: &Matrix4<f64>) -> Option<f64> {
        if self.world.len() < 2 {
            return None;
        }
        let a = moving.geometry.world_to_voxel_matrix4() * t;
        let dims = moving.geometry.dims;
        let sums = par::slab_sums::<6, _>(self.world.len(), |range| {
            let mut s = [0.0f64; 6];
            for i in range {
                let q = apply3x4(&a, self.world[i]);
                let y = trilinear_voxel(&moving.data, dims, q, AIR_HU) as f64;
                let x = self.fixed_vals[i] as f64;
                s[0] += 1.0;
                s[1] += x;
                s[2] += y;
                s[3] += x * x;
                s[4] += y * y;
                s[5] += x * y;
            }
            s
        });
        pearson(&sums)
    }
}

fn pearson(s: &[f64; 6]) -> Option<f64> {
    let [n, sx, sy, sxx, syy, sxy] = *s;
    if n < 2.0 {
        return None;
    }
    let var_x = n * sxx - sx * sx;
    let var_y = n * syy - sy * sy;
    // tolerate tiny negative values from cancellation
    if var_x <= n * 1e-12 || var_y <= n * 1e-12 {
        return None;
    }
    Some(((n * sxy - sx * sy) / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

fn intensity_centroid(vol: &ScalarVolume, floor: f32) -> Result<[f64; 3]> {
    let [nx, ny, _] = vol.geometry.dims;
    let sums = par::slab_sums::<4, _>(vol.data.len(), |range| {
        let mut s = [0.0f64; 4];
        for i in range {
            if vol.data[i] > floor {
                let x = i % nx;
                let y = (i / nx) % ny;
                let z = i / (nx * ny);
                let w = vol.geometry.index_to_world([x, y, z]);
                s[0] += 1.0;
                s[1] += w[0];
                s[2] += w[1];
                s[3] += w[2];
            }
        }
        s
    });
    if sums[0] == 0.0 {
        return Err(Error::RegistrationFailed(
            "no fixed voxels above the intensity floor".into(),
        ));
    }
    Ok([sums[1] / sums[0], sums[2] / sums[0], sums[3] / sums[0]])
}

#[inline]
fn apply3x4(m: &Matrix4<f64>, p: [f64; 3]) -> [f64; 3] {
    [
        m[(0, 0)] * p[0] + m[(0, 1)] * p[1] + m[(0, 2)] * p[2] + m[(0, 3)],
        m[(1, 0)] * p[0] + m[(1, 1)] * p[1] + m[(1, 2)] * p[2] + m[(1, 3)],
        m[(2, 0)] * p[0] + m[(2, 1)] * p[1] + m[(2, 2)] * p[2] + m[(2, 3)],
    ]
}

/// Trilinear interpolation directly in voxel coordinates.
#[inline]
pub(crate) fn trilinear_voxel(data: &[f32], dims: [usize; 3], p: [f64; 3], fill: f32) -> f32 {
    let [nx, ny, nz] = dims;
    if p[0] < 0.0
        || p[1] < 0.0
        || p[2] < 0.0
        || p[0] > (nx - 1) as f64
        || p[1] > (ny - 1) as f64
        || p[2] > (nz - 1) as f64
    {
        return fill;
    }
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
    let at = |x: usize, y: usize, z: usize| data[(z * ny + y) * nx + x] as f64;
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), fx);
    let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), fx);
    let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), fx);
    let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), fx);
    lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz) as f32
}

/// Separable Gaussian smoothing with border renormalization.
pub(crate) fn gaussian_smooth(vol: &ScalarVolume, sigma_mm: f64) -> ScalarVolume {
    let mut cur = vol.clone();
    for axis in 0..3 {
        let sigma = sigma_mm / vol.geometry.spacing[axis];
        if sigma < 1e-3 {
            continue;
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let weights: Vec<f64> =
            (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        cur = convolve_axis(&cur, axis, radius, &weights);
    }
    cur
}

fn convolve_axis(vol: &ScalarVolume, axis: usize, radius: isize, weights: &[f64]) -> ScalarVolume {
    let dims = vol.geometry.dims;
    let [nx, ny, _] = dims;
    let n_axis = dims[axis] as isize;
    let mut out = vec![0.0f32; vol.data.len()];
    let slice = nx * ny;
    par::for_each_chunk_mut(&mut out, slice, |z, plane| {
        for y in 0..ny {
            for x in 0..nx {
                let idx = [x as isize, y as isize, z as isize];
                let mut acc = 0.0f64;
                let mut wsum = 0.0f64;
                for (wi, w) in weights.iter().enumerate() {
                    let off = wi as isize - radius;
                    let mut q = idx;
                    q[axis] += off;
                    if q[axis] < 0 || q[axis] >= n_axis {
                        continue;
                    }
                    let lin = (q[2] as usize * ny + q[1] as usize) * nx + q[0] as usize;
                    acc += vol.data[lin] as f64 * w;
                    wsum += w;
                }
                plane[y * nx + x] = (acc / wsum) as f32;
            }
        }
    });
    ScalarVolume { geometry: vol.geometry.clone(), data: out }
}

/// Pyramid level list: index 0 is the full-resolution volume smoothed by
/// 2 mm (every level is pre-smoothed; sharp air/bone cliffs otherwise make
/// the interpolated metric noisy enough to displace its optimum). Each
/// further entry smooths again and downsamples by 2. Levels stop early
/// when the grid would shrink below 24 voxels per axis; coarser grids
/// carry too little structure and let the search wander.
fn build_pyramid(vol: &ScalarVolume, levels: usize) -> Vec<ScalarVolume> {
    let mut pyr = vec![gaussian_smooth(vol, SMOOTH_SIGMA_MM)];
    while pyr.len() < levels {
        let last = pyr.last().unwrap();
        if last.geometry.dims.iter().any(|&d| d.div_ceil(2) < 24) {
            break;
        }
        let smoothed = gaussian_smooth(last, SMOOTH_SIGMA_MM);
        let src = &smoothed.geometry;
        let dims = [0, 1, 2].map(|a| src.dims[a].div_ceil(2));
        let geo = VolumeGeometry {
            dims,
            spacing: [src.spacing[0] * 2.0, src.spacing[1] * 2.0, src.spacing[2] * 2.0],
            origin: src.origin,
            direction: src.direction,
        };
        let mut data = vec![0.0f32; geo.voxel_count()];
        let slice = dims[0] * dims[1];
        par::for_each_chunk_mut(&mut data, slice, |z, plane| {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    plane[y * dims[0] + x] = smoothed.get(2 * x, 2 * y, 2 * z);
                }
            }
        });
        pyr.push(ScalarVolume { geometry: geo, data });
    }
    pyr
}
