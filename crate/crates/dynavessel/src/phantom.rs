//! Synthetic dynamic CTA studies with analytic ground truth.
//!
//! A phantom study is a skull (ellipsoid shell of bone), soft tissue
//! interior, and contrast-enhancing artery/vein trees imaged at a series
//! of time points. Vessel enhancement follows gamma-variate
//! time-attenuation curves, per-frame rigid motion is known exactly, and
//! the masks plus centerlines produced here serve as the verification
//! oracle for registration, suppression, segmentation and metrics.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::nifti;
use crate::par;
use crate::registration::resample_with_transform;
use crate::transform::RigidParams;
use crate::volume::{LabelVolume, ScalarVolume, VoxelSet, AIR_HU};

/// Gamma-variate enhancement curve: zero up to `onset_s`, rising to
/// `peak_hu` at `onset_s + time_to_peak_s`, then decaying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAttenuationCurve {
    pub onset_s: f64,
    pub time_to_peak_s: f64,
    pub shape: f64,
    pub peak_hu: f64,
}

impl TimeAttenuationCurve {
    pub fn new(onset_s: f64, time_to_peak_s: f64, shape: f64, peak_hu: f64) -> Self {
        Self { onset_s, time_to_peak_s, shape, peak_hu }
    }

    /// `peak * ((t-t0)/tp)^alpha * exp(alpha * (1 - (t-t0)/tp))`, exactly
    /// zero at and before onset.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.onset_s {
            return 0.0;
        }
        let s = (t - self.onset_s) / self.time_to_peak_s;
        self.peak_hu * s.powf(self.shape) * (self.shape * (1.0 - s)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselKind {
    Artery,
    Vein,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselSegment {
    /// World-mm polyline, at least two points.
    pub points: Vec<[f64; 3]>,
    pub radius_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselTree {
    pub kind: VesselKind,
    pub segments: Vec<VesselSegment>,
    pub tac: TimeAttenuationCurve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkullSpec {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    pub shell_thickness_mm: f64,
    pub bone_hu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: VolumeGeometry,
    pub skull: SkullSpec,
    pub soft_tissue_hu: f64,
    pub arteries: Vec<VesselTree>,
    pub veins: Vec<VesselTree>,
    /// Acquisition times, strictly increasing; the first precedes both
    /// default TAC onsets so frame 0 is a true baseline.
    pub timepoints_s: Vec<f64>,
    /// Ground-truth patient motion per frame (pull-back: frame space into
    /// frame-0 space). Empty means no motion.
    #[serde(default)]
    pub motion: Vec<RigidParams>,
    #[serde(default)]
    pub noise_sigma_hu: f64,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

fn default_seed() -> u64 {
    42
}

/// Peak arterial / venous acquisition times of the default schedule.
pub const PEAK_ARTERIAL_S: f64 = 27.6;
pub const PEAK_VENOUS_S: f64 = 45.3;

/// Default arterial curve: onset 7 s, peak 400 HU at 27.6 s.
pub fn default_artery_tac() -> TimeAttenuationCurve {
    TimeAttenuationCurve::new(7.0, 20.6, 3.0, 400.0)
}

/// Default venous curve: onset 12 s, peak 485 HU at 45.3 s.
pub fn default_vein_tac() -> TimeAttenuationCurve {
    TimeAttenuationCurve::new(12.0, 33.3, 3.0, 485.0)
}

/// 19 acquisition times spanning 0..60 s, with the grid points nearest
/// the contrast peaks replaced by the exact peak times.
pub fn default_timepoints() -> Vec<f64> {
    let mut t: Vec<f64> = (0..19).map(|i| i as f64 * 60.0 / 18.0).collect();
    t[8] = PEAK_ARTERIAL_S;
    t[14] = PEAK_VENOUS_S;
    t
}

impl PhantomSpec {
    /// Standard test phantom: cubic grid of `n` voxels per axis at
    /// `spacing_mm`, anisotropic skull, one artery tree and one vein tree
    /// in separate hemispheres, 19 time points, no motion, no noise.
    pub fn default_with(n: usize, spacing_mm: f64) -> Self {
        let half = (n as f64 - 1.0) / 2.0 * spacing_mm;
        let geometry =
            VolumeGeometry::axis_aligned([n, n, n], [spacing_mm; 3], [-half, -half, -half]);
        // scale anatomy to the grid so the same layout works at any size
        let s = n as f64 * spacing_mm / 128.0;
        let sc = |p: [f64; 3]| [p[0] * s, p[1] * s, p[2] * s];
        let artery = VesselTree {
            kind: VesselKind::Artery,
            tac: default_artery_tac(),
            segments: vec![
                VesselSegment {
                    points: vec![
                        sc([-24.0, -6.0, -24.0]),
                        sc([-16.0, -5.0, -12.0]),
                        sc([-6.0, -4.0, 2.0]),
                        sc([4.0, -3.0, 14.0]),
                        sc([10.0, -2.0, 24.0]),
                    ],
                    radius_mm: 2.8 * s,
                },
                VesselSegment {
                    points: vec![
                        sc([-6.0, -4.0, 2.0]),
                        sc([6.0, -12.0, 6.0]),
                        sc([16.0, -18.0, 8.0]),
                    ],
                    radius_mm: 2.0 * s,
                },
            ],
        };
        let vein = VesselTree {
            kind: VesselKind::Vein,
            tac: default_vein_tac(),
            segments: vec![
                VesselSegment {
                    points: vec![
                        sc([-22.0, 14.0, -20.0]),
                        sc([-10.0, 16.0, -6.0]),
                        sc([2.0, 18.0, 6.0]),
                        sc([12.0, 16.0, 18.0]),
                    ],
                    radius_mm: 3.2 * s,
                },
                VesselSegment {
                    points: vec![
                        sc([2.0, 18.0, 6.0]),
                        sc([-6.0, 24.0, 10.0]),
                        sc([-12.0, 28.0, 12.0]),
                    ],
                    radius_mm: 2.2 * s,
                },
            ],
        };
        Self {
            geometry,
            skull: SkullSpec {
                center_mm: [0.0; 3],
                radii_mm: [55.0 * s, 48.0 * s, 42.0 * s],
                shell_thickness_mm: 6.0 * s,
                bone_hu: 1000.0,
            },
            soft_tissue_hu: 40.0,
            arteries: vec![artery],
            veins: vec![vein],
            timepoints_s: default_timepoints(),
            motion: Vec::new(),
            noise_sigma_hu: 0.0,
            rng_seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| Error::PhantomSpec(e.to_string()))?;
        if self.timepoints_s.len() < 2 {
            return Err(Error::PhantomSpec("need at least two timepoints".into()));
        }
        if self.timepoints_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::PhantomSpec("timepoints must be strictly increasing".into()));
        }
        let onsets = self
            .arteries
            .iter()
            .chain(&self.veins)
            .map(|t| t.tac.onset_s)
            .fold(f64::INFINITY, f64::min);
        if self.timepoints_s[0] >= onsets {
            return Err(Error::PhantomSpec(format!(
                "first timepoint {} must precede the earliest contrast onset {}",
                self.timepoints_s[0], onsets
            )));
        }
        if !self.motion.is_empty() && self.motion.len() != self.timepoints_s.len() {
            return Err(Error::PhantomSpec(format!(
                "motion list has {} entries for {} timepoints",
                self.motion.len(),
                self.timepoints_s.len()
            )));
        }
        if self.noise_sigma_hu < 0.0 {
            return Err(Error::PhantomSpec("noise sigma must be >= 0".into()));
        }
        for a in 0..3 {
            if self.skull.radii_mm[a] <= self.skull.shell_thickness_mm {
                return Err(Error::PhantomSpec("skull radii must exceed shell thickness".into()));
            }
        }
        for (list, kind) in [(&self.arteries, VesselKind::Artery), (&self.veins, VesselKind::Vein)]
        {
            for tree in list.iter() {
                if tree.kind != kind {
                    return Err(Error::PhantomSpec(format!(
                        "tree of kind {:?} listed under {kind:?}",
                        tree.kind
                    )));
                }
                validate_tree(tree)?;
            }
        }
        Ok(())
    }

    pub fn motion_for(&self, frame: usize) -> RigidParams {
        self.motion.get(frame).copied().unwrap_or_else(RigidParams::identity)
    }
}

fn validate_tree(tree: &VesselTree) -> Result<()> {
    if tree.segments.is_empty() {
        return Err(Error::PhantomSpec("vessel tree has no segments".into()));
    }
    for seg in &tree.segments {
        if seg.points.len() < 2 {
            return Err(Error::PhantomSpec("polyline needs at least two points".into()));
        }
        if !(seg.radius_mm > 0.0) {
            return Err(Error::PhantomSpec("segment radius must be positive".into()));
        }
    }
    // every non-root segment must start on an earlier segment
    for (i, seg) in tree.segments.iter().enumerate().skip(1) {
        let start = seg.points[0];
        let attached = tree.segments[..i]
            .iter()
            .any(|parent| polyline_distance(&parent.points, start) <= parent.radius_mm + 1e-9);
        if !attached {
            return Err(Error::PhantomSpec(format!(
                "segment {i} does not start on a parent segment"
            )));
        }
    }
    Ok(())
}

fn point_segment_distance(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

fn polyline_distance(points: &[[f64; 3]], p: [f64; 3]) -> f64 {
    points
        .windows(2)
        .map(|w| point_segment_distance(w[0], w[1], p))
        .fold(f64::INFINITY, f64::min)
}

/// Rasterized anatomy in frame-0 space.
#[derive(Debug, Clone)]
pub struct Anatomy {
    pub bone: LabelVolume,
    pub soft_tissue: LabelVolume,
    pub artery: LabelVolume,
    pub vein: LabelVolume,
    pub artery_centerline: VoxelSet,
    pub vein_centerline: VoxelSet,
    /// Per-tree masks in render precedence order (veins then arteries),
    /// each with its own enhancement curve.
    tree_masks: Vec<(TimeAttenuationCurve, Vec<u8>)>,
}

/// Rasterize skull, soft tissue and vessels; masks are pairwise disjoint
/// with precedence artery > vein > bone > soft tissue.
pub fn build_anatomy(spec: &PhantomSpec) -> Result<Anatomy> {
    spec.validate()?;
    let geo = &spec.geometry;
    let n = geo.voxel_count();
    let [nx, ny, nz] = geo.dims;

    let inner_radii = [
        spec.skull.radii_mm[0] - spec.skull.shell_thickness_mm,
        spec.skull.radii_mm[1] - spec.skull.shell_thickness_mm,
        spec.skull.radii_mm[2] - spec.skull.shell_thickness_mm,
    ];
    let rho = |w: [f64; 3], radii: [f64; 3]| -> f64 {
        let c = spec.skull.center_mm;
        ((w[0] - c[0]) / radii[0]).powi(2)
            + ((w[1] - c[1]) / radii[1]).powi(2)
            + ((w[2] - c[2]) / radii[2]).powi(2)
    };

    // vessel masks per tree; veins first so arteries win overlaps later
    let mut tree_masks: Vec<(VesselKind, TimeAttenuationCurve, Vec<u8>)> = Vec::new();
    for tree in spec.veins.iter().chain(&spec.arteries) {
        let mut mask = vec![0u8; n];
        for seg in &tree.segments {
            rasterize_capsule(geo, seg, &mut mask);
        }
        tree_masks.push((tree.kind, tree.tac, mask));
    }

    let mut artery = vec![0u8; n];
    let mut vein = vec![0u8; n];
    for (kind, _, mask) in &tree_masks {
        let dst = match kind {
            VesselKind::Artery => &mut artery,
            VesselKind::Vein => &mut vein,
        };
        for (d, &m) in dst.iter_mut().zip(mask) {
            *d |= m;
        }
    }
    // artery precedence over vein
    for (v, &a) in vein.iter_mut().zip(&artery) {
        if a != 0 {
            *v = 0;
        }
    }

    let mut bone = vec![0u8; n];
    let mut soft = vec![0u8; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = geo.linear(x, y, z);
                let w = geo.index_to_world([x, y, z]);
                let vessel = artery[i] != 0 || vein[i] != 0;
                let inside_inner = rho(w, inner_radii) <= 1.0;
                if vessel && !inside_inner {
                    return Err(Error::PhantomSpec(format!(
                        "vessel voxel at index ({x},{y},{z}) lies outside the skull interior"
                    )));
                }
                if inside_inner {
                    if !vessel {
                        soft[i] = 1;
                    }
                } else if rho(w, spec.skull.radii_mm) <= 1.0 {
                    bone[i] = 1;
                }
            }
        }
    }

    let artery_centerline = rasterize_centerlines(geo, &spec.arteries, &artery)?;
    let vein_centerline = rasterize_centerlines(geo, &spec.veins, &vein)?;

    Ok(Anatomy {
        bone: LabelVolume::binary(geo.clone(), bone, "bone")?,
        soft_tissue: LabelVolume::binary(geo.clone(), soft, "soft_tissue")?,
        artery: LabelVolume::binary(geo.clone(), artery, "artery")?,
        vein: LabelVolume::binary(geo.clone(), vein, "vein")?,
        artery_centerline,
        vein_centerline,
        tree_masks: tree_masks.into_iter().map(|(_, tac, m)| (tac, m)).collect(),
    })
}

/// Mark voxels whose center lies within `radius_mm` of the polyline.
fn rasterize_capsule(geo: &VolumeGeometry, seg: &VesselSegment, mask: &mut [u8]) {
    let [nx, ny, nz] = geo.dims;
    for w in seg.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        // bounding box in voxel space, padded by the radius
        let pad = seg.radius_mm + geo.spacing.iter().cloned().fold(0.0f64, f64::max);
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for corner in 0..8 {
            let p = [
                if corner & 1 == 0 { a[0].min(b[0]) - pad } else { a[0].max(b[0]) + pad },
                if corner & 2 == 0 { a[1].min(b[1]) - pad } else { a[1].max(b[1]) + pad },
                if corner & 4 == 0 { a[2].min(b[2]) - pad } else { a[2].max(b[2]) + pad },
            ];
            let v = geo.world_to_voxel(p);
            for k in 0..3 {
                let c = v[k].floor().max(0.0) as usize;
                let cc = v[k].ceil().max(0.0) as usize;
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(cc);
            }
        }
        hi[0] = hi[0].min(nx - 1);
        hi[1] = hi[1].min(ny - 1);
        hi[2] = hi[2].min(nz - 1);
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let wpt = geo.index_to_world([x, y, z]);
                    if point_segment_distance(a, b, wpt) <= seg.radius_mm {
                        mask[geo.linear(x, y, z)] = 1;
                    }
                }
            }
        }
    }
}

/// Nearest-voxel trace of each polyline, restricted to the vessel mask.
fn rasterize_centerlines(
    geo: &VolumeGeometry,
    trees: &[VesselTree],
    mask: &[u8],
) -> Result<VoxelSet> {
    let [nx, ny, nz] = geo.dims;
    let step = geo.spacing.iter().cloned().fold(f64::INFINITY, f64::min) * 0.25;
    let mut indices = Vec::new();
    for tree in trees {
        for seg in &tree.segments {
            for w in seg.points.windows(2) {
                let (a, b) = (w[0], w[1]);
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2))
                    .sqrt();
                let steps = (len / step).ceil().max(1.0) as usize;
                for k in 0..=steps {
                    let t = k as f64 / steps as f64;
                    let p = [
                        a[0] + t * (b[0] - a[0]),
                        a[1] + t * (b[1] - a[1]),
                        a[2] + t * (b[2] - a[2]),
                    ];
                    let v = geo.world_to_voxel(p);
                    let (x, y, z) =
                        ((v[0] + 0.5).floor(), (v[1] + 0.5).floor(), (v[2] + 0.5).floor());
                    if x < 0.0 || y < 0.0 || z < 0.0 {
                        continue;
                    }
                    let (x, y, z) = (x as usize, y as usize, z as usize);
                    if x >= nx || y >= ny || z >= nz {
                        continue;
                    }
                    if mask[geo.linear(x, y, z)] != 0 {
                        indices.push([x as u32, y as u32, z as u32]);
                    }
                }
            }
        }
    }
    VoxelSet::new(geo.clone(), indices)
}

/// Render one acquisition frame: compose tissue HU in frame-0 space, warp
/// by the per-frame motion, then add Gaussian noise seeded by
/// (rng_seed, frame index, slice index).
pub fn render_frame(
    anatomy: &Anatomy,
    spec: &PhantomSpec,
    t: f64,
    motion: &RigidParams,
    frame_index: usize,
) -> ScalarVolume {
    let geo = &spec.geometry;
    let [nx, ny, _] = geo.dims;
    let mut composed = vec![AIR_HU; geo.voxel_count()];
    let slice = nx * ny;
    par::for_each_chunk_mut(&mut composed, slice, |z, plane| {
        let base = z * slice;
        for (i, out) in plane.iter_mut().enumerate() {
            let idx = base + i;
            if anatomy.bone.data[idx] != 0 {
                *out = spec.skull.bone_hu as f32;
            } else if anatomy.soft_tissue.data[idx] != 0 {
                *out = spec.soft_tissue_hu as f32;
            }
        }
    });
    // vessels painted per tree so each tree keeps its own curve;
    // later trees (arteries) win where trees overlap
    for (tac, mask) in &anatomy.tree_masks {
        let hu = (spec.soft_tissue_hu + tac.eval(t)) as f32;
        par::for_each_chunk_mut(&mut composed, slice, |z, plane| {
            let base = z * slice;
            for (i, out) in plane.iter_mut().enumerate() {
                if mask[base + i] != 0 {
                    *out = hu;
                }
            }
        });
    }
    let composed = ScalarVolume { geometry: geo.clone(), data: composed };

    // exact values when there is no motion: skip the interpolating warp
    let mut frame = if motion.is_identity() {
        composed
    } else {
        resample_with_transform(&composed, motion, geo, AIR_HU)
    };

    if spec.noise_sigma_hu > 0.0 {
        let sigma = spec.noise_sigma_hu as f32;
        let seed = spec.rng_seed;
        par::for_each_chunk_mut(&mut frame.data, slice, |z, plane| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((frame_index as u64) << 32) | z as u64);
            let normal = Normal::new(0.0f32, sigma).unwrap();
            for v in plane.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        });
    }
    frame
}

#[derive(Debug, Clone)]
pub struct PhantomFrame {
    pub time_s: f64,
    pub volume: ScalarVolume,
}

#[derive(Debug, Clone)]
pub struct PhantomStudy {
    pub frames: Vec<PhantomFrame>,
    pub gt_artery: LabelVolume,
    pub gt_vein: LabelVolume,
    pub gt_artery_centerline: VoxelSet,
    pub gt_vein_centerline: VoxelSet,
    pub true_motion: Vec<RigidParams>,
    pub baseline_index: usize,
    /// Clean (noise-free, motion-free) baseline render, usable as a
    /// registration template.
    pub template: ScalarVolume,
    /// Head region (skull plus interior) in template space.
    pub template_roi: LabelVolume,
}

/// Generate the full study: one frame per timepoint, ground truth carried
/// in frame-0 space; frame 0 is the baseline.
pub fn generate_study(spec: &PhantomSpec) -> Result<PhantomStudy> {
    let anatomy = build_anatomy(spec)?;
    let frames: Vec<PhantomFrame> = spec
        .timepoints_s
        .iter()
        .enumerate()
        .map(|(i, &t)| PhantomFrame {
            time_s: t,
            volume: render_frame(&anatomy, spec, t, &spec.motion_for(i), i),
        })
        .collect();

    // template: clean baseline appearance (pre-onset, identity motion)
    let noise_free = PhantomSpec { noise_sigma_hu: 0.0, ..spec.clone() };
    let template =
        render_frame(&anatomy, &noise_free, spec.timepoints_s[0], &RigidParams::identity(), 0);
    let geo = &spec.geometry;
    let c = spec.skull.center_mm;
    let r = spec.skull.radii_mm;
    let mut roi = vec![0u8; geo.voxel_count()];
    let [nx, ny, nz] = geo.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let w = geo.index_to_world([x, y, z]);
                let rho = ((w[0] - c[0]) / r[0]).powi(2)
                    + ((w[1] - c[1]) / r[1]).powi(2)
                    + ((w[2] - c[2]) / r[2]).powi(2);
                if rho <= 1.0 {
                    roi[geo.linear(x, y, z)] = 1;
                }
            }
        }
    }

    let true_motion = (0..spec.timepoints_s.len()).map(|i| spec.motion_for(i)).collect();
    Ok(PhantomStudy {
        frames,
        gt_artery: anatomy.artery,
        gt_vein: anatomy.vein,
        gt_artery_centerline: anatomy.artery_centerline,
        gt_vein_centerline: anatomy.vein_centerline,
        true_motion,
        baseline_index: 0,
        template,
        template_roi: LabelVolume::binary(geo.clone(), roi, "head_roi")?,
    })
}

#[derive(Serialize, Deserialize)]
struct MotionFile {
    baseline_index: usize,
    frames: Vec<MotionEntry>,
}

#[derive(Serialize, Deserialize)]
struct MotionEntry {
    time_s: f64,
    motion: RigidParams,
}

/// Write a study to a directory: frames, ground-truth masks, centerlines
/// (volume and text form), motion transforms, template and head ROI.
pub fn write_study(study: &PhantomStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, frame) in study.frames.iter().enumerate() {
        nifti::write_volume(&frame.volume, dir.join(format!("frame_{i:02}.nii.gz")))?;
    }
    nifti::write_labels(&study.gt_artery, dir.join("gt_artery.nii.gz"))?;
    nifti::write_labels(&study.gt_vein, dir.join("gt_vein.nii.gz"))?;

    // combined two-class ground truth: 1 = artery, 2 = vein
    let mut combined = study.gt_artery.data.clone();
    for (c, &v) in combined.iter_mut().zip(&study.gt_vein.data) {
        if v != 0 && *c == 0 {
            *c = 2;
        }
    }
    let mut names = BTreeMap::new();
    names.insert(1u8, "artery".to_string());
    names.insert(2u8, "vein".to_string());
    let combined = LabelVolume::new(study.gt_artery.geometry.clone(), combined, names)?;
    nifti::write_labels(&combined, dir.join("gt_labels.nii.gz"))?;

    for (set, stem) in [
        (&study.gt_artery_centerline, "artery_centerline"),
        (&study.gt_vein_centerline, "vein_centerline"),
    ] {
        nifti::write_labels(&set.to_mask("centerline"), dir.join(format!("{stem}.nii.gz")))?;
        std::fs::write(dir.join(format!("{stem}.txt")), set.to_text())?;
    }

    let motion = MotionFile {
        baseline_index: study.baseline_index,
        frames: study
            .frames
            .iter()
            .zip(&study.true_motion)
            .map(|(f, m)| MotionEntry { time_s: f.time_s, motion: *m })
            .collect(),
    };
    std::fs::write(dir.join("motion.json"), serde_json::to_string_pretty(&motion)?)?;
    nifti::write_volume(&study.template, dir.join("template.nii.gz"))?;
    nifti::write_labels(&study.template_roi, dir.join("template_roi.nii.gz"))?;
    Ok(())
}
