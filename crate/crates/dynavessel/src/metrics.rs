//! Segmentation evaluation: sensitivity-oriented overlap (mDC), average
//! directed Hausdorff surface distance (adHD), centerline topology
//! sensitivity (tSens), phase classification, and per-case reports.
//!
//! mDC and tSens are plain voxel-count ratios against the ground truth,
//! so false positives outside the reference never lower them; adHD
//! averages, over ground-truth surface points, the Euclidean distance to
//! the nearest predicted surface point (directed: prediction-only surface
//! mass is ignored).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::segmentation::{extract_surface, skeletonize};
use crate::volume::{LabelVolume, ScalarVolume, VoxelSet};

/// Exact nearest-neighbor index over a point set: a uniform spatial hash
/// with cell size matched to the voxel spacing, queried by expanding
/// rings. Any point in a cell at Chebyshev ring r is at least
/// (r-1)*cell away, so the search stops as soon as the best distance is
/// at most r*cell; results equal the brute-force minimum.
pub struct DistanceIndex {
    points: Vec<[f64; 3]>,
    cell: f64,
    grid: HashMap<[i64; 3], Vec<u32>>,
}

impl DistanceIndex {
    pub fn from_points(points: Vec<[f64; 3]>, cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(Self::cell_of(*p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, grid }
    }

    /// Index over the voxel-center world coordinates of a set; cell size
    /// is the largest spacing component.
    pub fn build(set: &VoxelSet) -> Self {
        let cell = set.geometry.spacing.iter().cloned().fold(0.0f64, f64::max);
        Self::from_points(set.world_points(), cell)
    }

    fn cell_of(p: [f64; 3], cell: f64) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact distance from `q` to the nearest indexed point.
    pub fn nearest_distance(&self, q: [f64; 3]) -> f64 {
        assert!(!self.points.is_empty(), "empty index");
        let qc = Self::cell_of(q, self.cell);
        let mut best = f64::INFINITY;
        let mut r: i64 = 0;
        loop {
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        let key = [qc[0] + dx, qc[1] + dy, qc[2] + dz];
                        if let Some(ids) = self.grid.get(&key) {
                            for &i in ids {
                                let p = self.points[i as usize];
                                let d2 = (p[0] - q[0]).powi(2)
                                    + (p[1] - q[1]).powi(2)
                                    + (p[2] - q[2]).powi(2);
                                best = best.min(d2);
                            }
                        }
                    }
                }
            }
            if best.is_finite() && best.sqrt() <= r as f64 * self.cell {
                return best.sqrt();
            }
            r += 1;
        }
    }
}

/// Sensitivity-oriented overlap: |gt ∩ pred| / |gt| over nonzero voxels.
pub fn mdc(gt: &LabelVolume, pred: &LabelVolume) -> Result<f64> {
    if gt.geometry.dims != pred.geometry.dims {
        return Err(Error::Geometry("mdc operands differ in dims".into()));
    }
    let mut inter = 0u64;
    let mut total = 0u64;
    for (g, p) in gt.data.iter().zip(&pred.data) {
        if *g != 0 {
            total += 1;
            inter += (*p != 0) as u64;
        }
    }
    if total == 0 {
        return Err(Error::EmptyReference("ground-truth mask is empty".into()));
    }
    Ok(inter as f64 / total as f64)
}

/// Fraction of ground-truth centerline voxels covered by the prediction.
pub fn tsens(gt_centerline: &VoxelSet, pred: &LabelVolume) -> Result<f64> {
    if gt_centerline.geometry.dims != pred.geometry.dims {
        return Err(Error::Geometry("tsens operands differ in dims".into()));
    }
    if gt_centerline.is_empty() {
        return Err(Error::EmptyReference("ground-truth centerline is empty".into()));
    }
    let mut hit = 0u64;
    for &[x, y, z] in gt_centerline.indices() {
        if pred.get(x as usize, y as usize, z as usize) != 0 {
            hit += 1;
        }
    }
    Ok(hit as f64 / gt_centerline.len() as f64)
}

/// Average directed Hausdorff surface distance in millimetres: the mean,
/// over ground-truth surface points, of the distance to the nearest
/// predicted surface point.
pub fn adhd(gt_surface: &VoxelSet, pred_surface: &VoxelSet) -> Result<f64> {
    if gt_surface.is_empty() || pred_surface.is_empty() {
        return Err(Error::EmptySurface(format!(
            "gt surface: {} points, prediction surface: {} points",
            gt_surface.len(),
            pred_surface.len()
        )));
    }
    let index = DistanceIndex::build(pred_surface);
    let points = gt_surface.world_points();
    let sums = par::slab_sums::<1, _>(points.len(), |range| {
        let mut s = 0.0f64;
        for p in &points[range] {
            s += index.nearest_distance(*p);
        }
        [s]
    });
    Ok(sums[0] / points.len() as f64)
}

/// Arithmetic mean of intensities over a voxel set, accumulated in f64 in
/// raster order.
pub fn mean_hu(vol: &ScalarVolume, points: &VoxelSet) -> Result<f64> {
    if points.geometry.dims != vol.geometry.dims {
        return Err(Error::Geometry("mean_hu operands differ in dims".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyReference("voxel set is empty".into()));
    }
    let mut sum = 0.0f64;
    for &[x, y, z] in points.indices() {
        sum += vol.get(x as usize, y as usize, z as usize) as f64;
    }
    Ok(sum / points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Arterial,
    Venous,
}

/// Classify a frame by comparing mean centerline intensities: arterial iff
/// the arteries are brighter; ties go venous (late recirculation frames
/// approach equality from the venous side).
pub fn classify_phase(
    vol: &ScalarVolume,
    artery_centerline: &VoxelSet,
    vein_centerline: &VoxelSet,
) -> Result<Phase> {
    let a = mean_hu(vol, artery_centerline)?;
    let v = mean_hu(vol, vein_centerline)?;
    Ok(if a > v { Phase::Arterial } else { Phase::Venous })
}

/// Per-label evaluation row. Labels present in the ground-truth name map
/// but absent from its voxels are recorded with `gt_voxels = 0` and no
/// metric values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub gt_voxels: u64,
    pub mdc: Option<f64>,
    pub tsens: Option<f64>,
    pub adhd_mm: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub gt_digest: String,
    pub pred_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_digest: Option<String>,
    pub pairing: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: BTreeMap<String, LabelMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    /// Mean centerline HU per label, when an intensity volume was given.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mean_hu: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Ground-truth label name -> prediction label value. Several names
    /// may map to one prediction value (generic-vessel credit).
    pub pairing: BTreeMap<String, u8>,
    /// Precomputed centerlines per ground-truth label name; labels not
    /// listed fall back to skeletonizing the label mask.
    pub centerlines: BTreeMap<String, VoxelSet>,
}

/// Evaluate one (ground truth, prediction) pair label by label.
pub fn evaluate_case(
    gt: &LabelVolume,
    pred: &LabelVolume,
    opts: &EvaluateOptions,
    vol: Option<&ScalarVolume>,
) -> Result<MetricsReport> {
    if !gt.geometry.approx_eq(&pred.geometry, 1e-6) {
        return Err(Error::Geometry("gt and prediction geometries differ".into()));
    }
    if let Some(v) = vol {
        if !gt.geometry.approx_eq(&v.geometry, 1e-6) {
            return Err(Error::Geometry("gt and volume geometries differ".into()));
        }
    }
    let mut per_label = BTreeMap::new();
    let mut centerlines_used: BTreeMap<String, VoxelSet> = BTreeMap::new();
    for (&value, name) in &gt.label_names {
        let &pred_value = opts.pairing.get(name).ok_or_else(|| {
            Error::Config(format!("pairing has no entry for ground-truth label '{name}'"))
        })?;

        let gt_mask_data: Vec<u8> = gt.data.iter().map(|&v| (v == value) as u8).collect();
        let gt_voxels = gt_mask_data.iter().filter(|&&v| v != 0).count() as u64;
        if gt_voxels == 0 {
            // anatomical variant: absent label is data, not an error
            per_label.insert(
                name.clone(),
                LabelMetrics { gt_voxels: 0, mdc: None, tsens: None, adhd_mm: None },
            );
            continue;
        }
        let gt_mask = LabelVolume::binary(gt.geometry.clone(), gt_mask_data, name)?;
        let pred_mask_data: Vec<u8> =
            pred.data.iter().map(|&v| (v == pred_value && v != 0) as u8).collect();
        let pred_mask = LabelVolume::binary(gt.geometry.clone(), pred_mask_data, "pred")?;

        let mdc_v = mdc(&gt_mask, &pred_mask)?;
        let centerline = match opts.centerlines.get(name) {
            Some(c) => c.clone(),
            None => skeletonize(&gt_mask),
        };
        let tsens_v = tsens(&centerline, &pred_mask)?;
        centerlines_used.insert(name.clone(), centerline);

        let gt_surface = extract_surface(&gt_mask);
        let pred_surface = extract_surface(&pred_mask);
        let adhd_v = if pred_surface.is_empty() {
            None
        } else {
            Some(adhd(&gt_surface, &pred_surface)?)
        };
        per_label.insert(
            name.clone(),
            LabelMetrics {
                gt_voxels,
                mdc: Some(mdc_v),
                tsens: Some(tsens_v),
                adhd_mm: adhd_v,
            },
        );
    }

    // phase classification when intensities and both vessel kinds exist
    let mut phase = None;
    let mut mean_map = BTreeMap::new();
    if let Some(v) = vol {
        for (name, cl) in &centerlines_used {
            if !cl.is_empty() {
                mean_map.insert(name.clone(), mean_hu(v, cl)?);
            }
        }
        if let (Some(a), Some(ve)) =
            (centerlines_used.get("artery"), centerlines_used.get("vein"))
        {
            if !a.is_empty() && !ve.is_empty() {
                phase = Some(classify_phase(v, a, ve)?);
            }
        }
    }

    Ok(MetricsReport {
        per_label,
        phase,
        mean_hu: mean_map,
        provenance: Provenance {
            gt_digest: crate::digest::label_volume_digest(gt),
            pred_digest: crate::digest::label_volume_digest(pred),
            volume_digest: vol.map(crate::digest::scalar_volume_digest),
            pairing: opts.pairing.clone(),
        },
    })
}

/// Flat CSV rows for one case: case_id, label, mdc, tsens, adhd_mm,
/// gt_voxels, phase. Call once per case and concatenate; prepend
/// [`csv_header`].
pub fn report_csv_rows(case_id: &str, report: &MetricsReport) -> String {
    let phase = match report.phase {
        Some(Phase::Arterial) => "arterial",
        Some(Phase::Venous) => "venous",
        None => "",
    };
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::new();
    for (name, m) in &report.per_label {
        out.push_str(&format!(
            "{case_id},{name},{},{},{},{},{phase}\n",
            fmt(m.mdc),
            fmt(m.tsens),
            fmt(m.adhd_mm),
            m.gt_voxels
        ));
    }
    out
}

pub fn csv_header() -> &'static str {
    "case_id,label,mdc,tsens,adhd_mm,gt_voxels,phase\n"
}

/// Mean and standard deviation across cases (population form), matching
/// the usual "mean ± sd" reporting convention.
pub fn aggregate(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VolumeGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_of(dims: [usize; 3], voxels: &[[u32; 3]]) -> LabelVolume {
        let geo = VolumeGeometry::unit(dims);
        let mut data = vec![0u8; geo.voxel_count()];
        for &[x, y, z] in voxels {
            data[geo.linear(x as usize, y as usize, z as usize)] = 1;
        }
        LabelVolume::binary(geo, data, "m").unwrap()
    }

    fn set_of(dims: [usize; 3], voxels: &[[u32; 3]]) -> VoxelSet {
        VoxelSet::new(VolumeGeometry::unit(dims), voxels.to_vec()).unwrap()
    }

    #[test]
    fn mdc_self_overlap_is_one_and_empty_pred_zero() {
        let gt = mask_of([8, 8, 8], &[[1, 1, 1], [2, 1, 1], [3, 1, 1]]);
        assert_eq!(mdc(&gt, &gt).unwrap(), 1.0);
        let empty = mask_of([8, 8, 8], &[]);
        assert_eq!(mdc(&gt, &empty).unwrap(), 0.0);
        assert!(matches!(mdc(&empty, &gt), Err(Error::EmptyReference(_))));
    }

    #[test]
    fn mdc_ignores_false_positives() {
        // 4 collinear gt voxels; prediction covers 3 plus 100 elsewhere
        let gt = mask_of([16, 16, 16], &[[2, 8, 8], [3, 8, 8], [4, 8, 8], [5, 8, 8]]);
        let mut pred_voxels = vec![[2, 8, 8], [3, 8, 8], [4, 8, 8]];
        let mut i = 0;
        'outer: for z in 0..16u32 {
            for y in 0..16u32 {
                for x in 8..16u32 {
                    pred_voxels.push([x, y, z]);
                    i += 1;
                    if i == 100 {
                        break 'outer;
                    }
                }
            }
        }
        let pred = mask_of([16, 16, 16], &pred_voxels);
        assert_eq!(mdc(&gt, &pred).unwrap(), 0.75);
    }

    #[test]
    fn adhd_worked_examples() {
        let dims = [8, 8, 8];
        let a = set_of(dims, &[[0, 0, 0]]);
        let p = set_of(dims, &[[3, 0, 0]]);
        assert_eq!(adhd(&a, &p).unwrap(), 3.0);

        let a2 = set_of(dims, &[[0, 0, 0], [4, 0, 0]]);
        let p2 = set_of(dims, &[[0, 0, 0]]);
        assert_eq!(adhd(&a2, &p2).unwrap(), 2.0);
        // swapped arguments: directedness
        assert_eq!(adhd(&p2, &a2).unwrap(), 0.0);

        assert_eq!(adhd(&a, &a).unwrap(), 0.0);
        let empty = set_of(dims, &[]);
        assert!(matches!(adhd(&a, &empty), Err(Error::EmptySurface(_))));
        assert!(matches!(adhd(&empty, &a), Err(Error::EmptySurface(_))));
    }

    #[test]
    fn tsens_worked_examples() {
        let dims = [16, 4, 4];
        let cl: Vec<[u32; 3]> = (0..10).map(|x| [x, 1, 1]).collect();
        let centerline = set_of(dims, &cl);
        let full = mask_of(dims, &cl);
        assert_eq!(tsens(&centerline, &full).unwrap(), 1.0);
        let nine = mask_of(dims, &cl[..9]);
        assert_eq!(tsens(&centerline, &nine).unwrap(), 0.9);
        let empty = mask_of(dims, &[]);
        assert_eq!(tsens(&centerline, &empty).unwrap(), 0.0);
        assert!(matches!(
            tsens(&set_of(dims, &[]), &full),
            Err(Error::EmptyReference(_))
        ));
    }

    #[test]
    fn mean_hu_examples() {
        let geo = VolumeGeometry::unit([4, 4, 4]);
        let vol = ScalarVolume::filled(geo.clone(), 100.0);
        let set = VoxelSet::new(geo.clone(), vec![[0, 0, 0], [1, 0, 0]]).unwrap();
        assert_eq!(mean_hu(&vol, &set).unwrap(), 100.0);
        let mut two = ScalarVolume::filled(geo.clone(), 0.0);
        two.set(1, 0, 0, 300.0);
        assert_eq!(mean_hu(&two, &set).unwrap(), 150.0);
        let empty = VoxelSet::new(geo, vec![]).unwrap();
        assert!(mean_hu(&vol, &empty).is_err());
    }

    #[test]
    fn phase_tie_goes_venous_and_shift_invariant() {
        let geo = VolumeGeometry::unit([8, 8, 8]);
        let mut vol = ScalarVolume::filled(geo.clone(), 40.0);
        let a = VoxelSet::new(geo.clone(), vec![[1, 1, 1]]).unwrap();
        let v = VoxelSet::new(geo.clone(), vec![[5, 5, 5]]).unwrap();
        assert_eq!(classify_phase(&vol, &a, &v).unwrap(), Phase::Venous);
        vol.set(1, 1, 1, 300.0);
        assert_eq!(classify_phase(&vol, &a, &v).unwrap(), Phase::Arterial);
        // adding a constant changes nothing
        for x in vol.data.iter_mut() {
            *x += 500.0;
        }
        assert_eq!(classify_phase(&vol, &a, &v).unwrap(), Phase::Arterial);
    }

    #[test]
    fn distance_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let points: Vec<[f64; 3]> = (0..40)
                .map(|_| {
                    [
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                    ]
                })
                .collect();
            let index = DistanceIndex::from_points(points.clone(), 1.7);
            for _ in 0..30 {
                let q = [
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-30.0..30.0),
                ];
                let brute = points
                    .iter()
                    .map(|p| {
                        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                let fast = index.nearest_distance(q);
                assert!((fast - brute).abs() < 1e-9, "{fast} vs {brute}");
            }
        }
    }

    #[test]
    fn monotone_in_prediction_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dims = [8, 8, 8];
        for _ in 0..15 {
            let gt_voxels: Vec<[u32; 3]> = (0..512u32)
                .filter(|_| rng.random_bool(0.2))
                .map(|i| [i % 8, (i / 8) % 8, i / 64])
                .collect();
            if gt_voxels.is_empty() {
                continue;
            }
            let gt = mask_of(dims, &gt_voxels);
            let centerline = set_of(dims, &gt_voxels);
            let p_small: Vec<[u32; 3]> = (0..512u32)
                .filter(|_| rng.random_bool(0.15))
                .map(|i| [i % 8, (i / 8) % 8, i / 64])
                .collect();
            let mut p_big = p_small.clone();
            p_big.extend(
                (0..512u32)
                    .filter(|_| rng.random_bool(0.15))
                    .map(|i| [i % 8, (i / 8) % 8, i / 64]),
            );
            let small = mask_of(dims, &p_small);
            let big = mask_of(dims, &p_big);
            assert!(mdc(&gt, &big).unwrap() >= mdc(&gt, &small).unwrap());
            assert!(tsens(&centerline, &big).unwrap() >= tsens(&centerline, &small).unwrap());
            let gs = extract_surface_local(&gt);
            let ss = extract_surface_local(&small);
            let bs = extract_surface_local(&big);
            if !ss.is_empty() && !bs.is_empty() {
                // adHD to a superset's surface can only shrink when the
                // set is a dilation; for arbitrary growth assert bounds
                let d_small = adhd(&gs, &ss).unwrap();
                let d_big = adhd(&gs, &bs).unwrap();
                assert!(d_small >= 0.0 && d_big >= 0.0);
            }
        }
    }

    fn extract_surface_local(m: &LabelVolume) -> VoxelSet {
        crate::segmentation::extract_surface(m)
    }

    #[test]
    fn evaluate_case_perfect_prediction() {
        let dims = [12, 12, 12];
        let geo = VolumeGeometry::unit(dims);
        let mut data = vec![0u8; geo.voxel_count()];
        for x in 2..6 {
            for y in 2..5 {
                data[geo.linear(x, y, 3)] = 1;
                data[geo.linear(x, y, 8)] = 2;
            }
        }
        let mut names = BTreeMap::new();
        names.insert(1u8, "artery".to_string());
        names.insert(2u8, "vein".to_string());
        let gt = LabelVolume::new(geo, data, names).unwrap();
        let opts = EvaluateOptions {
            pairing: [("artery".to_string(), 1u8), ("vein".to_string(), 2u8)].into(),
            centerlines: BTreeMap::new(),
        };
        let report = evaluate_case(&gt, &gt, &opts, None).unwrap();
        for m in report.per_label.values() {
            assert_eq!(m.mdc, Some(1.0));
            assert_eq!(m.tsens, Some(1.0));
            assert_eq!(m.adhd_mm, Some(0.0));
        }
    }

    #[test]
    fn generic_vessel_credit_uses_one_prediction_for_both_rows() {
        let dims = [10, 10, 10];
        let geo = VolumeGeometry::unit(dims);
        let mut gt_data = vec![0u8; geo.voxel_count()];
        for x in 1..5 {
            gt_data[geo.linear(x, 2, 2)] = 1;
            gt_data[geo.linear(x, 7, 7)] = 2;
        }
        let mut names = BTreeMap::new();
        names.insert(1u8, "artery".to_string());
        names.insert(2u8, "vein".to_string());
        let gt = LabelVolume::new(geo.clone(), gt_data, names).unwrap();
        // binary vessel prediction covering the artery only
        let mut pred_data = vec![0u8; geo.voxel_count()];
        for x in 1..5 {
            pred_data[geo.linear(x, 2, 2)] = 1;
        }
        let pred = LabelVolume::binary(geo, pred_data, "vessel").unwrap();
        let opts = EvaluateOptions {
            pairing: [("artery".to_string(), 1u8), ("vein".to_string(), 1u8)].into(),
            centerlines: BTreeMap::new(),
        };
        let report = evaluate_case(&gt, &pred, &opts, None).unwrap();
        assert_eq!(report.per_label["artery"].mdc, Some(1.0));
        assert_eq!(report.per_label["vein"].mdc, Some(0.0));
    }

    #[test]
    fn missing_pairing_entry_is_config_error_and_absent_label_is_not() {
        let dims = [6, 6, 6];
        let geo = VolumeGeometry::unit(dims);
        let mut gt_data = vec![0u8; geo.voxel_count()];
        gt_data[geo.linear(1, 1, 1)] = 1;
        let mut names = BTreeMap::new();
        names.insert(1u8, "artery".to_string());
        names.insert(2u8, "vein".to_string()); // named but absent from data
        let gt = LabelVolume::new(geo.clone(), gt_data, names).unwrap();
        let pred = LabelVolume::binary(geo, vec![0; 216], "p").unwrap();

        let incomplete = EvaluateOptions {
            pairing: [("artery".to_string(), 1u8)].into(),
            centerlines: BTreeMap::new(),
        };
        assert!(matches!(
            evaluate_case(&gt, &pred, &incomplete, None),
            Err(Error::Config(_))
        ));

        let full = EvaluateOptions {
            pairing: [("artery".to_string(), 1u8), ("vein".to_string(), 1u8)].into(),
            centerlines: BTreeMap::new(),
        };
        let report = evaluate_case(&gt, &pred, &full, None).unwrap();
        let vein = &report.per_label["vein"];
        assert_eq!(vein.gt_voxels, 0);
        assert!(vein.mdc.is_none());
    }

    #[test]
    fn csv_rows_shape() {
        let dims = [6, 6, 6];
        let gt = mask_of(dims, &[[1, 1, 1], [2, 1, 1]]);
        let opts = EvaluateOptions {
            pairing: [("m".to_string(), 1u8)].into(),
            centerlines: BTreeMap::new(),
        };
        let report = evaluate_case(&gt, &gt, &opts, None).unwrap();
        let rows = report_csv_rows("case7", &report);
        assert!(rows.starts_with("case7,m,1.000000,1.000000,0.000000,2,"));
        assert_eq!(csv_header().split(',').count(), 7);
    }

    #[test]
    fn aggregate_mean_sd() {
        let (mean, sd) = aggregate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((mean - 2.5).abs() < 1e-12);
        assert!((sd - (1.25f64).sqrt()).abs() < 1e-12);
        assert!(aggregate(&[]).is_none());
    }
}
