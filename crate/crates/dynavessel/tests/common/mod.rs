//! Independent reference implementations (oracles) used by the
//! acceptance suite. Everything here recomputes results from first
//! principles with naive loops, deliberately sharing no code with the
//! library paths it checks.

#![allow(dead_code)]

use std::collections::HashSet;

use dynavessel::volume::{LabelVolume, ScalarVolume};

/// Exhaustive-count overlap ratio |gt ∩ pred| / |gt| over nonzero voxels.
pub fn naive_mdc(gt: &[u8], pred: &[u8]) -> f64 {
    let mut inter = 0u64;
    let mut total = 0u64;
    for (g, p) in gt.iter().zip(pred) {
        if *g != 0 {
            total += 1;
            if *p != 0 {
                inter += 1;
            }
        }
    }
    inter as f64 / total as f64
}

/// All-pairs directed mean surface distance in mm.
pub fn brute_force_adhd(gt_points: &[[f64; 3]], pred_points: &[[f64; 3]]) -> f64 {
    let mut sum = 0.0f64;
    for a in gt_points {
        let mut best = f64::INFINITY;
        for p in pred_points {
            let d2 = (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2) + (a[2] - p[2]).powi(2);
            best = best.min(d2);
        }
        sum += best.sqrt();
    }
    sum / gt_points.len() as f64
}

/// Naive per-voxel windowed reference for the local adaptive threshold.
pub fn naive_phansalkar(
    vol: &ScalarVolume,
    radius: isize,
    k: f64,
    r_param: f64,
    p: f64,
    q: f64,
) -> Vec<u8> {
    let [nx, ny, nz] = vol.geometry.dims;
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &vol.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let norm: Vec<f64> = vol
        .data
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)) as f64).clamp(0.0, 1.0))
        .collect();
    let mut out = vec![0u8; norm.len()];
    for z in 0..nz as isize {
        for y in 0..ny as isize {
            for x in 0..nx as isize {
                let mut sum = 0.0;
                let mut sq = 0.0;
                let mut count = 0.0;
                for dz in -radius..=radius {
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            let (qx, qy, qz) = (x + dx, y + dy, z + dz);
                            if qx < 0
                                || qy < 0
                                || qz < 0
                                || qx >= nx as isize
                                || qy >= ny as isize
                                || qz >= nz as isize
                            {
                                continue;
                            }
                            let v = norm[(qz as usize * ny + qy as usize) * nx + qx as usize];
                            sum += v;
                            sq += v * v;
                            count += 1.0;
                        }
                    }
                }
                let m = sum / count;
                let s = (sq / count - m * m).max(0.0).sqrt();
                let t = m * (1.0 + p * (-q * m).exp() + k * (s / r_param - 1.0));
                let i = (z as usize * ny + y as usize) * nx + x as usize;
                if norm[i] > t {
                    out[i] = 1;
                }
            }
        }
    }
    out
}

/// Exhaustive-scan reference for the maximum-entropy threshold
/// (Shannon form): fresh histogram, fresh entropy loops per candidate.
pub fn naive_kapur(vol: &ScalarVolume, bins: usize) -> f32 {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &vol.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let width = (hi - lo) as f64 / bins as f64;
    let mut hist = vec![0u64; bins];
    for &v in &vol.data {
        let b = (((v - lo) as f64 / width) as usize).min(bins - 1);
        hist[b] += 1;
    }
    let total: u64 = hist.iter().sum();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for t in 0..bins - 1 {
        let w0: u64 = hist[..=t].iter().sum();
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mut h = 0.0;
        for &c in &hist[..=t] {
            if c > 0 {
                let q = c as f64 / w0 as f64;
                h -= q * q.ln();
            }
        }
        for &c in &hist[t + 1..] {
            if c > 0 {
                let q = c as f64 / w1 as f64;
                h -= q * q.ln();
            }
        }
        if h > best.0 {
            best = (h, t);
        }
    }
    lo + ((best.1 + 1) as f64 * width) as f32
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Euler characteristic of the cubical complex spanned by unit voxels:
/// chi = V - E + F - C over distinct vertices, edges, faces and cubes.
/// For a thin structure without cavities, the cycle count (first Betti
/// number) is `components - chi`.
pub fn cubical_euler_characteristic(voxels: &[[u32; 3]]) -> i64 {
    let mut vertices: HashSet<(u32, u32, u32)> = HashSet::new();
    let mut edges: HashSet<(u32, u32, u32, u8)> = HashSet::new();
    let mut faces: HashSet<(u32, u32, u32, u8)> = HashSet::new();
    for &[x, y, z] in voxels {
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    vertices.insert((x + dx, y + dy, z + dz));
                }
            }
        }
        // 12 edges: axis + base corner within the cube
        for axis in 0..3u8 {
            for da in 0..2u32 {
                for db in 0..2u32 {
                    let corner = match axis {
                        0 => (x, y + da, z + db),
                        1 => (x + da, y, z + db),
                        _ => (x + da, y + db, z),
                    };
                    edges.insert((corner.0, corner.1, corner.2, axis));
                }
            }
        }
        // 6 faces: normal axis + base corner
        for axis in 0..3u8 {
            for d in 0..2u32 {
                let corner = match axis {
                    0 => (x + d, y, z),
                    1 => (x, y + d, z),
                    _ => (x, y, z + d),
                };
                faces.insert((corner.0, corner.1, corner.2, axis));
            }
        }
    }
    vertices.len() as i64 - edges.len() as i64 + faces.len() as i64 - voxels.len() as i64
}

/// 26-connected component count of a voxel list (independent flood fill).
pub fn component_count_26(voxels: &[[u32; 3]]) -> usize {
    let set: HashSet<[u32; 3]> = voxels.iter().copied().collect();
    let mut seen: HashSet<[u32; 3]> = HashSet::new();
    let mut count = 0;
    for &start in voxels {
        if seen.contains(&start) {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen.insert(start);
        while let Some([x, y, z]) = stack.pop() {
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let q = [x as i64 + dx, y as i64 + dy, z as i64 + dz];
                        if q.iter().any(|&v| v < 0) {
                            continue;
                        }
                        let q = [q[0] as u32, q[1] as u32, q[2] as u32];
                        if set.contains(&q) && !seen.contains(&q) {
                            seen.insert(q);
                            stack.push(q);
                        }
                    }
                }
            }
        }
    }
    count
}

/// Binary mask volume from a predicate over voxel indices.
pub fn mask_where(
    geo: dynavessel::VolumeGeometry,
    mut f: impl FnMut(usize, usize, usize) -> bool,
) -> LabelVolume {
    let [nx, ny, nz] = geo.dims;
    let mut data = vec![0u8; geo.voxel_count()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if f(x, y, z) {
                    data[(z * ny + y) * nx + x] = 1;
                }
            }
        }
    }
    LabelVolume::binary(geo, data, "mask").unwrap()
}
