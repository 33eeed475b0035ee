//! Topology-preserving 3D thinning.
//!
//! Iteratively deletes simple border points in six directional
//! subiterations until stable. A point is simple when removing it changes
//! neither the foreground nor the background topology of its 3x3x3
//! neighborhood, characterized by two local counts (Bertrand/Malandain):
//! exactly one 26-component of foreground among the 26 neighbors, and
//! exactly one 6-component of background within the 18-neighborhood that
//! touches a face neighbor. Curve endpoints (a single foreground
//! neighbor) are preserved so tubes thin to centerline curves.

use std::sync::OnceLock;

use crate::par;
use crate::volume::{LabelVolume, VoxelSet};

/// Offsets of the 26 neighbors, raster order.
fn offsets26() -> &'static [[isize; 3]; 26] {
    static CELL: OnceLock<[[isize; 3]; 26]> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut out = [[0isize; 3]; 26];
        let mut i = 0;
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dx, dy, dz) != (0, 0, 0) {
                        out[i] = [dx, dy, dz];
                        i += 1;
                    }
                }
            }
        }
        out
    })
}

/// 26-adjacency between the 26 neighbor cells (for foreground
/// connectivity within the neighborhood).
fn adjacency26() -> &'static Vec<Vec<u8>> {
    static CELL: OnceLock<Vec<Vec<u8>>> = OnceLock::new();
    CELL.get_or_init(|| {
        let offs = offsets26();
        (0..26)
            .map(|a| {
                (0..26)
                    .filter(|&b| {
                        b != a
                            && (0..3).all(|k| (offs[a][k] - offs[b][k]).abs() <= 1)
                    })
                    .map(|b| b as u8)
                    .collect()
            })
            .collect()
    })
}

/// Indices (into the 26-neighbor list) of the 18-neighborhood (face and
/// edge neighbors), the 6-adjacency between them, and which are faces.
struct N18Tables {
    members: Vec<u8>,
    adjacency: Vec<Vec<u8>>,
    is_face: Vec<bool>,
}

fn n18_tables() -> &'static N18Tables {
    static CELL: OnceLock<N18Tables> = OnceLock::new();
    CELL.get_or_init(|| {
        let offs = offsets26();
        let members: Vec<u8> = (0..26)
            .filter(|&i| {
                let o = offs[i];
                o[0].abs() + o[1].abs() + o[2].abs() <= 2
            })
            .map(|i| i as u8)
            .collect();
        let is_face = members
            .iter()
            .map(|&i| {
                let o = offs[i as usize];
                o[0].abs() + o[1].abs() + o[2].abs() == 1
            })
            .collect();
        let adjacency = members
            .iter()
            .map(|&a| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| {
                        let (oa, ob) = (offs[a as usize], offs[b as usize]);
                        let manhattan: isize =
                            (0..3).map(|k| (oa[k] - ob[k]).abs()).sum();
                        manhattan == 1
                    })
                    .map(|(j, _)| j as u8)
                    .collect()
            })
            .collect();
        N18Tables { members, adjacency, is_face }
    })
}

struct Grid<'a> {
    data: &'a [bool],
    dims: [usize; 3],
}

impl Grid<'_> {
    #[inline]
    fn fg(&self, x: isize, y: isize, z: isize) -> bool {
        let [nx, ny, nz] = self.dims;
        if x < 0 || y < 0 || z < 0 {
            return false;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= nx || y >= ny || z >= nz {
            return false;
        }
        self.data[(z * ny + y) * nx + x]
    }

    /// Bitmask of foreground over the 26 neighbors.
    #[inline]
    fn neighborhood(&self, x: isize, y: isize, z: isize) -> u32 {
        let mut bits = 0u32;
        for (i, o) in offsets26().iter().enumerate() {
            if self.fg(x + o[0], y + o[1], z + o[2]) {
                bits |= 1 << i;
            }
        }
        bits
    }
}

fn count_fg26_components(bits: u32) -> u32 {
    let adj = adjacency26();
    let mut seen = 0u32;
    let mut components = 0;
    for start in 0..26u32 {
        let b = 1u32 << start;
        if bits & b == 0 || seen & b != 0 {
            continue;
        }
        components += 1;
        let mut stack = vec![start as u8];
        seen |= b;
        while let Some(i) = stack.pop() {
            for &j in &adj[i as usize] {
                let bj = 1u32 << j;
                if bits & bj != 0 && seen & bj == 0 {
                    seen |= bj;
                    stack.push(j);
                }
            }
        }
    }
    components
}

/// Number of 6-components of background within the 18-neighborhood that
/// contain at least one face neighbor.
fn count_bg6_components(bits: u32) -> u32 {
    let t = n18_tables();
    let n = t.members.len();
    let mut bg = vec![false; n];
    for (j, &i) in t.members.iter().enumerate() {
        bg[j] = bits & (1u32 << i) == 0;
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if !bg[start] || seen[start] {
            continue;
        }
        let mut touches_face = false;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            touches_face |= t.is_face[i];
            for &j in &t.adjacency[i] {
                let j = j as usize;
                if bg[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if touches_face {
            components += 1;
        }
    }
    components
}

#[inline]
fn is_simple(bits: u32) -> bool {
    bits != 0 && count_fg26_components(bits) == 1 && count_bg6_components(bits) == 1
}

#[inline]
fn is_endpoint(bits: u32) -> bool {
    bits.count_ones() <= 1
}

const DIRECTIONS: [[isize; 3]; 6] =
    [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]];

/// Thin a binary mask to a one-voxel-wide skeleton. The output is a
/// subset of the mask and preserves its 26-connected component count.
pub fn skeletonize(mask: &LabelVolume) -> VoxelSet {
    let geo = &mask.geometry;
    let [nx, ny, nz] = geo.dims;
    let mut fg: Vec<bool> = mask.data.iter().map(|&v| v != 0).collect();

    loop {
        let mut changed = false;
        for dir in DIRECTIONS {
            // candidate collection is a pure read; parallel per slice,
            // concatenated in slice order so the list is ascending
            let per_slice = {
                let grid = Grid { data: &fg, dims: geo.dims };
                par::map_indexed(nz, |z| {
                    let mut out = Vec::new();
                    let zi = z as isize;
                    for y in 0..ny as isize {
                        for x in 0..nx as isize {
                            if !grid.fg(x, y, zi) {
                                continue;
                            }
                            // border point of this direction
                            if grid.fg(x + dir[0], y + dir[1], zi + dir[2]) {
                                continue;
                            }
                            let bits = grid.neighborhood(x, y, zi);
                            if !is_endpoint(bits) && is_simple(bits) {
                                out.push((z * ny + y as usize) * nx + x as usize);
                            }
                        }
                    }
                    out
                })
            };
            // sequential re-check: earlier deletions in this subiteration
            // can change simplicity or create new endpoints
            for idx in per_slice.into_iter().flatten() {
                let x = (idx % nx) as isize;
                let y = ((idx / nx) % ny) as isize;
                let z = (idx / (nx * ny)) as isize;
                let grid = Grid { data: &fg, dims: geo.dims };
                let bits = grid.neighborhood(x, y, z);
                if !is_endpoint(bits) && is_simple(bits) {
                    fg[idx] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut indices = Vec::new();
    for (i, &v) in fg.iter().enumerate() {
        if v {
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            indices.push([x as u32, y as u32, z as u32]);
        }
    }
    VoxelSet::new(geo.clone(), indices).expect("skeleton indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VolumeGeometry;
    use crate::segmentation::{connected_components, Connectivity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> LabelVolume {
        let geo = VolumeGeometry::unit(dims);
        let mut data = vec![0u8; geo.voxel_count()];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if f(x, y, z) {
                        data[geo.linear(x, y, z)] = 1;
                    }
                }
            }
        }
        LabelVolume::binary(geo, data, "m").unwrap()
    }

    #[test]
    fn simple_point_base_cases() {
        // lone voxel: zero fg components, not simple
        assert!(!is_simple(0));
        // one face neighbor: deletable (curve end handled by endpoint test)
        let face_idx = offsets26().iter().position(|o| *o == [1, 0, 0]).unwrap();
        assert!(is_simple(1 << face_idx));
        // two opposite face neighbors: deleting would disconnect them
        let other = offsets26().iter().position(|o| *o == [-1, 0, 0]).unwrap();
        assert!(!is_simple((1 << face_idx) | (1 << other)));
        // fully surrounded: deleting creates a cavity
        assert!(!is_simple((1 << 26) - 1));
    }

    #[test]
    fn single_voxel_survives() {
        let m = mask_from([5, 5, 5], |x, y, z| (x, y, z) == (2, 2, 2));
        let s = skeletonize(&m);
        assert_eq!(s.indices(), &[[2, 2, 2]]);
    }

    #[test]
    fn straight_tube_thins_to_axis_curve() {
        // radius-3 tube along x, length 40
        let m = mask_from([46, 13, 13], |x, y, z| {
            let dy = y as f64 - 6.0;
            let dz = z as f64 - 6.0;
            (3..43).contains(&x) && (dy * dy + dz * dz).sqrt() <= 3.0
        });
        let s = skeletonize(&m);
        assert!(!s.is_empty());
        // subset of the mask
        for &[x, y, z] in s.indices() {
            assert_eq!(m.get(x as usize, y as usize, z as usize), 1);
        }
        // one 26-connected curve
        let cc = connected_components(&s.to_mask("s"), Connectivity::TwentySix);
        assert_eq!(cc.sizes.len(), 1);
        // within 1.5 voxels of the analytic axis
        for &[_, y, z] in s.indices() {
            let dy = y as f64 - 6.0;
            let dz = z as f64 - 6.0;
            let d = (dy * dy + dz * dz).sqrt();
            assert!(d <= 1.5, "skeleton voxel {d:.2} voxels off axis");
        }
        // endpoints reach within 2 voxels of the tube ends
        let min_x = s.indices().iter().map(|v| v[0]).min().unwrap();
        let max_x = s.indices().iter().map(|v| v[0]).max().unwrap();
        assert!(min_x <= 5, "skeleton starts at {min_x}");
        assert!(max_x >= 40, "skeleton ends at {max_x}");
    }

    #[test]
    fn l_bend_preserves_single_component() {
        let m = mask_from([30, 30, 9], |x, y, z| {
            let in_arm1 = (3..27).contains(&x) && (3..9).contains(&y) && (2..7).contains(&z);
            let in_arm2 = (21..27).contains(&x) && (3..27).contains(&y) && (2..7).contains(&z);
            in_arm1 || in_arm2
        });
        let s = skeletonize(&m);
        for &[x, y, z] in s.indices() {
            assert_eq!(m.get(x as usize, y as usize, z as usize), 1);
        }
        let cc = connected_components(&s.to_mask("s"), Connectivity::TwentySix);
        assert_eq!(cc.sizes.len(), 1);
    }

    #[test]
    fn random_blobs_keep_component_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..12 {
            let m = mask_from([14, 14, 14], |_, _, _| rng.random_bool(0.25));
            let before = connected_components(&m, Connectivity::TwentySix).sizes.len();
            let s = skeletonize(&m);
            for &[x, y, z] in s.indices() {
                assert_eq!(m.get(x as usize, y as usize, z as usize), 1);
            }
            let after = connected_components(&s.to_mask("s"), Connectivity::TwentySix)
                .sizes
                .len();
            assert_eq!(before, after);
        }
    }
}
