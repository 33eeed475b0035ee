//! Maximum-intensity projection rendering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::volume::ScalarVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::Argument(format!("axis must be x, y or z, got '{other}'"))),
        }
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Project the per-ray maximum along `axis`, then window `[lo, hi]` HU
/// linearly to 0..=255 (clamped).
pub fn mip_render(vol: &ScalarVolume, axis: Axis, window: (f32, f32)) -> Result<GrayImage> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Argument(format!("window lo must be < hi, got {lo}..{hi}")));
    }
    let [nx, ny, nz] = vol.geometry.dims;
    let (width, height, depth) = match axis {
        Axis::X => (ny, nz, nx),
        Axis::Y => (nx, nz, ny),
        Axis::Z => (nx, ny, nz),
    };
    let mut pixels = vec![0u8; width * height];
    let scale = 255.0 / (hi - lo);
    par::for_each_chunk_mut(&mut pixels, width, |row, line| {
        for (col, px) in line.iter_mut().enumerate() {
            let mut best = f32::NEG_INFINITY;
            for d in 0..depth {
                let (x, y, z) = match axis {
                    Axis::X => (d, col, row),
                    Axis::Y => (col, d, row),
                    Axis::Z => (col, row, d),
                };
                best = best.max(vol.get(x, y, z));
            }
            *px = (((best - lo) * scale).round()).clamp(0.0, 255.0) as u8;
        }
    });
    Ok(GrayImage { width, height, pixels })
}
