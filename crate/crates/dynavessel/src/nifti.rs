//! NIfTI-1 file I/O (.nii / .nii.gz), single-file variant only.
//!
//! Reads uint8/int16/uint16/float32/float64 payloads with scl_slope/
//! scl_inter applied, preferring the sform affine over the qform when both
//! are present. Writes float32 (scalar) or uint8 (label) with the sform
//! set and magic "n+1". Voxel data sits right after the 4-byte extension
//! flag at offset 352.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::volume::{LabelVolume, ScalarVolume};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

struct Header {
    dim: [i16; 8],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

fn read_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

fn read_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn read_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "file too small for a NIfTI-1 header ({} bytes)",
            bytes.len()
        )));
    }
    let magic = &bytes[344..348];
    let is_n1 = &magic[..3] == b"n+1";
    let is_ni1 = &magic[..3] == b"ni1";
    if !is_n1 && !is_ni1 {
        return Err(Error::Format("magic bytes are neither 'n+1' nor 'ni1'".into()));
    }
    if is_ni1 {
        return Err(Error::Unsupported(
            "detached .hdr/.img pairs (magic 'ni1') are not supported".into(),
        ));
    }
    let sizeof_hdr = read_i32(bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(Error::Format(format!(
            "sizeof_hdr is {sizeof_hdr}, expected 348 (big-endian files are not supported)"
        )));
    }
    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = read_i16(bytes, 40 + 2 * i);
    }
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = read_f32(bytes, 76 + 4 * i);
    }
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = read_f32(bytes, 280 + 16 * r + 4 * c);
        }
    }
    Ok(Header {
        dim,
        datatype: read_i16(bytes, 70),
        pixdim,
        vox_offset: read_f32(bytes, 108),
        scl_slope: read_f32(bytes, 112),
        scl_inter: read_f32(bytes, 116),
        qform_code: read_i16(bytes, 252),
        sform_code: read_i16(bytes, 254),
        quatern: [read_f32(bytes, 256), read_f32(bytes, 260), read_f32(bytes, 264)],
        qoffset: [read_f32(bytes, 268), read_f32(bytes, 272), read_f32(bytes, 276)],
        srow,
    })
}

fn geometry_from_header(h: &Header) -> Result<VolumeGeometry> {
    if h.dim[0] != 3 {
        return Err(Error::Dimensionality(format!(
            "dim[0] is {}, only 3-dimensional volumes are handled",
            h.dim[0]
        )));
    }
    let dims = [h.dim[1] as usize, h.dim[2] as usize, h.dim[3] as usize];
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Format(format!("zero dimension in header: {dims:?}")));
    }

    let geo = if h.sform_code > 0 {
        let mut spacing = [0.0f64; 3];
        let mut direction = [[0.0f64; 3]; 3];
        for c in 0..3 {
            let col = [h.srow[0][c] as f64, h.srow[1][c] as f64, h.srow[2][c] as f64];
            let norm = (col[0] * col[0] + col[1] * col[1] + col[2] * col[2]).sqrt();
            if norm <= 0.0 {
                return Err(Error::Format("sform has a zero-length column".into()));
            }
            spacing[c] = norm;
            for r in 0..3 {
                direction[r][c] = col[r] / norm;
            }
        }
        VolumeGeometry {
            dims,
            spacing,
            origin: [h.srow[0][3] as f64, h.srow[1][3] as f64, h.srow[2][3] as f64],
            direction,
        }
    } else if h.qform_code > 0 {
        let (b, c, d) = (h.quatern[0] as f64, h.quatern[1] as f64, h.quatern[2] as f64);
        let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let mut direction = [
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ];
        for row in &mut direction {
            row[2] *= qfac;
        }
        VolumeGeometry {
            dims,
            spacing: [
                h.pixdim[1].abs() as f64,
                h.pixdim[2].abs() as f64,
                h.pixdim[3].abs() as f64,
            ],
            origin: [h.qoffset[0] as f64, h.qoffset[1] as f64, h.qoffset[2] as f64],
            direction,
        }
    } else {
        // neither affine present: grid-aligned with pixdim spacing
        let sp = |v: f32| if v > 0.0 { v as f64 } else { 1.0 };
        VolumeGeometry::axis_aligned(
            dims,
            [sp(h.pixdim[1]), sp(h.pixdim[2]), sp(h.pixdim[3])],
            [0.0; 3],
        )
    };
    geo.validate()?;
    Ok(geo)
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        MultiGzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn raw_values(h: &Header, bytes: &[u8], n: usize) -> Result<Vec<f64>> {
    let elem = match h.datatype {
        DT_UINT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::Unsupported(format!("NIfTI datatype code {other}")));
        }
    };
    let offset = (h.vox_offset as usize).max(VOX_OFFSET);
    let need = offset + n * elem;
    if bytes.len() < need {
        return Err(Error::Format(format!(
            "file truncated: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    let body = &bytes[offset..offset + n * elem];
    let mut out = Vec::with_capacity(n);
    match h.datatype {
        DT_UINT8 => out.extend(body.iter().map(|&v| v as f64)),
        DT_INT16 => out.extend(
            body.chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64),
        ),
        DT_UINT16 => out.extend(
            body.chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64),
        ),
        DT_FLOAT32 => out.extend(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
        ),
        DT_FLOAT64 => out.extend(body.chunks_exact(8).map(|c| {
            f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
        })),
        _ => unreachable!(),
    }
    Ok(out)
}

/// Read a scalar volume, converting to f32 HU with scaling applied.
pub fn read_volume<P: AsRef<Path>>(path: P) -> Result<ScalarVolume> {
    let bytes = read_file_bytes(path.as_ref())?;
    let h = parse_header(&bytes)?;
    let geo = geometry_from_header(&h)?;
    let n = geo.voxel_count();
    let raw = raw_values(&h, &bytes, n)?;
    let apply_scale = h.scl_slope != 0.0 && (h.scl_slope != 1.0 || h.scl_inter != 0.0);
    let mut data = Vec::with_capacity(n);
    for v in raw {
        let hu = if apply_scale {
            v * h.scl_slope as f64 + h.scl_inter as f64
        } else {
            v
        };
        if !hu.is_finite() {
            return Err(Error::Format("volume contains non-finite values".into()));
        }
        data.push(hu as f32);
    }
    ScalarVolume::new(geo, data)
}

/// Read a label volume. Requires an integer datatype with values in 0..=255;
/// labels are auto-named by their decimal value.
pub fn read_labels<P: AsRef<Path>>(path: P) -> Result<LabelVolume> {
    let bytes = read_file_bytes(path.as_ref())?;
    let h = parse_header(&bytes)?;
    let geo = geometry_from_header(&h)?;
    if !matches!(h.datatype, DT_UINT8 | DT_INT16 | DT_UINT16) {
        return Err(Error::Unsupported(format!(
            "label volumes require an integer datatype, got code {}",
            h.datatype
        )));
    }
    let n = geo.voxel_count();
    let raw = raw_values(&h, &bytes, n)?;
    let mut data = Vec::with_capacity(n);
    let mut names = BTreeMap::new();
    for v in raw {
        if v < 0.0 || v > 255.0 || v.fract() != 0.0 {
            return Err(Error::Format(format!("label value {v} outside 0..=255")));
        }
        let label = v as u8;
        if label != 0 {
            names.entry(label).or_insert_with(|| label.to_string());
        }
        data.push(label);
    }
    LabelVolume::new(geo, data, names)
}

fn build_header(geo: &VolumeGeometry, datatype: i16, bitpix: i16) -> [u8; HEADER_SIZE] {
    let mut b = [0u8; HEADER_SIZE];
    let put_i32 = |b: &mut [u8], at: usize, v: i32| b[at..at + 4].copy_from_slice(&v.to_le_bytes());
    let put_i16 = |b: &mut [u8], at: usize, v: i16| b[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |b: &mut [u8], at: usize, v: f32| b[at..at + 4].copy_from_slice(&v.to_le_bytes());

    put_i32(&mut b, 0, HEADER_SIZE as i32);
    b[39] = 0; // dim_info
    put_i16(&mut b, 40, 3);
    for a in 0..3 {
        put_i16(&mut b, 42 + 2 * a, geo.dims[a] as i16);
    }
    for a in 3..7 {
        put_i16(&mut b, 42 + 2 * a, 1);
    }
    put_i16(&mut b, 70, datatype);
    put_i16(&mut b, 72, bitpix);
    put_f32(&mut b, 76, 1.0); // pixdim[0]: qfac
    for a in 0..3 {
        put_f32(&mut b, 80 + 4 * a, geo.spacing[a] as f32);
    }
    put_f32(&mut b, 108, VOX_OFFSET as f32);
    put_f32(&mut b, 112, 1.0); // scl_slope
    put_f32(&mut b, 116, 0.0); // scl_inter
    b[123] = 2; // xyzt_units: millimetres
    let descrip = b"dynavessel";
    b[148..148 + descrip.len()].copy_from_slice(descrip);
    put_i16(&mut b, 252, 0); // qform_code
    put_i16(&mut b, 254, 1); // sform_code
    for r in 0..3 {
        for c in 0..3 {
            put_f32(&mut b, 280 + 16 * r + 4 * c, (geo.direction[r][c] * geo.spacing[c]) as f32);
        }
        put_f32(&mut b, 280 + 16 * r + 12, geo.origin[r] as f32);
    }
    b[344..348].copy_from_slice(b"n+1\0");
    b
}

fn write_bytes(path: &Path, header: &[u8], body: &[u8]) -> Result<()> {
    let mut payload = Vec::with_capacity(header.len() + 4 + body.len());
    payload.extend_from_slice(header);
    payload.extend_from_slice(&[0u8; 4]); // no extensions
    payload.extend_from_slice(body);
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&payload)?;
        enc.finish()?;
    } else {
        let mut f = file;
        f.write_all(&payload)?;
    }
    Ok(())
}

/// Write a scalar volume as float32.
pub fn write_volume<P: AsRef<Path>>(vol: &ScalarVolume, path: P) -> Result<()> {
    let header = build_header(&vol.geometry, DT_FLOAT32, 32);
    let mut body = Vec::with_capacity(vol.data.len() * 4);
    for v in &vol.data {
        body.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path.as_ref(), &header, &body)
}

/// Write a label volume as uint8.
pub fn write_labels<P: AsRef<Path>>(vol: &LabelVolume, path: P) -> Result<()> {
    let header = build_header(&vol.geometry, DT_UINT8, 8);
    write_bytes(path.as_ref(), &header, &vol.data)
}
