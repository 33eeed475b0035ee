//! Content digests for caching and provenance.

use sha2::{Digest, Sha256};

use crate::volume::{LabelVolume, ScalarVolume};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn file_digest(path: &std::path::Path) -> crate::error::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn geometry_bytes(geo: &crate::geometry::VolumeGeometry) -> Vec<u8> {
    let mut out = Vec::with_capacity(3 * 8 + 15 * 8);
    for d in geo.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in geo.spacing.iter().chain(&geo.origin).chain(geo.direction.iter().flatten()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn scalar_volume_digest(vol: &ScalarVolume) -> String {
    let mut hasher = Sha256::new();
    hasher.update(geometry_bytes(&vol.geometry));
    for v in &vol.data {
        hasher.update(v.to_le_bytes());
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn label_volume_digest(vol: &LabelVolume) -> String {
    let mut hasher = Sha256::new();
    hasher.update(geometry_bytes(&vol.geometry));
    hasher.update(&vol.data);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
