//! Dynamic 4D-CTA processing toolkit.
//!
//! Builds the full chain needed to turn a dynamic (multi-frame) head CTA
//! study into artery/vein annotations and to score them:
//!
//! - volume substrate: NIfTI-1 I/O, interpolation, resampling, masking,
//!   MIP rendering ([`volume`], [`nifti`], [`mip`])
//! - synthetic dynamic-CTA phantoms with analytic ground truth ([`phantom`])
//! - rigid/affine intensity registration ([`registration`])
//! - baseline subtraction and artery/vein suppression ([`suppression`])
//! - thresholding, connected components, surfaces, 3D thinning
//!   ([`segmentation`])
//! - evaluation metrics: mDC, adHD, tSens, phase classification
//!   ([`metrics`])
//! - a declarative cached batch pipeline ([`pipeline`])
//!
//! Per-voxel kernels run data-parallel under the default `parallel`
//! feature and fall back to sequential loops without it; outputs are
//! bit-identical either way and for any thread count.

pub mod digest;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mip;
pub mod nifti;
pub mod phantom;
pub mod pipeline;
pub mod registration;
pub mod segmentation;
pub mod suppression;
pub mod transform;
pub mod volume;

mod par;

pub use error::{Error, Result};
pub use geometry::VolumeGeometry;
pub use transform::{AffineTransform, RigidParams};
pub use volume::{LabelVolume, ScalarVolume, VoxelSet, AIR_HU};
