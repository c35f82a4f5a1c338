//! Hybrid strand/volume hair performance capture.
//!
//! The pipeline has two stages. Stage one tracks a set of guide strands
//! through a multi-view sequence using optical flow, depth and an oriented
//! point cloud as data terms ([`track`]). Stage two attaches volumetric
//! primitives to the tracked strands and optimizes their payloads and
//! corrective transforms by differentiable raymarching of color and 3D
//! scene flow, driven by a latent-variable model ([`model`], [`march`],
//! [`train`]).
//!
//! Everything needed to exercise the pipeline end to end on synthetic data
//! lives in [`sim`]: a spherical camera rig, a scripted hair scene, and a
//! ground-truth renderer that emits images, depth, flow and per-frame
//! oriented reconstructions in the on-disk dataset layout ([`io`]).

pub mod autodiff;
pub mod error;
pub mod geom;
pub mod io;
pub mod march;
pub mod math;
pub mod opt;
pub mod prims;
pub mod sim;
pub mod track;

pub use error::{Error, Result};

/// Millimeters per meter. Scene geometry is stored in meters; the tracker
/// and the geometric training losses operate in millimeters (the weight
/// constants assume millimeter units).
pub const MM_PER_M: f64 = 1000.0;

/// How batched gradient contributions are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Determinism {
    /// Fixed-order reduction; bit-reproducible across runs and thread counts.
    Deterministic,
    /// Unordered parallel reduction; faster, not bit-stable.
    Fast,
}

impl Default for Determinism {
    fn default() -> Self {
        Determinism::Deterministic
    }
}
