//! On-disk formats: optical flow (.flo), depth (PFM), strands (HAIRTXT),
//! oriented point clouds (.opc), camera rigs (JSON), PNG images, and model
//! checkpoints.

mod checkpoint;
mod flo;
mod hair;
mod opc;
mod pfm;
mod png;
mod rig_json;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use flo::{read_flo, write_flo};
pub use hair::{read_strands, write_strands};
pub use opc::{read_opc, write_opc};
pub use pfm::{read_pfm, write_pfm};
pub use png::{read_png, write_png};
pub use rig_json::{read_rig, write_rig, CameraRecord, Extrinsics, RigFile};
