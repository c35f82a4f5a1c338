//! Camera rig JSON: intrinsics plus world-to-camera extrinsics per camera.

use crate::geom::PinholeCamera;
use crate::math::{Mat3, Vec3};
use crate::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RigFile {
    pub cameras: Vec<CameraRecord>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CameraRecord {
    pub id: usize,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: Extrinsics,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Extrinsics {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: Vec3,
}

impl From<&PinholeCamera> for CameraRecord {
    fn from(c: &PinholeCamera) -> Self {
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            rotation[i * 3..i * 3 + 3].copy_from_slice(&c.rot[i]);
        }
        CameraRecord {
            id: c.id,
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            world_to_camera: Extrinsics { rotation, translation: c.t },
        }
    }
}

impl From<&CameraRecord> for PinholeCamera {
    fn from(r: &CameraRecord) -> Self {
        let mut rot: Mat3 = [[0.0; 3]; 3];
        for i in 0..3 {
            rot[i].copy_from_slice(&r.world_to_camera.rotation[i * 3..i * 3 + 3]);
        }
        PinholeCamera {
            id: r.id,
            width: r.width,
            height: r.height,
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            rot,
            t: r.world_to_camera.translation,
        }
    }
}

pub fn write_rig(path: &Path, cameras: &[PinholeCamera]) -> Result<()> {
    let rig = RigFile { cameras: cameras.iter().map(CameraRecord::from).collect() };
    let text = serde_json::to_string_pretty(&rig).map_err(|e| Error::Json { path: path.into(), source: e })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_rig(path: &Path) -> Result<Vec<PinholeCamera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rig: RigFile =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
    Ok(rig.cameras.iter().map(PinholeCamera::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.json");
        let cams = vec![
            PinholeCamera::look_at(0, [0.0, 0.0, -1.0], [0.0; 3], [0.0, 1.0, 0.0], 128, 128, 140.0),
            PinholeCamera::look_at(1, [1.0, 0.2, 0.3], [0.0; 3], [0.0, 1.0, 0.0], 64, 48, 90.0),
        ];
        write_rig(&path, &cams).unwrap();
        let back = read_rig(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a, b);
        }
    }
}
