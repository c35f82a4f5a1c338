//! On-disk dataset: generation and loading.
//!
//! Layout under the dataset root:
//!
//! ```text
//! rig.json                     camera intrinsics + extrinsics
//! meta.json                    script echo, seed, per-frame head poses
//! frames/{t}/cam{i}.png        8-bit RGB rendering
//! frames/{t}/cam{i}_depth.pfm  camera-axis depth, 0 = background
//! flow/{t}/cam{i}_fwd.flo      optical flow t -> t+1 (zero at the last frame)
//! flow/{t}/cam{i}_bwd.flo      optical flow t -> t-1 (zero at frame 0)
//! strands/{t}_guide.hair       animated guide strands
//! strands/{t}_dense.hair       animated dense hood
//! recon/{t}.opc                oriented point cloud ("x y z dx dy dz" lines)
//! ```

use super::render::{build_tube_scene, gt_flow, render_gt_view, strand_colors, GtRenderConfig};
use super::{build_rig, simulate_recon, RigSpec, SceneMotion, SceneScript};
use crate::geom::{DepthMap, FlowMap, Image, OrientedPointCloud, PinholeCamera, StrandSet};
use crate::io;
use crate::math::Rigid;
use crate::{Error, Result};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// A rigid head pose, row-major rotation plus translation (x' = R x + t).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HeadPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Rigid> for HeadPose {
    fn from(r: &Rigid) -> Self {
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            rotation[i * 3..i * 3 + 3].copy_from_slice(&r.rot[i]);
        }
        HeadPose { rotation, translation: r.t }
    }
}

impl From<&HeadPose> for Rigid {
    fn from(p: &HeadPose) -> Self {
        let mut rot = [[0.0; 3]; 3];
        for i in 0..3 {
            rot[i].copy_from_slice(&p.rotation[i * 3..i * 3 + 3]);
        }
        Rigid { rot, t: p.translation }
    }
}

/// Everything about a dataset that is not per-frame bulk data.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Meta {
    pub seed: u64,
    pub script: SceneScript,
    pub render: GtRenderConfig,
    pub head_poses: Vec<HeadPose>,
}

/// Generates a complete synthetic dataset under `dir`.
pub fn generate_dataset(
    dir: &Path,
    rig: &RigSpec,
    script: &SceneScript,
    render: &GtRenderConfig,
    seed: u64,
) -> Result<()> {
    let cameras = build_rig(rig)?;
    let motion = SceneMotion::build(script, seed)?;
    for sub in ["frames", "flow", "strands", "recon"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(&dir.join(sub), e))?;
    }
    io::write_rig(&dir.join("rig.json"), &cameras)?;
    let meta = Meta {
        seed,
        script: script.clone(),
        render: render.clone(),
        head_poses: (0..script.frame_count).map(|t| HeadPose::from(&motion.head_pose(t))).collect(),
    };
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Json { path: dir.join("meta.json"), source: e })?;
    std::fs::write(dir.join("meta.json"), text).map_err(|e| Error::io(&dir.join("meta.json"), e))?;

    let colors = strand_colors(motion.rest_dense.num_strands());
    let results: Vec<Result<()>> = (0..script.frame_count)
        .into_par_iter()
        .map(|t| write_frame(dir, &cameras, &motion, &colors, render, t))
        .collect();
    for r in results {
        r?;
    }
    Ok(())
}

fn write_frame(
    dir: &Path,
    cameras: &[PinholeCamera],
    motion: &SceneMotion,
    colors: &[[f64; 3]],
    render: &GtRenderConfig,
    t: usize,
) -> Result<()> {
    let script = &motion.script;
    let frame_dir = dir.join("frames").join(t.to_string());
    let flow_dir = dir.join("flow").join(t.to_string());
    std::fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
    std::fs::create_dir_all(&flow_dir).map_err(|e| Error::io(&flow_dir, e))?;

    let guides = motion.guides_at(t);
    let dense = motion.dense_at(t);
    io::write_strands(&dir.join("strands").join(format!("{t}_guide.hair")), &guides)?;
    io::write_strands(&dir.join("strands").join(format!("{t}_dense.hair")), &dense)?;
    let recon = simulate_recon(
        &dense,
        script.recon_noise_m,
        script.recon_drop_rate,
        motion.seed,
        t,
    );
    io::write_opc(&dir.join("recon").join(format!("{t}.opc")), &recon)?;

    let tubes = build_tube_scene(&dense, colors, render);
    for cam in cameras {
        let view = render_gt_view(cam, &tubes, render);
        io::write_png(&frame_dir.join(format!("cam{}.png", cam.id)), &view.image)?;
        io::write_pfm(&frame_dir.join(format!("cam{}_depth.pfm", cam.id)), &view.depth)?;
        let fwd = if t + 1 < script.frame_count {
            gt_flow(motion, &view, cam, t, t + 1, script.flow_noise_px)
        } else {
            FlowMap::new(cam.width, cam.height, 2)
        };
        let bwd = if t > 0 {
            gt_flow(motion, &view, cam, t, t - 1, script.flow_noise_px)
        } else {
            FlowMap::new(cam.width, cam.height, 2)
        };
        io::write_flo(&flow_dir.join(format!("cam{}_fwd.flo", cam.id)), &fwd)?;
        io::write_flo(&flow_dir.join(format!("cam{}_bwd.flo", cam.id)), &bwd)?;
    }
    Ok(())
}

/// Read access to a generated dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    pub cameras: Vec<PinholeCamera>,
    pub meta: Meta,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let cameras = io::read_rig(&root.join("rig.json"))?;
        let text = std::fs::read_to_string(root.join("meta.json"))
            .map_err(|e| Error::io(&root.join("meta.json"), e))?;
        let meta: Meta = serde_json::from_str(&text)
            .map_err(|e| Error::Json { path: root.join("meta.json"), source: e })?;
        Ok(Dataset { root: root.to_path_buf(), cameras, meta })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frame_count(&self) -> usize {
        self.meta.script.frame_count
    }

    pub fn head_pose(&self, t: usize) -> Rigid {
        Rigid::from(&self.meta.head_poses[t])
    }

    pub fn image(&self, t: usize, cam: usize) -> Result<Image> {
        io::read_png(&self.root.join("frames").join(t.to_string()).join(format!("cam{cam}.png")))
    }

    pub fn depth(&self, t: usize, cam: usize) -> Result<DepthMap> {
        io::read_pfm(
            &self.root.join("frames").join(t.to_string()).join(format!("cam{cam}_depth.pfm")),
        )
    }

    /// Flow at frame t: forward = t→t+1, backward = t→t−1.
    pub fn flow(&self, t: usize, cam: usize, forward: bool) -> Result<FlowMap> {
        let tag = if forward { "fwd" } else { "bwd" };
        io::read_flo(&self.root.join("flow").join(t.to_string()).join(format!("cam{cam}_{tag}.flo")))
    }

    pub fn guides(&self, t: usize) -> Result<StrandSet> {
        io::read_strands(&self.root.join("strands").join(format!("{t}_guide.hair")))
    }

    pub fn dense(&self, t: usize) -> Result<StrandSet> {
        io::read_strands(&self.root.join("strands").join(format!("{t}_dense.hair")))
    }

    pub fn recon(&self, t: usize) -> Result<OrientedPointCloud> {
        io::read_opc(&self.root.join("recon").join(format!("{t}.opc")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_setup() -> (RigSpec, SceneScript, GtRenderConfig) {
        let rig =
            RigSpec { count: 2, width: 32, height: 32, focal_px: 64.0, ..Default::default() };
        let script = SceneScript {
            guide_count: 4,
            nodes_per_strand: 10,
            densify_factor: 2,
            frame_count: 4,
            ..Default::default()
        };
        (rig, script, GtRenderConfig::default())
    }

    #[test]
    fn dataset_round_trips_bit_identically() {
        let (rig, script, render) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), &rig, &script, &render, 77).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.cameras.len(), 2);
        assert_eq!(ds.frame_count(), 4);

        // Regenerate into a second directory: every file must be identical.
        let dir2 = tempfile::tempdir().unwrap();
        generate_dataset(dir2.path(), &rig, &script, &render, 77).unwrap();
        for entry in walk(dir.path()) {
            let rel = entry.strip_prefix(dir.path()).unwrap();
            let a = std::fs::read(&entry).unwrap();
            let b = std::fs::read(dir2.path().join(rel)).unwrap();
            assert_eq!(a, b, "file {} differs between runs", rel.display());
        }

        // Strands and flow round trip through their formats.
        let motion = SceneMotion::build(&script, 77).unwrap();
        let guides = ds.guides(2).unwrap();
        let want = motion.guides_at(2);
        for (a, b) in guides.nodes().iter().zip(want.nodes()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
        let flow = ds.flow(1, 0, true).unwrap();
        assert_eq!(flow.width(), 32);
        let depth = ds.depth(0, 1).unwrap();
        assert_eq!(depth.height(), 32);
        let img = ds.image(3, 0).unwrap();
        assert_eq!(img.channels(), 3);
        let recon = ds.recon(0).unwrap();
        assert!(!recon.is_empty());
    }

    #[test]
    fn boundary_frames_have_zero_padded_flow() {
        let (rig, script, render) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), &rig, &script, &render, 5).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        let last = script.frame_count - 1;
        assert!(ds.flow(last, 0, true).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(ds.flow(0, 0, false).unwrap().data().iter().all(|v| *v == 0.0));
        // Interior frames have real motion somewhere.
        assert!(ds.flow(1, 0, true).unwrap().data().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn head_poses_round_trip_through_meta() {
        let (rig, script, render) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), &rig, &script, &render, 9).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        let motion = SceneMotion::build(&script, 9).unwrap();
        for t in 0..script.frame_count {
            let a = ds.head_pose(t);
            let b = motion.head_pose(t);
            for i in 0..3 {
                assert!((a.t[i] - b.t[i]).abs() < 1e-15);
                for j in 0..3 {
                    assert!((a.rot[i][j] - b.rot[i][j]).abs() < 1e-15);
                }
            }
        }
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }
}
