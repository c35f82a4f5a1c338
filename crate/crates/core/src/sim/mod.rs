//! Synthetic multi-camera hair capture.
//!
//! Stands in for a physical capture dome: a Fibonacci-sphere camera rig, a
//! scripted hair scene (guide strands grown on an ellipsoid scalp, rigid
//! head rotation plus per-strand sway), densification of the guides into a
//! hood, a ground-truth tube renderer, exact optical flow by advecting
//! rendered surface points, and a strand-resampling stand-in for a
//! multi-view stereo reconstruction. Everything is a deterministic function
//! of (script, seed).

mod dataset;
mod render;

pub use dataset::{generate_dataset, Dataset, HeadPose, Meta};
pub use render::{
    build_tube_scene, flow_from_view, gt_flow, render_gt_view, strand_colors, GtRenderConfig,
    GtView, TubeScene,
};

use crate::geom::{OrientedPoint, OrientedPointCloud, PinholeCamera, StrandSet};
use crate::math::{self, Rigid, Vec3};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Spacing of rest-pose strand nodes, meters.
const GUIDE_STEP_M: f64 = 5e-3;
/// Arc-length spacing of simulated reconstruction points (~1 point/mm).
const RECON_STEP_M: f64 = 1e-3;
/// Lateral offset applied to strands inserted by densification, meters.
const DENSIFY_JITTER_M: f64 = 1e-3;

// RNG stream tags so every consumer of the scene seed is independent.
const STREAM_GUIDES: u64 = 1;
const STREAM_DENSIFY: u64 = 2;
const STREAM_RECON: u64 = 3;
const STREAM_FLOW_NOISE: u64 = 4;

pub(crate) fn stream_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) ^ (a << 20) ^ b);
    rng
}

/// Spherical camera rig description.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RigSpec {
    pub count: usize,
    /// Distance of every camera from the target, meters.
    pub radius: f64,
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub target: Vec3,
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec {
            count: 8,
            radius: 1.0,
            width: 128,
            height: 128,
            focal_px: 256.0,
            target: [0.0; 3],
        }
    }
}

/// Cameras on a Fibonacci sphere around the target, all looking inward.
pub fn build_rig(spec: &RigSpec) -> Result<Vec<PinholeCamera>> {
    if spec.radius <= 0.0 {
        return Err(Error::Config("rig radius must be positive".into()));
    }
    if spec.count == 0 {
        return Err(Error::Config("rig needs at least one camera".into()));
    }
    let n = spec.count;
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut cams = Vec::with_capacity(n);
    for i in 0..n {
        let dir: Vec3 = if n == 1 {
            [0.0, 0.0, 1.0]
        } else {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            [r * th.cos(), r * th.sin(), z]
        };
        let pos = math::add(spec.target, math::scale(dir, spec.radius));
        // Stabilize the up hint: fall back to +z when the viewing direction
        // is nearly vertical.
        let up = if dir[1].abs() > 0.99 { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
        cams.push(PinholeCamera::look_at(
            i,
            pos,
            spec.target,
            up,
            spec.width,
            spec.height,
            spec.focal_px,
        ));
    }
    Ok(cams)
}

/// Script for the synthetic hair scene and its motion.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SceneScript {
    pub guide_count: usize,
    pub nodes_per_strand: usize,
    pub head_center: Vec3,
    /// Ellipsoid head proxy semi-axes, meters.
    pub head_radii: Vec3,
    /// Rigid head rotation about the +y axis, degrees per frame.
    pub rotation_deg_per_frame: f64,
    /// Peak per-strand sway angle, radians (scaled per strand).
    pub sway_amplitude: f64,
    /// Sway cycles per frame (scaled per strand).
    pub sway_frequency: f64,
    /// Strands per guide in the dense hood.
    pub densify_factor: usize,
    pub frame_count: usize,
    /// Gaussian noise added to stored flow maps, pixels.
    pub flow_noise_px: f64,
    /// Gaussian noise on reconstruction point positions, meters.
    pub recon_noise_m: f64,
    /// Probability that a reconstruction point is dropped.
    pub recon_drop_rate: f64,
}

impl Default for SceneScript {
    fn default() -> Self {
        SceneScript {
            guide_count: 30,
            nodes_per_strand: 50,
            head_center: [0.0; 3],
            head_radii: [0.09, 0.11, 0.10],
            rotation_deg_per_frame: 2.0,
            sway_amplitude: 0.05,
            sway_frequency: 0.05,
            densify_factor: 4,
            frame_count: 40,
            flow_noise_px: 0.0,
            recon_noise_m: 0.0,
            recon_drop_rate: 0.0,
        }
    }
}

impl SceneScript {
    pub fn validate(&self) -> Result<()> {
        if self.guide_count == 0 {
            return Err(Error::Config("scene needs at least one guide strand".into()));
        }
        if self.nodes_per_strand < 3 {
            return Err(Error::Config("strands need at least three nodes".into()));
        }
        if self.frame_count < 4 {
            return Err(Error::Config(
                "scene needs at least four frames (motion extrapolation uses three history frames)"
                    .into(),
            ));
        }
        if self.densify_factor == 0 {
            return Err(Error::Config("densify factor must be at least one".into()));
        }
        if self.head_radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("head radii must be positive".into()));
        }
        Ok(())
    }
}

/// One strand's sway: a sinusoidal rotation about its rest root.
#[derive(Debug, Clone, Copy)]
struct Sway {
    axis: Vec3,
    pivot: Vec3,
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Sway {
    fn rigid_at(&self, t: f64) -> Rigid {
        let angle = self.amp * (std::f64::consts::TAU * self.freq * t + self.phase).sin();
        Rigid::about_pivot(math::rotation_exp(math::scale(self.axis, angle)), self.pivot)
    }

    fn lerp(a: &Sway, b: &Sway, w: f64, pivot: Vec3) -> Sway {
        // Align axis signs before interpolating so nearly-opposite axes do
        // not cancel.
        let bx = if math::dot(a.axis, b.axis) < 0.0 { math::scale(b.axis, -1.0) } else { b.axis };
        let axis = math::normalize(math::add(math::scale(a.axis, 1.0 - w), math::scale(bx, w)));
        Sway {
            axis,
            pivot,
            amp: a.amp + (b.amp - a.amp) * w,
            freq: a.freq + (b.freq - a.freq) * w,
            phase: a.phase + (b.phase - a.phase) * w,
        }
    }
}

/// The full animated scene: rest geometry plus per-strand motion, all
/// derived deterministically from (script, seed).
#[derive(Debug, Clone)]
pub struct SceneMotion {
    pub script: SceneScript,
    pub seed: u64,
    pub rest_guides: StrandSet,
    pub rest_dense: StrandSet,
    guide_sway: Vec<Sway>,
    dense_sway: Vec<Sway>,
}

impl SceneMotion {
    pub fn build(script: &SceneScript, seed: u64) -> Result<Self> {
        script.validate()?;
        let (rest_guides, guide_sway) = grow_guides(script, seed);
        let rest_dense = densify_guides(&rest_guides, script.densify_factor, DENSIFY_JITTER_M, seed);
        // Sway for inserted strands interpolates the bracketing guides so
        // the hood moves coherently; the guides contained in the dense set
        // keep their exact guide sway.
        let f = script.densify_factor;
        let mut dense_sway = Vec::with_capacity(rest_dense.num_strands());
        for d in 0..rest_dense.num_strands() {
            let (p, k) = (d / f, d % f);
            let pivot = rest_dense.strand(d)[0];
            if k == 0 {
                dense_sway.push(Sway { pivot, ..guide_sway[p] });
            } else {
                let w = k as f64 / f as f64;
                dense_sway.push(Sway::lerp(&guide_sway[p], &guide_sway[p + 1], w, pivot));
            }
        }
        Ok(SceneMotion {
            script: script.clone(),
            seed,
            rest_guides,
            rest_dense,
            guide_sway,
            dense_sway,
        })
    }

    /// Rigid head motion at frame t (rotation about +y through the head
    /// center).
    pub fn head_pose(&self, t: usize) -> Rigid {
        let angle = self.script.rotation_deg_per_frame.to_radians() * t as f64;
        Rigid::about_pivot(math::rotation_exp([0.0, angle, 0.0]), self.script.head_center)
    }

    /// World motion of guide strand `s` from rest to frame t.
    fn guide_motion(&self, s: usize, t: usize) -> Rigid {
        self.head_pose(t).compose(&self.guide_sway[s].rigid_at(t as f64))
    }

    /// World motion of dense strand `s` from rest to frame t.
    fn dense_rest_motion(&self, s: usize, t: usize) -> Rigid {
        self.head_pose(t).compose(&self.dense_sway[s].rigid_at(t as f64))
    }

    /// Exact world motion of dense strand `s` between two frames.
    pub fn dense_motion(&self, s: usize, t1: usize, t2: usize) -> Rigid {
        self.dense_rest_motion(s, t2).compose(&self.dense_rest_motion(s, t1).inverse())
    }

    pub fn guides_at(&self, t: usize) -> StrandSet {
        apply_motion(&self.rest_guides, |s| self.guide_motion(s, t))
    }

    pub fn dense_at(&self, t: usize) -> StrandSet {
        apply_motion(&self.rest_dense, |s| self.dense_rest_motion(s, t))
    }
}

fn apply_motion(rest: &StrandSet, motion: impl Fn(usize) -> Rigid) -> StrandSet {
    let mut out = rest.clone();
    for s in 0..rest.num_strands() {
        let m = motion(s);
        for node in out.strand_mut(s) {
            *node = m.apply(*node);
        }
    }
    out
}

/// Guide strands and per-frame head pose at frame t.
pub fn animate_scene(script: &SceneScript, seed: u64, t: usize) -> Result<(StrandSet, Rigid)> {
    if t >= script.frame_count {
        return Err(Error::Config(format!(
            "frame {t} out of range (script has {} frames)",
            script.frame_count
        )));
    }
    let motion = SceneMotion::build(script, seed)?;
    Ok((motion.guides_at(t), motion.head_pose(t)))
}

/// Grows rest-pose guides on the upper half of the scalp ellipsoid, sorted
/// by azimuth, each with its own sway parameters.
fn grow_guides(script: &SceneScript, seed: u64) -> (StrandSet, Vec<Sway>) {
    let mut rng = stream_rng(seed, STREAM_GUIDES, 0, 0);
    let g = script.guide_count;
    let n = script.nodes_per_strand;
    let c = script.head_center;
    let r = script.head_radii;
    let mut nodes = Vec::with_capacity(g * n);
    let mut sways = Vec::with_capacity(g);
    for gi in 0..g {
        // Azimuth jitter stays below half the spacing, so strands remain
        // sorted by azimuth (densification pairs neighbors by index).
        let az = std::f64::consts::TAU * (gi as f64 + 0.3 * rng.gen_range(-1.0..1.0))
            / g as f64;
        let el = (0.25 + 0.55 * rng.gen::<f64>()) * std::f64::consts::FRAC_PI_2;
        let dir = [el.cos() * az.cos(), el.sin(), el.cos() * az.sin()];
        let root = math::add(c, [r[0] * dir[0], r[1] * dir[1], r[2] * dir[2]]);
        let normal = math::normalize([dir[0] / r[0], dir[1] / r[1], dir[2] / r[2]]);
        // Hair grows outward, then bends downward with a per-strand curl.
        let mut d = math::normalize(math::add(normal, [0.0, -0.4, 0.0]));
        let curl_axis = math::normalize([
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        let curl_step = rng.gen_range(-0.06..0.06);
        let start = nodes.len();
        nodes.push(root);
        for _ in 1..n {
            let prev = *nodes.last().unwrap();
            d = math::mat_vec(&math::rotation_exp(math::scale(curl_axis, curl_step)), d);
            d = math::normalize(math::add(d, [0.0, -0.03, 0.0]));
            nodes.push(math::add(prev, math::scale(d, GUIDE_STEP_M)));
        }
        let mean_dir = math::normalize(math::sub(nodes[nodes.len() - 1], nodes[start]));
        let mut axis = math::cross(mean_dir, [0.0, 1.0, 0.0]);
        if math::norm(axis) < 1e-6 {
            axis = [1.0, 0.0, 0.0];
        }
        sways.push(Sway {
            axis: math::normalize(axis),
            pivot: root,
            amp: script.sway_amplitude * (0.5 + 0.5 * rng.gen::<f64>()),
            freq: script.sway_frequency * (0.75 + 0.5 * rng.gen::<f64>()),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        });
    }
    (StrandSet::new(n, nodes), sways)
}

/// Expands guides into a dense hood: between each azimuth-adjacent guide
/// pair, inserts factor−1 strands at convex combinations of corresponding
/// nodes, each offset by a small per-strand jitter. The guides themselves
/// are kept, so the result has guides×factor − (factor−1) strands.
pub fn densify_guides(guides: &StrandSet, factor: usize, jitter_m: f64, seed: u64) -> StrandSet {
    assert!(factor >= 1, "densify factor must be at least one");
    let g = guides.num_strands();
    let n = guides.nodes_per_strand();
    if factor == 1 || g == 1 {
        return guides.clone();
    }
    let mut rng = stream_rng(seed, STREAM_DENSIFY, 0, 0);
    let mut nodes = Vec::with_capacity((g * factor - (factor - 1)) * n);
    for p in 0..g - 1 {
        let (a, b) = (guides.strand(p), guides.strand(p + 1));
        nodes.extend_from_slice(a);
        for k in 1..factor {
            let w = k as f64 / factor as f64;
            let jitter: Vec3 = [
                jitter_m * rng.sample::<f64, _>(StandardNormal),
                jitter_m * rng.sample::<f64, _>(StandardNormal),
                jitter_m * rng.sample::<f64, _>(StandardNormal),
            ];
            for i in 0..n {
                let base = math::add(
                    math::scale(a[i], 1.0 - w),
                    math::scale(b[i], w),
                );
                nodes.push(math::add(base, jitter));
            }
        }
    }
    nodes.extend_from_slice(guides.strand(g - 1));
    StrandSet::new(n, nodes)
}

/// Vertices of the head proxy on a Fibonacci sphere scaled to the
/// ellipsoid. Used to attach mesh primitives and as the tracked head signal.
pub fn head_vertices(script: &SceneScript, count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let dir: Vec3 = if count == 1 {
            [0.0, 0.0, 1.0]
        } else {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            [r * th.cos(), r * th.sin(), z]
        };
        out.push(math::add(script.head_center, [
            script.head_radii[0] * dir[0],
            script.head_radii[1] * dir[1],
            script.head_radii[2] * dir[2],
        ]));
    }
    out
}

/// Resamples the dense strands at ~1 point/mm into an oriented point cloud,
/// optionally perturbing positions and dropping points.
pub fn simulate_recon(dense: &StrandSet, noise_m: f64, drop_rate: f64, seed: u64, t: usize) -> OrientedPointCloud {
    let mut rng = stream_rng(seed, STREAM_RECON, t as u64, 0);
    let mut points = Vec::new();
    for s in 0..dense.num_strands() {
        let strand = dense.strand(s);
        // Start half a step into the strand so samples straddle the nodes
        // symmetrically instead of landing on them.
        let mut carry = 0.5 * RECON_STEP_M;
        for w in strand.windows(2) {
            let seg = math::sub(w[1], w[0]);
            let len = math::norm(seg);
            if len < 1e-12 {
                continue;
            }
            let dir = math::scale(seg, 1.0 / len);
            let mut along = carry;
            while along < len {
                let mut pos = math::add(w[0], math::scale(dir, along));
                if noise_m > 0.0 {
                    for p in pos.iter_mut() {
                        *p += noise_m * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                let keep = drop_rate <= 0.0 || rng.gen::<f64>() >= drop_rate;
                if keep {
                    points.push(OrientedPoint { pos, dir });
                }
                along += RECON_STEP_M;
            }
            carry = along - len;
        }
    }
    OrientedPointCloud::new(points)
}

/// Per-pixel Gaussian noise for stored flow maps.
pub(crate) fn flow_noise_rng(seed: u64, t: usize, cam: usize, forward: bool) -> ChaCha8Rng {
    stream_rng(seed, STREAM_FLOW_NOISE, t as u64, (cam as u64) << 1 | forward as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_cameras_sit_on_the_sphere_looking_at_target() {
        let spec = RigSpec { count: 8, ..Default::default() };
        let cams = build_rig(&spec).unwrap();
        assert_eq!(cams.len(), 8);
        for cam in &cams {
            let d = math::norm(math::sub(cam.center(), spec.target));
            assert!((d - spec.radius).abs() < 1e-9);
            // The target projects to the principal point.
            let (px, _) = cam.project(spec.target).unwrap();
            assert!((px[0] - cam.cx).abs() < 1e-6 && (px[1] - cam.cy).abs() < 1e-6);
        }
    }

    #[test]
    fn single_camera_rig_sits_at_the_z_pole() {
        let spec = RigSpec { count: 1, ..Default::default() };
        let cams = build_rig(&spec).unwrap();
        let c = cams[0].center();
        assert!(math::norm(math::sub(c, [0.0, 0.0, 1.0])) < 1e-12);
    }

    #[test]
    fn rig_has_positive_minimum_angular_spacing() {
        let cams = build_rig(&RigSpec { count: 8, ..Default::default() }).unwrap();
        let mut min_angle = f64::INFINITY;
        for i in 0..cams.len() {
            for j in i + 1..cams.len() {
                let a = math::normalize(cams[i].center());
                let b = math::normalize(cams[j].center());
                min_angle = min_angle.min(math::dot(a, b).clamp(-1.0, 1.0).acos());
            }
        }
        assert!(min_angle > 0.3, "cameras too close: {min_angle} rad");
    }

    #[test]
    fn static_script_is_constant_over_time() {
        let script = SceneScript {
            rotation_deg_per_frame: 0.0,
            sway_amplitude: 0.0,
            frame_count: 12,
            ..Default::default()
        };
        let motion = SceneMotion::build(&script, 7).unwrap();
        let a = motion.guides_at(0);
        let b = motion.guides_at(11);
        for (x, y) in a.nodes().iter().zip(b.nodes()) {
            assert!(math::norm(math::sub(*x, *y)) < 1e-12);
        }
    }

    #[test]
    fn pure_rotation_script_composes_rigidly() {
        let script = SceneScript {
            rotation_deg_per_frame: 2.0,
            sway_amplitude: 0.0,
            frame_count: 12,
            ..Default::default()
        };
        let motion = SceneMotion::build(&script, 7).unwrap();
        let f0 = motion.guides_at(0);
        let f10 = motion.guides_at(10);
        let rigid = Rigid::about_pivot(
            math::rotation_exp([0.0, 20.0f64.to_radians(), 0.0]),
            script.head_center,
        );
        for (x, y) in f0.nodes().iter().zip(f10.nodes()) {
            assert!(math::norm(math::sub(rigid.apply(*x), *y)) < 1e-9);
        }
    }

    #[test]
    fn segment_lengths_are_preserved_exactly_under_motion() {
        let script = SceneScript { frame_count: 60, ..Default::default() };
        let motion = SceneMotion::build(&script, 3).unwrap();
        let rest = &motion.rest_guides;
        let moved = motion.guides_at(50);
        for s in 0..rest.num_strands() {
            let (a, b) = (rest.strand(s), moved.strand(s));
            for i in 0..a.len() - 1 {
                let la = math::norm(math::sub(a[i + 1], a[i]));
                let lb = math::norm(math::sub(b[i + 1], b[i]));
                assert!((la - lb).abs() < 1e-12, "strand {s} segment {i}: {la} vs {lb}");
            }
        }
    }

    #[test]
    fn densify_factor_one_is_identity() {
        let script = SceneScript::default();
        let (guides, _) = grow_guides(&script, 1);
        let dense = densify_guides(&guides, 1, DENSIFY_JITTER_M, 1);
        assert_eq!(dense.nodes(), guides.nodes());
    }

    #[test]
    fn densify_interpolates_parallel_guides_at_thirds() {
        // Two straight parallel strands along +x, one meter apart in y.
        let n = 5;
        let mut nodes = Vec::new();
        for y in [0.0, 1.0] {
            for i in 0..n {
                nodes.push([i as f64 * 0.1, y, 0.0]);
            }
        }
        let guides = StrandSet::new(n, nodes);
        let dense = densify_guides(&guides, 3, 0.0, 9);
        assert_eq!(dense.num_strands(), 4);
        for (k, want_y) in [(1usize, 1.0 / 3.0), (2, 2.0 / 3.0)] {
            for node in dense.strand(k) {
                assert!((node[1] - want_y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn densify_count_follows_the_boundary_rule() {
        let script = SceneScript::default();
        let (guides, _) = grow_guides(&script, 11);
        for factor in [1usize, 2, 3, 4] {
            let dense = densify_guides(&guides, factor, DENSIFY_JITTER_M, 11);
            assert_eq!(
                dense.num_strands(),
                script.guide_count * factor - (factor - 1),
                "factor {factor}"
            );
        }
    }

    #[test]
    fn dense_set_contains_the_guides_verbatim() {
        let script = SceneScript::default();
        let motion = SceneMotion::build(&script, 5).unwrap();
        let f = script.densify_factor;
        for g in 0..script.guide_count {
            let d = g * f;
            assert_eq!(motion.rest_dense.strand(d), motion.rest_guides.strand(g));
        }
    }

    #[test]
    fn noiseless_recon_points_lie_on_the_strands() {
        let script = SceneScript { guide_count: 6, densify_factor: 2, ..Default::default() };
        let motion = SceneMotion::build(&script, 2).unwrap();
        let dense = motion.dense_at(3);
        let cloud = simulate_recon(&dense, 0.0, 0.0, 2, 3);
        assert!(cloud.len() > 1000);
        for p in cloud.points.iter().step_by(97) {
            let mut best = f64::INFINITY;
            for s in 0..dense.num_strands() {
                let strand = dense.strand(s);
                for w in strand.windows(2) {
                    best = best.min(point_segment_distance(p.pos, w[0], w[1]));
                }
            }
            assert!(best < 1e-9, "recon point {best} m off the strands");
            assert!((math::norm(p.dir) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn recon_position_noise_matches_configured_sigma() {
        let script = SceneScript { guide_count: 100, densify_factor: 4, ..Default::default() };
        let motion = SceneMotion::build(&script, 4).unwrap();
        let dense = motion.dense_at(0);
        let sigma = 2e-3;
        let cloud = simulate_recon(&dense, sigma, 0.0, 4, 0);
        assert!(cloud.len() > 80_000);
        // Perpendicular residual to the nearest segment estimates sigma in
        // the 2D plane normal to the strand: E[r^2] = 2 sigma^2.
        let clean = simulate_recon(&dense, 0.0, 0.0, 4, 0);
        let mut sq = 0.0;
        let mut count = 0.0;
        for (p, q) in cloud.points.iter().zip(clean.points) {
            let d = math::sub(p.pos, q.pos);
            let along = math::dot(d, q.dir);
            let perp2 = math::dot(d, d) - along * along;
            sq += perp2;
            count += 1.0;
        }
        let est = (sq / (2.0 * count)).sqrt();
        assert!(
            (est - sigma).abs() / sigma < 0.1,
            "estimated sigma {est} vs configured {sigma}"
        );
    }

    #[test]
    fn recon_drop_rate_thins_the_cloud() {
        let script = SceneScript { guide_count: 6, densify_factor: 2, ..Default::default() };
        let motion = SceneMotion::build(&script, 8).unwrap();
        let dense = motion.dense_at(0);
        let full = simulate_recon(&dense, 0.0, 0.0, 8, 0).len() as f64;
        let thinned = simulate_recon(&dense, 0.0, 0.3, 8, 0).len() as f64;
        let rate = thinned / full;
        assert!((rate - 0.7).abs() < 0.05, "kept fraction {rate}");
    }

    #[test]
    fn head_vertices_lie_on_the_ellipsoid() {
        let script = SceneScript::default();
        let verts = head_vertices(&script, 64);
        assert_eq!(verts.len(), 64);
        for v in &verts {
            let d = math::sub(*v, script.head_center);
            let q = (d[0] / script.head_radii[0]).powi(2)
                + (d[1] / script.head_radii[1]).powi(2)
                + (d[2] / script.head_radii[2]).powi(2);
            assert!((q - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scene_motion_is_deterministic_in_the_seed() {
        let script = SceneScript::default();
        let a = SceneMotion::build(&script, 42).unwrap();
        let b = SceneMotion::build(&script, 42).unwrap();
        assert_eq!(a.rest_dense.nodes(), b.rest_dense.nodes());
        let fa = a.dense_at(7);
        let fb = b.dense_at(7);
        assert_eq!(fa.nodes(), fb.nodes());
        let c = SceneMotion::build(&script, 43).unwrap();
        assert_ne!(a.rest_guides.nodes(), c.rest_guides.nodes());
    }

    fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
        let ab = math::sub(b, a);
        let len2 = math::dot(ab, ab);
        if len2 < 1e-24 {
            return math::norm(math::sub(p, a));
        }
        let t = (math::dot(math::sub(p, a), ab) / len2).clamp(0.0, 1.0);
        math::norm(math::sub(p, math::add(a, math::scale(ab, t))))
    }
}
