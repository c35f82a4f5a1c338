//! Frame-to-frame guide strand tracking.
//!
//! Given strands at frame t, per-camera optical flow and depth for frame t,
//! and the oriented reconstruction for frame t+1, the tracker solves for the
//! strand nodes at t+1 with Adam over a sum of data terms (flow matching,
//! reconstruction direction/position) and shape regularizers (segment
//! lengths, tangent consistency, curvature).
//!
//! The optimization runs in millimeters internally: the pinned default
//! constants (sigma_depth = 0.01, learning rate = 1, w_cur = 1e4) are
//! calibrated for millimeter coordinates, while the public API and the
//! loss functions themselves are unit-agnostic. `track_step` converts its
//! inputs, optimizes, and converts back, so callers never leave meters.

use crate::geom::{KnnIndex, OrientedPoint, OrientedPointCloud, PinholeCamera, StrandSet};
use crate::math::{self, Vec3};
use crate::opt::{Adam, AdamConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Weights and optimizer settings for one tracking step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Sharpness of the depth gate and the recon distance weight, in
    /// 1/length^2 of the optimization units.
    pub sigma_depth: f64,
    /// Recon neighbors per node.
    pub k_neighbors: usize,
    pub w_hdir: f64,
    pub w_hpos: f64,
    pub w_len: f64,
    pub w_tang: f64,
    pub w_cur: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// 0 = hold, 1 = linear, 2 = quadratic extrapolation of the history.
    pub momentum_order: usize,
    /// Differentiate the flow target through the estimate's own depth
    /// instead of freezing it per iteration (ablation switch).
    pub full_depth_gradient: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            sigma_depth: 0.01,
            k_neighbors: 10,
            w_hdir: 3.0,
            w_hpos: 1.0,
            w_len: 3.0,
            w_tang: 3.0,
            w_cur: 1e4,
            learning_rate: 1.0,
            iterations: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum_order: 2,
            full_depth_gradient: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let weights =
            [self.sigma_depth, self.w_hdir, self.w_hpos, self.w_len, self.w_tang, self.w_cur];
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Config("tracker weights must be >= 0".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("tracker needs at least one iteration".into()));
        }
        if self.k_neighbors < 1 {
            return Err(Error::Config("tracker needs at least one recon neighbor".into()));
        }
        if self.momentum_order > 2 {
            return Err(Error::Config("momentum order must be 0, 1, or 2".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Everything observed about the transition t -> t+1: cameras, forward flow
/// and depth rendered at frame t, and the reconstruction at frame t+1.
pub struct FrameObs<'a> {
    pub cameras: &'a [PinholeCamera],
    pub flows: &'a [crate::geom::FlowMap],
    pub depths: &'a [crate::geom::DepthMap],
    pub recon: &'a OrientedPointCloud,
}

impl FrameObs<'_> {
    fn validate(&self) -> Result<()> {
        if self.cameras.len() != self.flows.len() || self.cameras.len() != self.depths.len() {
            return Err(Error::Shape(format!(
                "{} cameras vs {} flow maps vs {} depth maps",
                self.cameras.len(),
                self.flows.len(),
                self.depths.len()
            )));
        }
        for (c, (f, d)) in self.cameras.iter().zip(self.flows.iter().zip(self.depths)) {
            if f.width() != c.width || f.height() != c.height || f.channels() != 2 {
                return Err(Error::Shape(format!("flow map shape mismatch on camera {}", c.id)));
            }
            if d.width() != c.width || d.height() != c.height || d.channels() != 1 {
                return Err(Error::Shape(format!("depth map shape mismatch on camera {}", c.id)));
            }
        }
        Ok(())
    }
}

/// A loss value with its gradient over every strand node.
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

impl LossTerm {
    fn zeros(n: usize) -> Self {
        LossTerm { value: 0.0, grad: vec![[0.0; 3]; n] }
    }
}

/// One frozen flow-matching target: node `weight`, the flowed pixel, and
/// the estimate depth captured when the target was built.
#[derive(Debug, Clone, Copy)]
pub struct FlowTarget {
    pub cam: usize,
    pub weight: f64,
    pub pixel: [f64; 2],
    pub depth: f64,
}

/// Per-node flow targets, recomputed once per optimizer iteration.
pub struct FlowTargets {
    pub per_node: Vec<Vec<FlowTarget>>,
}

/// Weights below this never contribute a term.
const MIN_WEIGHT: f64 = 1e-6;

/// Builds the flow-matching targets for the current estimate. For every
/// node and camera: project the frame-t node, look up flow and observed
/// depth there, gate the view by the depth agreement, and record the flowed
/// pixel together with the estimate's current depth along that camera.
/// Off-image projections and gates below 1e-6 are dropped.
pub fn flow_targets(
    prev: &StrandSet,
    est: &StrandSet,
    cameras: &[PinholeCamera],
    flows: &[crate::geom::FlowMap],
    depths: &[crate::geom::DepthMap],
    sigma_depth: f64,
) -> FlowTargets {
    let prev_nodes = prev.nodes();
    let est_nodes = est.nodes();
    let per_node: Vec<Vec<FlowTarget>> = (0..prev_nodes.len())
        .into_par_iter()
        .map(|n| {
            let mut out = Vec::new();
            for (i, cam) in cameras.iter().enumerate() {
                let (p, z_prev) = match cam.project(prev_nodes[n]) {
                    Ok(pz) => pz,
                    Err(_) => continue,
                };
                if !cam.in_bounds(p) {
                    continue;
                }
                let mut dp = [0.0; 2];
                if !flows[i].bilinear_into(p[0], p[1], &mut dp) {
                    continue;
                }
                let q = [p[0] + dp[0], p[1] + dp[1]];
                if !cam.in_bounds(q) {
                    continue;
                }
                let mut d_obs = [0.0];
                if !depths[i].bilinear_into(p[0], p[1], &mut d_obs) {
                    continue;
                }
                let gap = z_prev - d_obs[0];
                let weight = (-sigma_depth * gap * gap).exp();
                if weight < MIN_WEIGHT {
                    continue;
                }
                let z_est = cam.depth_of(est_nodes[n]);
                if z_est <= 1e-6 {
                    continue;
                }
                out.push(FlowTarget { cam: i, weight, pixel: q, depth: z_est });
            }
            out
        })
        .collect();
    FlowTargets { per_node }
}

/// Flow-matching data term. Each target pulls the node onto the ray through
/// the flowed pixel at the node's own camera depth, so the residual is the
/// in-image displacement lifted to 3D. With `full_depth_gradient` off the
/// depth is the frozen value captured in the target; the loss is then an
/// exact quadratic in the node.
pub fn flow_loss(
    est: &StrandSet,
    targets: &FlowTargets,
    cameras: &[PinholeCamera],
    full_depth_gradient: bool,
) -> LossTerm {
    let nodes = est.nodes();
    assert_eq!(nodes.len(), targets.per_node.len());
    let partials: Vec<(f64, Vec3)> = (0..nodes.len())
        .into_par_iter()
        .map(|n| {
            let mut value = 0.0;
            let mut grad = [0.0; 3];
            for t in &targets.per_node[n] {
                let cam = &cameras[t.cam];
                let z = if full_depth_gradient { cam.depth_of(nodes[n]) } else { t.depth };
                if z <= 1e-6 {
                    continue;
                }
                let target = cam.unproject(t.pixel, z);
                let r = math::sub(nodes[n], target);
                value += t.weight * math::dot(r, r);
                let mut g = math::scale(r, 2.0 * t.weight);
                if full_depth_gradient {
                    // target = unproject(q, depth(x)); moving the node along
                    // the camera axis slides the target down the pixel ray.
                    let dir = [
                        (t.pixel[0] - cam.cx) / cam.fx,
                        (t.pixel[1] - cam.cy) / cam.fy,
                        1.0,
                    ];
                    let u = math::mat_t_vec(&cam.rot, dir);
                    let axis = cam.rot[2];
                    g = math::sub(g, math::scale(axis, 2.0 * t.weight * math::dot(u, r)));
                }
                grad = math::add(grad, g);
            }
            (value, grad)
        })
        .collect();
    let mut out = LossTerm::zeros(nodes.len());
    for (n, (v, g)) in partials.into_iter().enumerate() {
        out.value += v;
        out.grad[n] = g;
    }
    out
}

/// k nearest recon points of every interior node. Strand endpoints get an
/// empty set: their along-strand neighborhood is one sided, so matching them
/// against the cloud drags them toward the strand interior instead of
/// holding them in place. `k` is capped at the cloud size by the index.
pub fn neighbor_sets(est: &StrandSet, index: &KnnIndex, k: usize) -> Vec<Vec<usize>> {
    let nodes = est.nodes();
    let per = est.nodes_per_strand();
    (0..nodes.len())
        .into_par_iter()
        .map(|n| {
            let phase = n % per;
            if phase == 0 || phase == per - 1 {
                return Vec::new();
            }
            index.knn(nodes[n], k).into_iter().map(|(i, _)| i).collect()
        })
        .collect()
}

/// Reconstruction data terms over fixed neighbor sets.
///
/// Direction: sum of w_d * (1 - |cos|) between the node's segment and the
/// recon line direction, w_d = exp(-sigma * |node - point|^2).
/// Position: sum of w_r * |node - point|^2 with w_r = |cos| -- aligned
/// neighbors pull positions together, perpendicular ones do not vote.
/// Both gradients flow through the weights; the index sets stay fixed.
pub fn recon_losses(
    est: &StrandSet,
    cloud: &OrientedPointCloud,
    sets: &[Vec<usize>],
    sigma_depth: f64,
) -> (LossTerm, LossTerm) {
    let nodes = est.nodes();
    assert_eq!(nodes.len(), sets.len());
    let per = est.nodes_per_strand();
    // Per-node partial: (hdir value, hpos value, grads on node n and n+1).
    let partials: Vec<(f64, f64, Vec3, Vec3, Vec3, Vec3)> = (0..nodes.len())
        .into_par_iter()
        .map(|n| {
            let mut vdir = 0.0;
            let mut vpos = 0.0;
            let mut gdir_n = [0.0; 3];
            let mut gdir_next = [0.0; 3];
            let mut gpos_n = [0.0; 3];
            let mut gpos_next = [0.0; 3];
            if sets[n].is_empty() {
                return (vdir, vpos, gdir_n, gdir_next, gpos_n, gpos_next);
            }
            debug_assert!(n % per < per - 1);
            let d = math::sub(nodes[n + 1], nodes[n]);
            let u = math::norm(d);
            if u < 1e-12 {
                return (vdir, vpos, gdir_n, gdir_next, gpos_n, gpos_next);
            }
            let dhat = math::scale(d, 1.0 / u);
            for &h in &sets[n] {
                let p: &OrientedPoint = &cloud.points[h];
                let diff = math::sub(nodes[n], p.pos);
                let r2 = math::dot(diff, diff);
                let c = math::dot(d, p.dir) / u;
                let sg = if c == 0.0 { 0.0 } else { c.signum() };
                // d cos / d segment-vector.
                let dcdd = math::scale(math::sub(p.dir, math::scale(dhat, c)), 1.0 / u);

                let wd = (-sigma_depth * r2).exp();
                if wd >= MIN_WEIGHT {
                    vdir += wd * (1.0 - c.abs());
                    let through_c = math::scale(dcdd, -wd * sg);
                    gdir_next = math::add(gdir_next, through_c);
                    gdir_n = math::sub(gdir_n, through_c);
                    let through_w = math::scale(diff, (1.0 - c.abs()) * wd * -2.0 * sigma_depth);
                    gdir_n = math::add(gdir_n, through_w);
                }

                let wr = c.abs();
                if wr >= MIN_WEIGHT {
                    vpos += wr * r2;
                    gpos_n = math::add(gpos_n, math::scale(diff, 2.0 * wr));
                    let through_w = math::scale(dcdd, r2 * sg);
                    gpos_next = math::add(gpos_next, through_w);
                    gpos_n = math::sub(gpos_n, through_w);
                }
            }
            (vdir, vpos, gdir_n, gdir_next, gpos_n, gpos_next)
        })
        .collect();

    let mut hdir = LossTerm::zeros(nodes.len());
    let mut hpos = LossTerm::zeros(nodes.len());
    for (n, (vd, vp, gdn, gdx, gpn, gpx)) in partials.into_iter().enumerate() {
        hdir.value += vd;
        hpos.value += vp;
        hdir.grad[n] = math::add(hdir.grad[n], gdn);
        hpos.grad[n] = math::add(hpos.grad[n], gpn);
        if n + 1 < nodes.len() {
            hdir.grad[n + 1] = math::add(hdir.grad[n + 1], gdx);
            hpos.grad[n + 1] = math::add(hpos.grad[n + 1], gpx);
        }
    }
    (hdir, hpos)
}

/// Shape regularizers against the previous frame and the reference groom:
/// squared segment-length deviation, tangent consistency across the frame
/// pair, and squared curvature deviation.
pub fn shape_losses(
    est: &StrandSet,
    prev: &StrandSet,
    reference: &StrandSet,
) -> (LossTerm, LossTerm, LossTerm) {
    let per = est.nodes_per_strand();
    assert_eq!(per, prev.nodes_per_strand());
    assert_eq!(per, reference.nodes_per_strand());
    assert_eq!(est.nodes().len(), prev.nodes().len());
    assert_eq!(est.nodes().len(), reference.nodes().len());

    let total = est.nodes().len();
    let mut len = LossTerm::zeros(total);
    let mut tang = LossTerm::zeros(total);
    let mut cur = LossTerm::zeros(total);

    for s in 0..est.num_strands() {
        let base = s * per;
        let e = est.strand(s);
        let p = prev.strand(s);
        let r = reference.strand(s);
        for n in 0..per - 1 {
            let d_new = math::sub(e[n + 1], e[n]);
            let d_prev = math::sub(p[n + 1], p[n]);
            let u = math::norm(d_new);

            let f = u - math::norm(math::sub(r[n + 1], r[n]));
            len.value += f * f;
            if u > 1e-12 {
                let g = math::scale(d_new, 2.0 * f / u);
                len.grad[base + n + 1] = math::add(len.grad[base + n + 1], g);
                len.grad[base + n] = math::sub(len.grad[base + n], g);
            }

            let dseg = math::sub(d_new, d_prev);
            let a = math::dot(dseg, d_prev);
            let b = math::dot(dseg, d_new);
            tang.value += a * a + b * b;
            let g = math::add(
                math::scale(d_prev, 2.0 * a),
                math::scale(math::add(dseg, d_new), 2.0 * b),
            );
            tang.grad[base + n + 1] = math::add(tang.grad[base + n + 1], g);
            tang.grad[base + n] = math::sub(tang.grad[base + n], g);
        }
        for n in 0..per.saturating_sub(2) {
            let (k_new, dk) = crate::geom::curvature_with_grad(e, n);
            let k_ref = crate::geom::curvature(r, n);
            let f = k_new - k_ref;
            cur.value += f * f;
            for (j, g) in dk.iter().enumerate() {
                cur.grad[base + n + j] = math::add(cur.grad[base + n + j], math::scale(*g, 2.0 * f));
            }
        }
    }
    (len, tang, cur)
}

/// Extrapolates the next frame from up to three history frames (oldest
/// first): order 0 holds, order 1 is linear, order 2 matches any per-node
/// quadratic trajectory exactly.
pub fn momentum_init(history: &[StrandSet], order: usize) -> StrandSet {
    assert!(!history.is_empty());
    let last = &history[history.len() - 1];
    let eff = order.min(history.len() - 1).min(2);
    match eff {
        0 => last.clone(),
        1 => {
            let prev = &history[history.len() - 2];
            lincomb(&[(2.0, last), (-1.0, prev)])
        }
        _ => {
            let prev = &history[history.len() - 2];
            let prev2 = &history[history.len() - 3];
            lincomb(&[(3.0, last), (-3.0, prev), (1.0, prev2)])
        }
    }
}

fn lincomb(terms: &[(f64, &StrandSet)]) -> StrandSet {
    let per = terms[0].1.nodes_per_strand();
    let n = terms[0].1.nodes().len();
    let mut nodes = vec![[0.0; 3]; n];
    for (w, s) in terms {
        assert_eq!(s.nodes().len(), n);
        for (out, src) in nodes.iter_mut().zip(s.nodes()) {
            *out = math::add(*out, math::scale(*src, *w));
        }
    }
    StrandSet::new(per, nodes)
}

/// Rolling tracker state: the reference groom plus up to three recent
/// frames of history for the momentum extrapolation.
pub struct TrackState {
    reference: StrandSet,
    history: Vec<StrandSet>,
}

impl TrackState {
    /// Starts a track at the reference groom (frame 0 of the sequence).
    pub fn new(initial: StrandSet) -> Self {
        TrackState { reference: initial.clone(), history: vec![initial] }
    }

    pub fn current(&self) -> &StrandSet {
        self.history.last().unwrap()
    }

    pub fn reference(&self) -> &StrandSet {
        &self.reference
    }

    /// Momentum initialization for the next frame, capped by the filled
    /// history (order 0 at the first frame, 1 at the second).
    pub fn init_estimate(&self, order: usize) -> StrandSet {
        momentum_init(&self.history, order)
    }

    fn push(&mut self, s: StrandSet) {
        if self.history.len() == 3 {
            self.history.remove(0);
        }
        self.history.push(s);
    }
}

/// Solves for the strands at t+1 and advances the state. Inputs and the
/// result are in meters.
pub fn track_step(
    state: &mut TrackState,
    obs: &FrameObs<'_>,
    cfg: &TrackerConfig,
) -> Result<StrandSet> {
    cfg.validate()?;
    obs.validate()?;
    if obs.recon.len() < cfg.k_neighbors {
        return Err(Error::Contract(format!(
            "reconstruction has {} points but {} neighbors are required",
            obs.recon.len(),
            cfg.k_neighbors
        )));
    }

    const MM: f64 = crate::MM_PER_M;
    let prev_mm = scale_strands(state.current(), MM);
    let ref_mm = scale_strands(state.reference(), MM);
    let cams_mm: Vec<PinholeCamera> = obs.cameras.iter().map(|c| scale_camera(c, MM)).collect();
    let depths_mm: Vec<crate::geom::DepthMap> =
        obs.depths.iter().map(|d| scale_grid(d, MM)).collect();
    let cloud_mm = scale_cloud(obs.recon, MM);
    let init_mm = scale_strands(&state.init_estimate(cfg.momentum_order), MM);

    let (est_mm, _log) =
        optimize(init_mm, &prev_mm, &ref_mm, &cams_mm, obs.flows, &depths_mm, &cloud_mm, cfg);

    let result = scale_strands(&est_mm, 1.0 / MM);
    state.push(result.clone());
    Ok(result)
}

/// The inner Adam loop, entirely in the caller's units. Returns the visited
/// iterate with the lowest loss (a stationary start is returned unchanged)
/// and the loss at every point, one entry per iteration plus the end point.
#[allow(clippy::too_many_arguments)]
fn optimize(
    mut est: StrandSet,
    prev: &StrandSet,
    reference: &StrandSet,
    cameras: &[PinholeCamera],
    flows: &[crate::geom::FlowMap],
    depths: &[crate::geom::DepthMap],
    cloud: &OrientedPointCloud,
    cfg: &TrackerConfig,
) -> (StrandSet, Vec<f64>) {
    let index = cloud.build_index();
    let total = est.nodes().len();
    let mut adam = Adam::new(cfg.adam(), 3 * total);
    let mut flat = vec![0.0; 3 * total];
    let mut gflat = vec![0.0; 3 * total];
    let mut log = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(f64, StrandSet)> = None;

    for it in 0..=cfg.iterations {
        let targets = flow_targets(prev, &est, cameras, flows, depths, cfg.sigma_depth);
        let sets = neighbor_sets(&est, &index, cfg.k_neighbors);

        let of = flow_loss(&est, &targets, cameras, cfg.full_depth_gradient);
        let (hdir, hpos) = recon_losses(&est, cloud, &sets, cfg.sigma_depth);
        let (len, tang, cur) = shape_losses(&est, prev, reference);

        let value = of.value
            + cfg.w_hdir * hdir.value
            + cfg.w_hpos * hpos.value
            + cfg.w_len * len.value
            + cfg.w_tang * tang.value
            + cfg.w_cur * cur.value;
        log.push(value);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, est.clone()));
        }
        if it == cfg.iterations {
            break;
        }

        for n in 0..total {
            let mut g = of.grad[n];
            g = math::add(g, math::scale(hdir.grad[n], cfg.w_hdir));
            g = math::add(g, math::scale(hpos.grad[n], cfg.w_hpos));
            g = math::add(g, math::scale(len.grad[n], cfg.w_len));
            g = math::add(g, math::scale(tang.grad[n], cfg.w_tang));
            g = math::add(g, math::scale(cur.grad[n], cfg.w_cur));
            gflat[3 * n] = g[0];
            gflat[3 * n + 1] = g[1];
            gflat[3 * n + 2] = g[2];
        }
        for (n, p) in est.nodes().iter().enumerate() {
            flat[3 * n] = p[0];
            flat[3 * n + 1] = p[1];
            flat[3 * n + 2] = p[2];
        }
        adam.step(&mut flat, &gflat);
        for (n, p) in est.nodes_mut().iter_mut().enumerate() {
            *p = [flat[3 * n], flat[3 * n + 1], flat[3 * n + 2]];
        }
    }
    let (_, best_est) = best.expect("at least the initial iterate is evaluated");
    (best_est, log)
}

fn scale_strands(s: &StrandSet, f: f64) -> StrandSet {
    StrandSet::new(s.nodes_per_strand(), s.nodes().iter().map(|p| math::scale(*p, f)).collect())
}

fn scale_camera(c: &PinholeCamera, f: f64) -> PinholeCamera {
    PinholeCamera { t: math::scale(c.t, f), ..c.clone() }
}

fn scale_grid(g: &crate::geom::Grid, f: f64) -> crate::geom::Grid {
    crate::geom::Grid::from_data(
        g.width(),
        g.height(),
        g.channels(),
        g.data().iter().map(|v| (*v as f64 * f) as f32).collect(),
    )
}

fn scale_cloud(c: &OrientedPointCloud, f: f64) -> OrientedPointCloud {
    OrientedPointCloud::new(
        c.points
            .iter()
            .map(|p| OrientedPoint { pos: math::scale(p.pos, f), dir: p.dir })
            .collect(),
    )
}

/// One row of the tracking report, all quantities in meters.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub frame: usize,
    /// Mean squared curvature deviation from the reference groom.
    pub cur_mse: f64,
    /// Mean squared segment-length deviation from the reference groom.
    pub len_mse: f64,
    /// Mean (1 - |cos|) between node segments and their recon neighbors.
    pub cos_dist: f64,
    /// Symmetric mean nearest-neighbor distance to the reconstruction.
    pub chamfer: f64,
}

/// Shape and recon agreement metrics for one tracked frame.
pub fn report_row(
    frame: usize,
    strands: &StrandSet,
    reference: &StrandSet,
    recon: &OrientedPointCloud,
    k: usize,
) -> ReportRow {
    let per = strands.nodes_per_strand();

    let mut cur_sum = 0.0;
    let mut cur_n = 0usize;
    let mut len_sum = 0.0;
    let mut len_n = 0usize;
    for s in 0..strands.num_strands() {
        let e = strands.strand(s);
        let r = reference.strand(s);
        for n in 0..per - 1 {
            let d = math::norm(math::sub(e[n + 1], e[n]))
                - math::norm(math::sub(r[n + 1], r[n]));
            len_sum += d * d;
            len_n += 1;
        }
        for n in 0..per.saturating_sub(2) {
            let d = crate::geom::curvature(e, n) - crate::geom::curvature(r, n);
            cur_sum += d * d;
            cur_n += 1;
        }
    }

    let index = recon.build_index();
    let mut cos_sum = 0.0;
    let mut cos_n = 0usize;
    let mut fwd_sum = 0.0;
    for s in 0..strands.num_strands() {
        let e = strands.strand(s);
        for n in 0..per {
            let nearest = index.knn(e[n], 1);
            fwd_sum += nearest[0].1;
            if n + 1 == per {
                continue;
            }
            let d = math::sub(e[n + 1], e[n]);
            let u = math::norm(d);
            if u < 1e-12 {
                continue;
            }
            for (h, _) in index.knn(e[n], k) {
                let c = math::dot(d, recon.points[h].dir) / u;
                cos_sum += 1.0 - c.abs();
                cos_n += 1;
            }
        }
    }
    let node_index = KnnIndex::build(strands.nodes().to_vec());
    let mut bwd_sum = 0.0;
    for p in &recon.points {
        bwd_sum += node_index.knn(p.pos, 1)[0].1;
    }
    let total_nodes = strands.nodes().len();

    ReportRow {
        frame,
        cur_mse: cur_sum / cur_n.max(1) as f64,
        len_mse: len_sum / len_n.max(1) as f64,
        cos_dist: cos_sum / cos_n.max(1) as f64,
        chamfer: 0.5
            * (fwd_sum / total_nodes.max(1) as f64 + bwd_sum / recon.len().max(1) as f64),
    }
}

/// Tracks frames `start..end` (half-open) of a dataset, writing
/// `{frame}.hair` per frame plus `track_report.csv` into `out_dir`. Frame
/// `start` is copied from the dataset guides and anchors the optimization.
pub fn track_sequence(
    ds: &crate::sim::Dataset,
    start: usize,
    end: usize,
    cfg: &TrackerConfig,
    out_dir: &std::path::Path,
) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    if start >= end || end > ds.frame_count() {
        return Err(Error::Config(format!(
            "frame range {start}..{end} outside dataset of {} frames",
            ds.frame_count()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let initial = ds.guides(start)?;
    let mut state = TrackState::new(initial.clone());
    crate::io::write_strands(&out_dir.join(format!("{start}.hair")), &initial)?;
    let mut rows =
        vec![report_row(start, &initial, &initial, &ds.recon(start)?, cfg.k_neighbors)];

    let cameras = &ds.cameras;
    for t in start..end - 1 {
        let flows: Vec<_> = (0..cameras.len())
            .map(|c| ds.flow(t, c, true))
            .collect::<Result<_>>()?;
        let depths: Vec<_> =
            (0..cameras.len()).map(|c| ds.depth(t, c)).collect::<Result<_>>()?;
        let recon = ds.recon(t + 1)?;
        let obs = FrameObs { cameras, flows: &flows, depths: &depths, recon: &recon };
        let next = track_step(&mut state, &obs, cfg)?;
        crate::io::write_strands(&out_dir.join(format!("{}.hair", t + 1)), &next)?;
        rows.push(report_row(t + 1, &next, &initial, &recon, cfg.k_neighbors));
    }

    let mut csv = String::from("frame,cur_mse,len_mse,cos_dist,chamfer\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.frame, r.cur_mse, r.len_mse, r.cos_dist, r.chamfer
        ));
    }
    let csv_path = out_dir.join("track_report.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.clone(), e))?;
    Ok(rows)
}
