//! Differentiable raymarching through oriented-box primitive mixtures.
//!
//! The forward pass walks a fixed sample comb (midpoints of `dt` bins,
//! anchored at the ray origin), blends every primitive covering a sample,
//! and accumulates color/flow with a clamped running opacity: the weight of
//! sample k is min(P_k,1) − min(P_{k−1},1) where P is the prefix sum of
//! α_k·dt. The total alpha telescopes to min(P,1) exactly. The reverse pass
//! (`march_vjp`) is the exact derivative of this discretization, including
//! the clamp subgradient, and pushes gradients onto payload grids, scene
//! flow grids, and primitive transforms.

use crate::autodiff::{trilinear_backward_into, trilinear_forward_into, Tensor};
use crate::geom::{DepthMap, FlowMap, Image, PinholeCamera};
use crate::math::{self, Mat3, Vec3};
use crate::prims::{prim_aabb, ray_intersections, Bvh, PrimTransform};

/// Samples with blended opacity below this floor are skipped entirely.
const ALPHA_FLOOR: f64 = 1e-12;
/// Alpha below this renders depth/flow as zero (division guard).
const A_MIN: f64 = 1e-6;

/// How per-sample 3D displacements become a 2D flow value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowProjection {
    /// Project each sample's displaced position and integrate the 2D
    /// differences (default).
    PerSample,
    /// Integrate the 3D expected point and its displaced counterpart, then
    /// project once.
    ExpectedPoint,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MarchConfig {
    /// Step size along the ray, meters.
    pub dt: f64,
    /// Composite background color (0..255 per channel).
    pub background: [f64; 3],
    pub flow_projection: FlowProjection,
}

impl Default for MarchConfig {
    fn default() -> Self {
        MarchConfig { dt: 1e-3, background: [0.0; 3], flow_projection: FlowProjection::PerSample }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray { origin, dir, t_min: 0.0, t_max: f64::INFINITY }
    }

    pub fn point(&self, t: f64) -> Vec3 {
        math::add(self.origin, math::scale(self.dir, t))
    }
}

/// One primitive ready to render: world transform plus an activated payload
/// grid [4,M,M,M] (channels R,G,B in 0..255 and α ≥ 0 per meter).
#[derive(Debug, Clone)]
pub struct ScenePrim {
    pub xform: PrimTransform,
    pub payload: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub prims: Vec<ScenePrim>,
    pub xforms: Vec<PrimTransform>,
    pub bvh: Bvh,
}

impl Scene {
    pub fn new(prims: Vec<ScenePrim>) -> Self {
        let xforms: Vec<PrimTransform> = prims.iter().map(|p| p.xform).collect();
        let aabbs: Vec<_> = xforms.iter().map(prim_aabb).collect();
        Scene { prims, xforms, bvh: Bvh::build(&aabbs) }
    }
}

/// Shaded outputs of one ray. `color` is premultiplied (not composited).
#[derive(Debug, Clone, Copy, Default)]
pub struct RayShade {
    pub color: [f64; 3],
    pub alpha: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PrimContrib {
    pub prim: usize,
    pub local: Vec3,
    pub alpha: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SampleRec {
    pub t: f64,
    /// Blended opacity α_k = Σ_j α_j (per meter).
    pub alpha_sum: f64,
    /// Clamped accumulator weight w_k.
    pub weight: f64,
    /// Blended color c_k = Σ_j α_j c_j / α_k.
    pub color: [f64; 3],
    pub contribs: Vec<PrimContrib>,
}

/// Everything the reverse pass and flow pass need to replay one ray.
#[derive(Debug, Clone, Default)]
pub struct RayRecord {
    pub samples: Vec<SampleRec>,
    /// Index of the sample where the accumulator clamped, or samples.len().
    pub crossing: usize,
    pub alpha: f64,
    pub depth: f64,
}

/// Front-to-back march of one ray. Marching stops once the accumulator
/// saturates; later samples carry zero weight and zero gradient.
pub fn march_rgba(ray: &Ray, scene: &Scene, cfg: &MarchConfig) -> (RayShade, RayRecord) {
    let mut shade = RayShade::default();
    let mut record = RayRecord::default();
    let hits = ray_intersections(&scene.bvh, &scene.xforms, ray.origin, ray.dir);
    if hits.is_empty() {
        return (shade, record);
    }
    let t_lo = hits[0].0.max(ray.t_min).max(0.0);
    let t_hi = hits.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max).min(ray.t_max);
    if t_hi <= t_lo {
        return (shade, record);
    }
    let dt = cfg.dt;
    let mut m = ((t_lo / dt - 0.5).ceil() as i64).max(0);
    let mut next_hit = 0usize;
    let mut active: Vec<usize> = Vec::new();
    let mut payload = [0.0; 4];
    let mut acc = 0.0;
    let mut depth_num = 0.0;
    let mut crossed = false;
    loop {
        let t = (m as f64 + 0.5) * dt;
        if t > t_hi {
            break;
        }
        m += 1;
        while next_hit < hits.len() && hits[next_hit].0 <= t {
            active.push(next_hit);
            next_hit += 1;
        }
        active.retain(|&h| hits[h].1 >= t);
        if active.is_empty() {
            // Jump the comb to the next interval start.
            if next_hit < hits.len() {
                let skip_to = hits[next_hit].0;
                let jump = ((skip_to / dt - 0.5).ceil() as i64).max(m);
                m = jump;
            } else {
                break;
            }
            continue;
        }
        let x = ray.point(t);
        let mut alpha_sum = 0.0;
        let mut csum = [0.0; 3];
        let mut contribs = Vec::with_capacity(active.len());
        for &h in &active {
            let pi = hits[h].2;
            let prim = &scene.prims[pi];
            let local = prim.xform.world_to_local(x);
            trilinear_forward_into(&prim.payload, local, &mut payload);
            let a = payload[3];
            debug_assert!(a >= 0.0, "negative opacity in payload");
            alpha_sum += a;
            for c in 0..3 {
                csum[c] += a * payload[c];
            }
            contribs.push(PrimContrib {
                prim: pi,
                local,
                alpha: a,
                color: [payload[0], payload[1], payload[2]],
            });
        }
        if alpha_sum <= ALPHA_FLOOR {
            continue;
        }
        let color = [csum[0] / alpha_sum, csum[1] / alpha_sum, csum[2] / alpha_sum];
        let tau = alpha_sum * dt;
        let next = (acc + tau).min(1.0);
        let w = next - acc;
        if !crossed && acc + tau >= 1.0 {
            crossed = true;
        }
        acc = next;
        for c in 0..3 {
            shade.color[c] += w * color[c];
        }
        depth_num += w * t;
        record.samples.push(SampleRec { t, alpha_sum, weight: w, color, contribs });
        if crossed {
            break;
        }
    }
    record.crossing = if crossed { record.samples.len() - 1 } else { record.samples.len() };
    shade.alpha = acc;
    shade.depth = if acc > A_MIN { depth_num / acc } else { 0.0 };
    record.alpha = shade.alpha;
    record.depth = shade.depth;
    (shade, record)
}

/// A scene-flow rendering task: per-primitive displacement grids [3,M,M,M]
/// (world meters) and the camera that projects them to pixels.
pub struct FlowJob<'a> {
    pub flows: &'a [Tensor],
    pub camera: &'a PinholeCamera,
    pub mode: FlowProjection,
}

fn sample_flow(record: &SampleRec, flows: &[Tensor]) -> Vec3 {
    let mut dsum = [0.0; 3];
    let mut buf = [0.0; 3];
    for c in &record.contribs {
        trilinear_forward_into(&flows[c.prim], c.local, &mut buf);
        for a in 0..3 {
            dsum[a] += c.alpha * buf[a];
        }
    }
    math::scale(dsum, 1.0 / record.alpha_sum)
}

/// Rendered 2D flow of one ray, reusing the RGBA pass's weights. Samples
/// whose displaced point falls behind the camera contribute zero.
pub fn march_flow(record: &RayRecord, ray: &Ray, job: &FlowJob) -> [f64; 2] {
    if record.alpha <= A_MIN {
        return [0.0; 2];
    }
    match job.mode {
        FlowProjection::PerSample => {
            let mut out = [0.0; 2];
            for s in &record.samples {
                if s.weight == 0.0 {
                    continue;
                }
                let x = ray.point(s.t);
                let delta = sample_flow(s, job.flows);
                let (a, b) = (job.camera.project(x), job.camera.project(math::add(x, delta)));
                if let (Ok((p0, _)), Ok((p1, _))) = (a, b) {
                    out[0] += s.weight * (p1[0] - p0[0]);
                    out[1] += s.weight * (p1[1] - p0[1]);
                }
            }
            out
        }
        FlowProjection::ExpectedPoint => {
            let mut xbar = [0.0; 3];
            let mut xbar_adv = [0.0; 3];
            for s in &record.samples {
                if s.weight == 0.0 {
                    continue;
                }
                let x = ray.point(s.t);
                let delta = sample_flow(s, job.flows);
                for a in 0..3 {
                    xbar[a] += s.weight * x[a];
                    xbar_adv[a] += s.weight * (x[a] + delta[a]);
                }
            }
            let xbar = math::scale(xbar, 1.0 / record.alpha);
            let xbar_adv = math::scale(xbar_adv, 1.0 / record.alpha);
            match (job.camera.project(xbar), job.camera.project(xbar_adv)) {
                (Ok((p0, _)), Ok((p1, _))) => [p1[0] - p0[0], p1[1] - p0[1]],
                _ => [0.0; 2],
            }
        }
    }
}

/// Gradient sinks for one scene's payloads and transforms.
pub struct SceneGrads {
    pub d_payload: Vec<Tensor>,
    pub d_t: Vec<Vec3>,
    pub d_rot: Vec<Mat3>,
    pub d_s: Vec<Vec3>,
}

impl SceneGrads {
    pub fn zeros(scene: &Scene) -> Self {
        SceneGrads {
            d_payload: scene.prims.iter().map(|p| Tensor::zeros(p.payload.shape())).collect(),
            d_t: vec![[0.0; 3]; scene.prims.len()],
            d_rot: vec![[[0.0; 3]; 3]; scene.prims.len()],
            d_s: vec![[0.0; 3]; scene.prims.len()],
        }
    }
}

/// Gradient sink for one scene-flow grid set.
pub struct FlowGrads {
    pub d_flow: Vec<Tensor>,
}

impl FlowGrads {
    pub fn zeros(flows: &[Tensor]) -> Self {
        FlowGrads { d_flow: flows.iter().map(|f| Tensor::zeros(f.shape())).collect() }
    }
}

/// One flow rendering whose upstream gradient participates in the VJP.
pub struct FlowVjpJob<'a> {
    pub flows: &'a [Tensor],
    pub camera: &'a PinholeCamera,
    pub mode: FlowProjection,
    pub d_flow: [f64; 2],
    pub grads: &'a mut FlowGrads,
}

/// Upstream gradients on one ray's outputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayUpstream {
    pub d_color: [f64; 3],
    pub d_alpha: f64,
    pub d_depth: f64,
}

/// Exact reverse of `march_rgba` (+ any flow renderings) for one ray.
///
/// Opacity-derived quantities are frozen in the flow path: the flow
/// gradient reaches displacement grids and (through their sample position)
/// transforms, but never α payloads or accumulator weights.
pub fn march_vjp(
    ray: &Ray,
    scene: &Scene,
    cfg: &MarchConfig,
    record: &RayRecord,
    up: &RayUpstream,
    flow_jobs: &mut [FlowVjpJob<'_>],
    grads: &mut SceneGrads,
) {
    let n = record.samples.len();
    if n == 0 {
        return;
    }
    let a_total = record.alpha;
    let depth_live = a_total > A_MIN;

    // dL/dw_k for the color/alpha/depth paths (flow is weight-frozen).
    let mut dw = vec![0.0; n];
    for (k, s) in record.samples.iter().enumerate() {
        let mut u = up.d_alpha;
        for c in 0..3 {
            u += up.d_color[c] * s.color[c];
        }
        if depth_live {
            u += up.d_depth * (s.t - record.depth) / a_total;
        }
        dw[k] = u;
    }
    let m = record.crossing;
    let um = if m < n { dw[m] } else { 0.0 };

    // Expected-point flow needs the integrated points before the per-sample
    // loop.
    let mut expected: Vec<Option<(Vec3, Vec3)>> = Vec::with_capacity(flow_jobs.len());
    for job in flow_jobs.iter() {
        if job.mode == FlowProjection::ExpectedPoint && a_total > A_MIN {
            let mut xbar = [0.0; 3];
            let mut xadv = [0.0; 3];
            for s in &record.samples {
                let x = ray.point(s.t);
                let delta = sample_flow(s, job.flows);
                for a in 0..3 {
                    xbar[a] += s.weight * x[a];
                    xadv[a] += s.weight * (x[a] + delta[a]);
                }
            }
            expected.push(Some((
                math::scale(xbar, 1.0 / a_total),
                math::scale(xadv, 1.0 / a_total),
            )));
        } else {
            expected.push(None);
        }
    }

    let mut up4 = [0.0; 4];
    let mut up3 = [0.0; 3];
    for (k, s) in record.samples.iter().enumerate() {
        let x = ray.point(s.t);
        // Weight-path gradient on this sample's tau = alpha_sum * dt. Before
        // the crossing, nudging tau_j grows w_j and shrinks the crossing
        // weight w_m by the same amount, so dL/dtau_j = dw_j - dw_m (with
        // dw_m read as 0 when nothing clamps); at the crossing itself the
        // clamp's zero subgradient kills the term.
        let dtau = if k < m { dw[k] - um } else { 0.0 };
        let dalpha_weightpath = dtau * cfg.dt;
        // Blend-path gradient on c_k.
        let dck = [
            up.d_color[0] * s.weight,
            up.d_color[1] * s.weight,
            up.d_color[2] * s.weight,
        ];
        // Flow-path upstream on delta_k (3D), per job; weights frozen.
        let mut ddelta_k: Vec<Vec3> = Vec::with_capacity(flow_jobs.len());
        for (ji, job) in flow_jobs.iter().enumerate() {
            if record.alpha <= A_MIN || s.weight == 0.0 {
                ddelta_k.push([0.0; 3]);
                continue;
            }
            match job.mode {
                FlowProjection::PerSample => {
                    let delta = sample_flow(s, job.flows);
                    let moved = math::add(x, delta);
                    if job.camera.project(x).is_ok() && job.camera.project(moved).is_ok() {
                        let jac = job.camera.project_jacobian(moved);
                        let mut g = [0.0; 3];
                        for a in 0..3 {
                            g[a] = s.weight
                                * (job.d_flow[0] * jac[0][a] + job.d_flow[1] * jac[1][a]);
                        }
                        ddelta_k.push(g);
                    } else {
                        ddelta_k.push([0.0; 3]);
                    }
                }
                FlowProjection::ExpectedPoint => {
                    if let Some((xbar, xadv)) = expected[ji] {
                        if job.camera.project(xbar).is_ok() && job.camera.project(xadv).is_ok() {
                            let jac = job.camera.project_jacobian(xadv);
                            let coeff = s.weight / a_total;
                            let mut g = [0.0; 3];
                            for a in 0..3 {
                                g[a] = coeff
                                    * (job.d_flow[0] * jac[0][a] + job.d_flow[1] * jac[1][a]);
                            }
                            ddelta_k.push(g);
                        } else {
                            ddelta_k.push([0.0; 3]);
                        }
                    } else {
                        ddelta_k.push([0.0; 3]);
                    }
                }
            }
        }

        for contrib in &s.contribs {
            let pi = contrib.prim;
            let prim = &scene.prims[pi];
            // Color path: dL/dc_jk = dck * (alpha_jk / alpha_k).
            let frac = contrib.alpha / s.alpha_sum;
            // Alpha path: weight path + color mixing path.
            let mut dalpha = dalpha_weightpath;
            for c in 0..3 {
                dalpha += dck[c] * (contrib.color[c] - s.color[c]) / s.alpha_sum;
            }
            up4[0] = dck[0] * frac;
            up4[1] = dck[1] * frac;
            up4[2] = dck[2] * frac;
            up4[3] = dalpha;
            let mut dlocal = [0.0; 3];
            trilinear_backward_into(
                &prim.payload,
                contrib.local,
                &up4,
                grads.d_payload[pi].data_mut(),
                &mut dlocal,
            );
            // Flow grids sampled at the same local point.
            for (ji, job) in flow_jobs.iter_mut().enumerate() {
                let g = ddelta_k[ji];
                if g == [0.0; 3] {
                    continue;
                }
                up3[0] = g[0] * frac;
                up3[1] = g[1] * frac;
                up3[2] = g[2] * frac;
                trilinear_backward_into(
                    &job.flows[pi],
                    contrib.local,
                    &up3,
                    job.grads.d_flow[pi].data_mut(),
                    &mut dlocal,
                );
            }
            // Transform chain from dlocal: u = diag(1/s) R^T (x - t).
            let xf = &prim.xform;
            let q = [
                dlocal[0] / xf.s[0],
                dlocal[1] / xf.s[1],
                dlocal[2] / xf.s[2],
            ];
            let dt_vec = math::mat_vec(&xf.rot, q);
            let v = math::sub(x, xf.t);
            for a in 0..3 {
                grads.d_t[pi][a] -= dt_vec[a];
                grads.d_s[pi][a] -= dlocal[a] * contrib.local[a] / xf.s[a];
                for b in 0..3 {
                    grads.d_rot[pi][a][b] += v[a] * q[b];
                }
            }
        }
    }
}

/// Full-frame rendering.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    /// Composited color, 0..255 per channel.
    pub color: Image,
    pub alpha: DepthMap,
    pub depth: DepthMap,
    pub flow: Option<FlowMap>,
}

/// Render every pixel of `camera`, compositing over the background; when a
/// flow job is given, also renders the 2D flow image.
pub fn render_view(
    camera: &PinholeCamera,
    scene: &Scene,
    cfg: &MarchConfig,
    flow: Option<&FlowJob>,
) -> RenderOutput {
    use rayon::prelude::*;
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<(Vec<f32>, Vec<f32>, Vec<f32>, Vec<f32>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut crow = vec![0.0f32; w * 3];
            let mut arow = vec![0.0f32; w];
            let mut drow = vec![0.0f32; w];
            let mut frow = vec![0.0f32; w * 2];
            for x in 0..w {
                let (o, d) = camera.ray_through([x as f64, y as f64]);
                let ray = Ray::new(o, d);
                let (shade, record) = march_rgba(&ray, scene, cfg);
                for c in 0..3 {
                    let v = shade.color[c] + (1.0 - shade.alpha) * cfg.background[c];
                    crow[x * 3 + c] = v as f32;
                }
                arow[x] = shade.alpha as f32;
                drow[x] = shade.depth as f32;
                if let Some(job) = flow {
                    let f = march_flow(&record, &ray, job);
                    frow[x * 2] = f[0] as f32;
                    frow[x * 2 + 1] = f[1] as f32;
                }
            }
            (crow, arow, drow, frow)
        })
        .collect();
    let mut color = Image::new(w, h, 3);
    let mut alpha = DepthMap::new(w, h, 1);
    let mut depth = DepthMap::new(w, h, 1);
    let mut flow_map = flow.map(|_| FlowMap::new(w, h, 2));
    for (y, (crow, arow, drow, frow)) in rows.into_iter().enumerate() {
        color.data_mut()[y * w * 3..(y + 1) * w * 3].copy_from_slice(&crow);
        alpha.data_mut()[y * w..(y + 1) * w].copy_from_slice(&arow);
        depth.data_mut()[y * w..(y + 1) * w].copy_from_slice(&drow);
        if let Some(fm) = flow_map.as_mut() {
            fm.data_mut()[y * w * 2..(y + 1) * w * 2].copy_from_slice(&frow);
        }
    }
    RenderOutput { color, alpha, depth, flow: flow_map }
}
