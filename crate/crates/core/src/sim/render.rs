//! Ground-truth rendering of the synthetic scene.
//!
//! Dense strands become chains of oriented tube primitives (radial opacity
//! falloff, per-strand color ramp along the length) rendered with the same
//! raymarcher the trainer differentiates. Depth maps store the camera-axis
//! depth of the expected ray termination point; an element map remembers
//! which strand dominates each pixel so optical flow can be computed by
//! advecting the surface point with that strand's exact rigid motion.

use super::SceneMotion;
use crate::geom::{DepthMap, FlowMap, Image, PinholeCamera, StrandSet};
use crate::march::{march_rgba, MarchConfig, Ray, Scene, ScenePrim};
use crate::math::{self, Vec3};
use crate::autodiff::Tensor;
use crate::prims::frame_from_tangent;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GtRenderConfig {
    /// Tube radius, meters.
    pub tube_radius: f64,
    /// Core opacity of a tube, per meter.
    pub tube_alpha: f64,
    /// Payload grid resolution per tube.
    pub grid_m: usize,
    /// Raymarch step, meters.
    pub dt: f64,
    pub background: [f64; 3],
    /// Pixels with accumulated alpha below this get depth 0.
    pub depth_alpha_min: f64,
}

impl Default for GtRenderConfig {
    fn default() -> Self {
        GtRenderConfig {
            tube_radius: 3e-3,
            tube_alpha: 2000.0,
            grid_m: 6,
            dt: 5e-4,
            background: [0.0; 3],
            depth_alpha_min: 0.5,
        }
    }
}

/// A renderable tube decomposition of a strand set.
pub struct TubeScene {
    pub scene: Scene,
    /// Strand index per primitive.
    pub prim_strand: Vec<usize>,
}

/// Distinct base colors (0..255 RGB), hue-cycled with the golden ratio.
pub fn strand_colors(count: usize) -> Vec<[f64; 3]> {
    (0..count)
        .map(|i| {
            let hue = (i as f64 * 0.618_033_988_749_895).fract();
            hsv_to_rgb(hue, 0.65, 1.0)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.fract() * 6.0).rem_euclid(6.0);
    let f = h6.fract();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match h6 as usize {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r * 255.0, g * 255.0, b * 255.0]
}

/// One tube primitive per strand segment: box length covers the segment
/// with a small overlap, opacity falls off quadratically with radius, and
/// the color ramps from 55% to 100% of the strand's base color along its
/// length (so flow and tracking see texture).
pub fn build_tube_scene(
    dense: &StrandSet,
    colors: &[[f64; 3]],
    cfg: &GtRenderConfig,
) -> TubeScene {
    let n = dense.nodes_per_strand();
    let m = cfg.grid_m;
    let mut prims = Vec::new();
    let mut prim_strand = Vec::new();
    for s in 0..dense.num_strands() {
        let strand = dense.strand(s);
        let base = colors[s % colors.len()];
        for seg in 0..n - 1 {
            let (a, b) = (strand[seg], strand[seg + 1]);
            let axis = math::sub(b, a);
            let len = math::norm(axis);
            if len < 1e-9 {
                continue;
            }
            let tau = math::scale(axis, 1.0 / len);
            // Any radially symmetric frame will do; tilt toward a fixed
            // auxiliary point for stability.
            let rot = frame_from_tangent(tau, [0.0, -1.0, 0.0]);
            let t = math::scale(math::add(a, b), 0.5);
            let sx = len * 0.5 + cfg.tube_radius * 0.5;
            let xform = crate::prims::PrimTransform {
                t,
                rot,
                s: [sx, cfg.tube_radius, cfg.tube_radius],
            };
            let mut data = vec![0.0; 4 * m * m * m];
            for iz in 0..m {
                let uz = crate::prims::voxel_coord(iz, m);
                for iy in 0..m {
                    let uy = crate::prims::voxel_coord(iy, m);
                    let radial = (1.0 - (uy * uy + uz * uz)).max(0.0);
                    for ix in 0..m {
                        let ux = crate::prims::voxel_coord(ix, m);
                        let frac = ((seg as f64 + (ux + 1.0) * 0.5) / (n - 1) as f64)
                            .clamp(0.0, 1.0);
                        let ramp = 0.55 + 0.45 * frac;
                        let idx = (iz * m + iy) * m + ix;
                        let voxels = m * m * m;
                        for c in 0..3 {
                            data[c * voxels + idx] = base[c] * ramp;
                        }
                        data[3 * voxels + idx] = cfg.tube_alpha * radial;
                    }
                }
            }
            prims.push(ScenePrim { xform, payload: Tensor::new(&[4, m, m, m], data) });
            prim_strand.push(s);
        }
    }
    TubeScene { scene: Scene::new(prims), prim_strand }
}

/// One rendered camera view plus the per-pixel dominant strand.
pub struct GtView {
    pub image: Image,
    /// Camera-axis depth of the expected termination point; 0 where the
    /// accumulated alpha is below the configured threshold.
    pub depth: DepthMap,
    pub alpha: DepthMap,
    /// Dominant strand per pixel, -1 where nothing was hit.
    pub element: Vec<i64>,
}

pub fn render_gt_view(camera: &PinholeCamera, tubes: &TubeScene, cfg: &GtRenderConfig) -> GtView {
    let (w, h) = (camera.width, camera.height);
    let march_cfg = MarchConfig {
        dt: cfg.dt,
        background: cfg.background,
        flow_projection: crate::march::FlowProjection::PerSample,
    };
    let rows: Vec<(Vec<f32>, Vec<f32>, Vec<f32>, Vec<i64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut crow = vec![0.0f32; w * 3];
            let mut drow = vec![0.0f32; w];
            let mut arow = vec![0.0f32; w];
            let mut erow = vec![-1i64; w];
            let mut strand_weight: Vec<(usize, f64)> = Vec::new();
            for x in 0..w {
                let (o, d) = camera.ray_through([x as f64, y as f64]);
                let ray = Ray::new(o, d);
                let (shade, record) = march_rgba(&ray, &tubes.scene, &march_cfg);
                for c in 0..3 {
                    crow[x * 3 + c] =
                        (shade.color[c] + (1.0 - shade.alpha) * cfg.background[c]) as f32;
                }
                arow[x] = shade.alpha as f32;
                if shade.alpha >= cfg.depth_alpha_min {
                    let surface = ray.point(shade.depth);
                    drow[x] = camera.depth_of(surface) as f32;
                    // Dominant strand: largest share of the accumulated
                    // opacity.
                    strand_weight.clear();
                    for samp in &record.samples {
                        for contrib in &samp.contribs {
                            let share = samp.weight * contrib.alpha / samp.alpha_sum;
                            let sid = tubes.prim_strand[contrib.prim];
                            match strand_weight.iter_mut().find(|(s, _)| *s == sid) {
                                Some((_, acc)) => *acc += share,
                                None => strand_weight.push((sid, share)),
                            }
                        }
                    }
                    if let Some((sid, _)) = strand_weight
                        .iter()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                    {
                        erow[x] = *sid as i64;
                    }
                }
            }
            (crow, drow, arow, erow)
        })
        .collect();
    let mut image = Image::new(w, h, 3);
    let mut depth = DepthMap::new(w, h, 1);
    let mut alpha = DepthMap::new(w, h, 1);
    let mut element = vec![-1i64; w * h];
    for (y, (crow, drow, arow, erow)) in rows.into_iter().enumerate() {
        image.data_mut()[y * w * 3..(y + 1) * w * 3].copy_from_slice(&crow);
        depth.data_mut()[y * w..(y + 1) * w].copy_from_slice(&drow);
        alpha.data_mut()[y * w..(y + 1) * w].copy_from_slice(&arow);
        element[y * w..(y + 1) * w].copy_from_slice(&erow);
    }
    GtView { image, depth, alpha, element }
}

/// Flow from a rendered view under an arbitrary per-strand advection:
/// unproject each foreground pixel at its stored depth, advect, reproject,
/// difference. Background pixels get (0,0).
pub fn flow_from_view(
    view: &GtView,
    camera: &PinholeCamera,
    advect: impl Fn(usize, Vec3) -> Vec3,
) -> FlowMap {
    let (w, h) = (camera.width, camera.height);
    let mut flow = FlowMap::new(w, h, 2);
    for y in 0..h {
        for x in 0..w {
            let depth = view.depth.at(x, y, 0) as f64;
            let sid = view.element[y * w + x];
            if depth <= 0.0 || sid < 0 {
                continue;
            }
            let point = camera.unproject([x as f64, y as f64], depth);
            let moved = advect(sid as usize, point);
            let (Ok((p0, _)), Ok((p1, _))) = (camera.project(point), camera.project(moved))
            else {
                continue;
            };
            flow.set(x, y, 0, p1[0] - p0[0]);
            flow.set(x, y, 1, p1[1] - p0[1]);
        }
    }
    flow
}

/// Exact optical flow from frame t1 to t2 for one camera, advecting each
/// pixel's surface point with the dominant strand's rigid motion.
pub fn gt_flow(
    motion: &SceneMotion,
    view: &GtView,
    camera: &PinholeCamera,
    t1: usize,
    t2: usize,
    noise_px: f64,
) -> FlowMap {
    let mut flow =
        flow_from_view(view, camera, |sid, x| motion.dense_motion(sid, t1, t2).apply(x));
    if noise_px > 0.0 {
        let forward = t2 > t1;
        let mut rng = super::flow_noise_rng(motion.seed, t1, camera.id, forward);
        for v in flow.data_mut() {
            *v += (noise_px * rng.sample::<f64, _>(StandardNormal)) as f32;
        }
    }
    flow
}
