//! Oriented box primitives attached to strand nodes or head-proxy vertices:
//! deterministic base frames, learned delta application, voxel-grid world
//! positions for scene flow, and ray/box intersection through a BVH.

use crate::math::{self, Mat3, Vec3};
use crate::{Error, Result};

/// Smallest allowed half-extent after delta application (meters).
pub const S_MIN: f64 = 1e-4;

/// Pose derived from geometry alone, before learned deltas. The rotation
/// stores the frame axes as columns: local x along the strand tangent,
/// local z toward the head center (negated to keep det +1).
#[derive(Debug, Clone, Copy)]
pub struct BaseFrame {
    pub t_hat: Vec3,
    pub r_hat: Mat3,
    pub s_hat: Vec3,
}

/// A primitive's world transform after deltas. Payloads live elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct PrimTransform {
    pub t: Vec3,
    pub rot: Mat3,
    pub s: Vec3,
}

fn axes_to_columns(tau: Vec3, rho: Vec3, nu: Vec3) -> Mat3 {
    [[tau[0], rho[0], nu[0]], [tau[1], rho[1], nu[1]], [tau[2], rho[2], nu[2]]]
}

/// Column i of a rotation matrix (the world direction of local axis i).
pub fn frame_axis(rot: &Mat3, i: usize) -> Vec3 {
    [rot[0][i], rot[1][i], rot[2][i]]
}

pub(crate) fn frame_from_tangent(tau: Vec3, toward_center: Vec3) -> Mat3 {
    let mut rho = math::cross(tau, toward_center);
    if math::norm(rho) <= 1e-4 {
        // Tangent (anti)parallel to the center direction: fall back to a
        // fixed auxiliary axis, picking a second one when that is also
        // degenerate.
        let aux =
            if math::cross(tau, [0.0, 0.0, 1.0]).iter().map(|v| v * v).sum::<f64>() > 1e-8 {
                [0.0, 0.0, 1.0]
            } else {
                [0.0, 1.0, 0.0]
            };
        rho = math::cross(tau, aux);
    }
    let rho = math::normalize(rho);
    let nu = math::cross(tau, rho);
    axes_to_columns(tau, rho, nu)
}

/// Base frame of a strand-node primitive. `span` is the along-tangent
/// distance this primitive must cover (the distance to the next attached
/// node); `r0` is the lateral radius.
pub fn base_transform(node: Vec3, next: Vec3, head_center: Vec3, span: f64, r0: f64) -> Result<BaseFrame> {
    let seg = math::sub(next, node);
    let len = math::norm(seg);
    if len < 1e-12 {
        return Err(Error::Contract("degenerate strand segment (zero length)".into()));
    }
    let tau = math::scale(seg, 1.0 / len);
    let toward = math::sub(head_center, node);
    let toward = if math::norm(toward) < 1e-12 { [0.0, 0.0, 1.0] } else { math::normalize(toward) };
    Ok(BaseFrame {
        t_hat: node,
        r_hat: frame_from_tangent(tau, toward),
        s_hat: [span * 0.5, r0, r0],
    })
}

/// Base frame of a head-proxy vertex primitive: local x along the azimuth
/// tangent, frame tilted toward the center, isotropic base extent.
pub fn vertex_base_transform(vertex: Vec3, head_center: Vec3, radius: f64) -> Result<BaseFrame> {
    let outward = math::sub(vertex, head_center);
    if math::norm(outward) < 1e-12 {
        return Err(Error::Contract("proxy vertex coincides with head center".into()));
    }
    let n = math::normalize(outward);
    let mut tau = math::cross([0.0, 0.0, 1.0], n);
    if math::norm(tau) <= 1e-6 {
        tau = math::cross([1.0, 0.0, 0.0], n);
    }
    let tau = math::normalize(tau);
    Ok(BaseFrame {
        t_hat: vertex,
        r_hat: frame_from_tangent(tau, math::scale(n, -1.0)),
        s_hat: [radius, radius, radius],
    })
}

/// t = t̂ + δt; R = exp(δR)·R̂; s = max(ŝ + δs, S_MIN).
pub fn apply_deltas(base: &BaseFrame, dt: Vec3, dr: Vec3, ds: Vec3) -> PrimTransform {
    PrimTransform {
        t: math::add(base.t_hat, dt),
        rot: math::mat_mul(&math::rotation_exp(dr), &base.r_hat),
        s: [
            (base.s_hat[0] + ds[0]).max(S_MIN),
            (base.s_hat[1] + ds[1]).max(S_MIN),
            (base.s_hat[2] + ds[2]).max(S_MIN),
        ],
    }
}

impl PrimTransform {
    pub fn from_base(base: &BaseFrame) -> Self {
        PrimTransform { t: base.t_hat, rot: base.r_hat, s: base.s_hat }
    }

    /// local = diag(1/s)·Rᵀ·(point − t); inside iff local ∈ [−1,1]³.
    pub fn world_to_local(&self, p: Vec3) -> Vec3 {
        let v = math::mat_t_vec(&self.rot, math::sub(p, self.t));
        [v[0] / self.s[0], v[1] / self.s[1], v[2] / self.s[2]]
    }

    pub fn local_to_world(&self, l: Vec3) -> Vec3 {
        let scaled = [l[0] * self.s[0], l[1] * self.s[1], l[2] * self.s[2]];
        math::add(self.t, math::mat_vec(&self.rot, scaled))
    }
}

/// Lattice coordinate of voxel `i` of `m` along one axis; centers span
/// exactly [−1, 1] (matching the trilinear sampler's convention).
pub fn voxel_coord(i: usize, m: usize) -> f64 {
    if m == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (m - 1) as f64
    }
}

/// World positions of the M³ voxel centers, ordered to match a [C,D,H,W]
/// payload (z outermost, x innermost).
pub fn grid_world_positions(prim: &PrimTransform, m: usize) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(m * m * m);
    for iz in 0..m {
        let z = voxel_coord(iz, m);
        for iy in 0..m {
            let y = voxel_coord(iy, m);
            for ix in 0..m {
                out.push(prim.local_to_world([voxel_coord(ix, m), y, z]));
            }
        }
    }
    out
}

// ---- ray / box intersection ------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: [
                self.min[0].min(other.min[0]),
                self.min[1].min(other.min[1]),
                self.min[2].min(other.min[2]),
            ],
            max: [
                self.max[0].max(other.max[0]),
                self.max[1].max(other.max[1]),
                self.max[2].max(other.max[2]),
            ],
        }
    }

    pub fn centroid(&self) -> Vec3 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    /// Conservative slab test: does the ray touch the box anywhere at t >= 0?
    fn hit_by(&self, o: Vec3, d: Vec3) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if d[i].abs() < 1e-300 {
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let (a, b) = ((self.min[i] - o[i]) * inv, (self.max[i] - o[i]) * inv);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// World-space AABB of an oriented box: half-extent along world axis i is
/// Σ_j |R_ij|·s_j, so all 8 corners are inside by construction.
pub fn prim_aabb(prim: &PrimTransform) -> Aabb {
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for i in 0..3 {
        let e = (0..3).map(|j| prim.rot[i][j].abs() * prim.s[j]).sum::<f64>();
        min[i] = prim.t[i] - e;
        max[i] = prim.t[i] + e;
    }
    Aabb { min, max }
}

/// Exact slab test of a world ray against one oriented box. The ray is
/// re-expressed in the unscaled local frame (rotation only), which keeps
/// the returned interval in world-metric units.
pub fn ray_box_interval(prim: &PrimTransform, o: Vec3, d: Vec3) -> Option<(f64, f64)> {
    let ol = math::mat_t_vec(&prim.rot, math::sub(o, prim.t));
    let dl = math::mat_t_vec(&prim.rot, d);
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        let s = prim.s[i];
        if dl[i].abs() < 1e-300 {
            if ol[i].abs() > s {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dl[i];
        let (a, b) = ((-s - ol[i]) * inv, (s - ol[i]) * inv);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    if t1 <= t0.max(0.0) {
        None
    } else {
        Some((t0, t1))
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    aabb: Aabb,
    /// Interior: children indices. Leaf: start/count into `order`.
    left: usize,
    right: usize,
    start: usize,
    count: usize,
}

/// Binary AABB tree over primitives. Queries return exactly the same
/// intervals as a brute-force scan (same slab arithmetic on candidates).
#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

const BVH_LEAF: usize = 4;

impl Bvh {
    pub fn build(aabbs: &[Aabb]) -> Bvh {
        let mut bvh = Bvh { nodes: Vec::new(), order: (0..aabbs.len()).collect() };
        if !aabbs.is_empty() {
            bvh.split(aabbs, 0, aabbs.len());
        }
        bvh
    }

    fn split(&mut self, aabbs: &[Aabb], start: usize, end: usize) -> usize {
        let mut bounds = aabbs[self.order[start]];
        for &i in &self.order[start + 1..end] {
            bounds = bounds.union(&aabbs[i]);
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode { aabb: bounds, left: 0, right: 0, start, count: 0 });
        if end - start <= BVH_LEAF {
            self.nodes[id].count = end - start;
            return id;
        }
        let mut axis = 0;
        let mut widest = f64::NEG_INFINITY;
        for a in 0..3 {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let c = aabbs[i].centroid()[a];
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > widest {
                widest = hi - lo;
                axis = a;
            }
        }
        self.order[start..end].sort_by(|&a, &b| {
            aabbs[a].centroid()[axis]
                .total_cmp(&aabbs[b].centroid()[axis])
                .then(a.cmp(&b))
        });
        let mid = (start + end) / 2;
        let left = self.split(aabbs, start, mid);
        let right = self.split(aabbs, mid, end);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    /// Candidate primitive indices whose AABB the ray touches.
    fn candidates(&self, o: Vec3, d: Vec3, out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if !node.aabb.hit_by(o, d) {
                continue;
            }
            if node.count > 0 {
                out.extend_from_slice(&self.order[node.start..node.start + node.count]);
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
    }
}

/// All (t_enter, t_exit, primitive) hits, sorted by entry then index;
/// intervals entirely behind the origin are dropped.
pub fn ray_intersections(
    bvh: &Bvh,
    prims: &[PrimTransform],
    o: Vec3,
    d: Vec3,
) -> Vec<(f64, f64, usize)> {
    let mut cand = Vec::new();
    bvh.candidates(o, d, &mut cand);
    let mut hits: Vec<(f64, f64, usize)> = cand
        .into_iter()
        .filter_map(|i| ray_box_interval(&prims[i], o, d).map(|(a, b)| (a, b, i)))
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
    hits
}

/// Reference scan over every primitive; the BVH must match this exactly.
pub fn ray_intersections_brute(
    prims: &[PrimTransform],
    o: Vec3,
    d: Vec3,
) -> Vec<(f64, f64, usize)> {
    let mut hits: Vec<(f64, f64, usize)> = prims
        .iter()
        .enumerate()
        .filter_map(|(i, p)| ray_box_interval(p, o, d).map(|(a, b)| (a, b, i)))
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn assert_unit_rows_cols(r: &Mat3) {
        for i in 0..3 {
            let col = frame_axis(r, i);
            assert!((math::norm(col) - 1.0).abs() < 1e-9);
            for j in (i + 1)..3 {
                assert!(math::dot(col, frame_axis(r, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn base_frame_worked_example() {
        // Tangent +x, head center straight above: rho = tau x nu' = (0,-1,0),
        // nu = tau x rho = (0,0,-1).
        let f = base_transform([0.0, 0.0, 0.0], [0.02, 0.0, 0.0], [0.0, 0.0, 1.0], 0.02, 0.005)
            .unwrap();
        let tau = frame_axis(&f.r_hat, 0);
        let rho = frame_axis(&f.r_hat, 1);
        let nu = frame_axis(&f.r_hat, 2);
        assert!(math::norm(math::sub(tau, [1.0, 0.0, 0.0])) < 1e-12);
        assert!(math::norm(math::sub(rho, [0.0, -1.0, 0.0])) < 1e-12);
        assert!(math::norm(math::sub(nu, [0.0, 0.0, -1.0])) < 1e-12);
        assert!((math::det(&f.r_hat) - 1.0).abs() < 1e-9);
        assert_eq!(f.s_hat, [0.01, 0.005, 0.005]);
    }

    #[test]
    fn base_frame_orthonormal_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let node = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let next = [
                node[0] + rng.gen::<f64>() - 0.5,
                node[1] + rng.gen::<f64>() - 0.5,
                node[2] + rng.gen::<f64>() - 0.5,
            ];
            if math::norm(math::sub(next, node)) < 1e-6 {
                continue;
            }
            let f = base_transform(node, next, [0.0, 0.0, 0.0], 0.01, 0.004).unwrap();
            assert_unit_rows_cols(&f.r_hat);
            assert!((math::det(&f.r_hat) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn base_frame_parallel_fallback_keeps_det_one() {
        // Tangent points straight at the head center.
        let f = base_transform([0.0, 0.0, 0.0], [0.0, 0.0, 0.01], [0.0, 0.0, 1.0], 0.01, 0.004)
            .unwrap();
        assert_unit_rows_cols(&f.r_hat);
        assert!((math::det(&f.r_hat) - 1.0).abs() < 1e-9);
        // Degenerate segment errors out.
        assert!(base_transform([0.0; 3], [0.0; 3], [0.0, 0.0, 1.0], 0.01, 0.004).is_err());
    }

    #[test]
    fn vertex_frame_valid_everywhere_including_poles() {
        let c = [0.1, -0.2, 0.3];
        for v in [
            [0.2, -0.2, 0.3],
            [0.1, -0.2, 0.45],  // +z pole
            [0.1, -0.2, 0.15],  // -z pole
            [0.1, -0.05, 0.3],
        ] {
            let f = vertex_base_transform(v, c, 0.01).unwrap();
            assert_unit_rows_cols(&f.r_hat);
            assert!((math::det(&f.r_hat) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deltas_identity_and_rotation_and_clamp() {
        let base = base_transform([0.0; 3], [0.01, 0.0, 0.0], [0.0, 0.0, 1.0], 0.01, 0.004)
            .unwrap();
        let id = apply_deltas(&base, [0.0; 3], [0.0; 3], [0.0; 3]);
        assert_eq!(id.t, base.t_hat);
        assert_eq!(id.s, base.s_hat);
        for i in 0..3 {
            for j in 0..3 {
                assert!((id.rot[i][j] - base.r_hat[i][j]).abs() < 1e-15);
            }
        }
        // 90 degrees about z on an identity base.
        let eye = BaseFrame {
            t_hat: [0.0; 3],
            r_hat: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            s_hat: [1.0, 1.0, 1.0],
        };
        let p = apply_deltas(&eye, [0.0; 3], [0.0, 0.0, std::f64::consts::FRAC_PI_2], [0.0; 3]);
        assert!((math::det(&p.rot) - 1.0).abs() < 1e-12);
        let x = math::mat_vec(&p.rot, [1.0, 0.0, 0.0]);
        assert!(math::norm(math::sub(x, [0.0, 1.0, 0.0])) < 1e-12);
        // Scale clamp.
        let clamped = apply_deltas(&base, [0.0; 3], [0.0; 3], math::scale(base.s_hat, -1.0));
        assert_eq!(clamped.s, [S_MIN; 3]);
    }

    #[test]
    fn world_local_round_trip_and_face_center() {
        let base = base_transform([0.1, 0.2, 0.3], [0.12, 0.21, 0.29], [0.0, 0.0, 1.0], 0.02, 0.01)
            .unwrap();
        let prim = apply_deltas(&base, [0.003, -0.001, 0.002], [0.2, -0.1, 0.3], [0.001; 3]);
        assert!(math::norm(prim.world_to_local(prim.t)) < 1e-15);
        let face = prim.local_to_world([1.0, 0.0, 0.0]);
        assert!(math::norm(math::sub(prim.world_to_local(face), [1.0, 0.0, 0.0])) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let l = [
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            ];
            let back = prim.world_to_local(prim.local_to_world(l));
            assert!(math::norm(math::sub(back, l)) < 1e-12);
        }
    }

    #[test]
    fn grid_positions_identity_and_equivariance() {
        let eye = PrimTransform {
            t: [0.0; 3],
            rot: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            s: [2.0, 3.0, 4.0],
        };
        let pts = grid_world_positions(&eye, 2);
        assert_eq!(pts.len(), 8);
        // z outermost, x innermost: first point is (-1,-1,-1) scaled.
        assert_eq!(pts[0], [-2.0, -3.0, -4.0]);
        assert_eq!(pts[1], [2.0, -3.0, -4.0]);
        assert_eq!(pts[7], [2.0, 3.0, 4.0]);

        // Rigidly moving the primitive rigidly moves every grid point.
        let rot = math::rotation_exp([0.3, -0.2, 0.5]);
        let shift = [0.4, -0.1, 0.25];
        let moved = PrimTransform {
            t: math::add(math::mat_vec(&rot, eye.t), shift),
            rot: math::mat_mul(&rot, &eye.rot),
            s: eye.s,
        };
        let m = 5;
        let a = grid_world_positions(&eye, m);
        let b = grid_world_positions(&moved, m);
        for (pa, pb) in a.iter().zip(&b) {
            let expect = math::add(math::mat_vec(&rot, *pa), shift);
            assert!(math::norm(math::sub(*pb, expect)) < 1e-9);
        }
        // Odd grid: the center voxel of a pure rotation about t stays put.
        let spun = PrimTransform { t: eye.t, rot, s: eye.s };
        let c = grid_world_positions(&spun, 3);
        assert!(math::norm(math::sub(c[13], eye.t)) < 1e-12);
    }

    #[test]
    fn axis_aligned_slab_example() {
        let unit = PrimTransform {
            t: [0.0; 3],
            rot: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            s: [1.0, 1.0, 1.0],
        };
        let (t0, t1) = ray_box_interval(&unit, [-2.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap();
        assert!((t0 - 1.0).abs() < 1e-12 && (t1 - 3.0).abs() < 1e-12);
        assert!(ray_box_interval(&unit, [-2.0, 5.0, 0.0], [1.0, 0.0, 0.0]).is_none());
        // Origin inside: entry stays negative, exit positive.
        let (t0, t1) = ray_box_interval(&unit, [0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert!(t0 < 0.0 && (t1 - 1.0).abs() < 1e-12);
        // Fully behind the origin: dropped.
        assert!(ray_box_interval(&unit, [3.0, 0.0, 0.0], [1.0, 0.0, 0.0]).is_none());
    }

    fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Vec<PrimTransform> {
        (0..n)
            .map(|_| {
                let base = BaseFrame {
                    t_hat: [
                        rng.gen::<f64>() * 2.0 - 1.0,
                        rng.gen::<f64>() * 2.0 - 1.0,
                        rng.gen::<f64>() * 2.0 - 1.0,
                    ],
                    r_hat: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                    s_hat: [
                        0.02 + rng.gen::<f64>() * 0.2,
                        0.02 + rng.gen::<f64>() * 0.2,
                        0.02 + rng.gen::<f64>() * 0.2,
                    ],
                };
                let dr = [
                    rng.gen::<f64>() * 6.0 - 3.0,
                    rng.gen::<f64>() * 6.0 - 3.0,
                    rng.gen::<f64>() * 6.0 - 3.0,
                ];
                apply_deltas(&base, [0.0; 3], dr, [0.0; 3])
            })
            .collect()
    }

    #[test]
    fn bvh_matches_brute_force_on_random_scenes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prims = random_scene(&mut rng, 500);
        let aabbs: Vec<Aabb> = prims.iter().map(prim_aabb).collect();
        let bvh = Bvh::build(&aabbs);
        for _ in 0..1000 {
            let o = [
                rng.gen::<f64>() * 6.0 - 3.0,
                rng.gen::<f64>() * 6.0 - 3.0,
                rng.gen::<f64>() * 6.0 - 3.0,
            ];
            let d = math::normalize([
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            ]);
            let fast = ray_intersections(&bvh, &prims, o, d);
            let slow = ray_intersections_brute(&prims, o, d);
            assert_eq!(fast.len(), slow.len());
            for (f, s) in fast.iter().zip(&slow) {
                assert_eq!(f.2, s.2);
                assert_eq!(f.0.to_bits(), s.0.to_bits());
                assert_eq!(f.1.to_bits(), s.1.to_bits());
            }
        }
    }

    #[test]
    fn aabb_contains_all_oriented_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for prim in random_scene(&mut rng, 50) {
            let aabb = prim_aabb(&prim);
            for iz in [-1.0, 1.0] {
                for iy in [-1.0, 1.0] {
                    for ix in [-1.0f64, 1.0] {
                        let c = prim.local_to_world([ix, iy, iz]);
                        for a in 0..3 {
                            assert!(c[a] >= aabb.min[a] - 1e-12 && c[a] <= aabb.max[a] + 1e-12);
                        }
                    }
                }
            }
        }
    }
}
