//! Polyline strands: direction and discrete-curvature estimators.

use crate::math::{self, Vec3};

/// A batch of strands with a shared node count (flattened storage).
#[derive(Debug, Clone, PartialEq)]
pub struct StrandSet {
    nodes_per_strand: usize,
    nodes: Vec<Vec3>,
}

impl StrandSet {
    pub fn new(nodes_per_strand: usize, nodes: Vec<Vec3>) -> Self {
        assert!(nodes_per_strand > 0);
        assert_eq!(nodes.len() % nodes_per_strand, 0, "ragged strand set");
        StrandSet { nodes_per_strand, nodes }
    }

    pub fn from_strands(strands: &[Vec<Vec3>]) -> Self {
        assert!(!strands.is_empty());
        let n = strands[0].len();
        assert!(strands.iter().all(|s| s.len() == n), "ragged strand set");
        StrandSet { nodes_per_strand: n, nodes: strands.iter().flatten().copied().collect() }
    }

    pub fn num_strands(&self) -> usize {
        self.nodes.len() / self.nodes_per_strand
    }

    pub fn nodes_per_strand(&self) -> usize {
        self.nodes_per_strand
    }

    pub fn strand(&self, i: usize) -> &[Vec3] {
        &self.nodes[i * self.nodes_per_strand..(i + 1) * self.nodes_per_strand]
    }

    pub fn strand_mut(&mut self, i: usize) -> &mut [Vec3] {
        &mut self.nodes[i * self.nodes_per_strand..(i + 1) * self.nodes_per_strand]
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Vec3] {
        &mut self.nodes
    }

    pub fn iter_strands(&self) -> impl Iterator<Item = &[Vec3]> {
        self.nodes.chunks(self.nodes_per_strand)
    }
}

/// Forward-difference node direction; the last node reuses the previous
/// segment so every node has one.
#[inline]
pub fn node_dir(nodes: &[Vec3], n: usize) -> Vec3 {
    debug_assert!(nodes.len() >= 2);
    if n + 1 < nodes.len() {
        math::sub(nodes[n + 1], nodes[n])
    } else {
        math::sub(nodes[n], nodes[n - 1])
    }
}

pub fn strand_dirs(nodes: &[Vec3]) -> Vec<Vec3> {
    (0..nodes.len()).map(|n| node_dir(nodes, n)).collect()
}

/// Discrete curvature at node n from the triangle (n, n+1, n+2):
/// sqrt(24 (a + b - c) / c^3) with a, b the segment lengths and c the
/// chord. Collinear nodes give exactly zero (the excess is clamped at 0).
/// Defined for n <= len-3.
#[inline]
pub fn curvature(nodes: &[Vec3], n: usize) -> f64 {
    debug_assert!(n + 2 < nodes.len());
    let a = math::norm(math::sub(nodes[n + 1], nodes[n]));
    let b = math::norm(math::sub(nodes[n + 2], nodes[n + 1]));
    let c = math::norm(math::sub(nodes[n], nodes[n + 2]));
    if c < 1e-12 {
        return 0.0;
    }
    let excess = (a + b - c).max(0.0);
    (24.0 * excess / (c * c * c)).sqrt()
}

/// Curvature and its gradient w.r.t. the three participating nodes.
/// The sqrt kink at zero excess gets subgradient zero.
pub fn curvature_with_grad(nodes: &[Vec3], n: usize) -> (f64, [Vec3; 3]) {
    let p0 = nodes[n];
    let p1 = nodes[n + 1];
    let p2 = nodes[n + 2];
    let va = math::sub(p1, p0);
    let vb = math::sub(p2, p1);
    let vc = math::sub(p0, p2);
    let a = math::norm(va);
    let b = math::norm(vb);
    let c = math::norm(vc);
    let zero = (0.0, [[0.0; 3]; 3]);
    if c < 1e-12 || a < 1e-12 || b < 1e-12 {
        return zero;
    }
    let excess = a + b - c;
    if excess <= 1e-14 {
        return zero;
    }
    let cur = (24.0 * excess / (c * c * c)).sqrt();
    // cur^2 = 24(a+b-c)/c^3, so:
    // d(cur)/da = 12/(cur c^3) (same for b)
    // d(cur)/dc = -12/(cur c^3) - 36(a+b-c)/(cur c^4)
    let dda = 12.0 / (cur * c * c * c);
    let ddb = dda;
    let ddc = -12.0 / (cur * c * c * c) - 36.0 * excess / (cur * c * c * c * c);
    let ua = math::scale(va, 1.0 / a); // d a / d p1 = ua, d a / d p0 = -ua
    let ub = math::scale(vb, 1.0 / b);
    let uc = math::scale(vc, 1.0 / c); // d c / d p0 = uc, d c / d p2 = -uc
    let g0 = math::add(math::scale(ua, -dda), math::scale(uc, ddc));
    let g1 = math::add(math::scale(ua, dda), math::scale(ub, -ddb));
    let g2 = math::add(math::scale(ub, ddb), math::scale(uc, -ddc));
    (cur, [g0, g1, g2])
}

/// Total polyline length.
pub fn strand_length(nodes: &[Vec3]) -> f64 {
    nodes.windows(2).map(|w| math::norm(math::sub(w[1], w[0]))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Polyline on a circle of radius r with per-node turn dtheta.
    fn circle_polyline(r: f64, dtheta: f64, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|i| {
                let th = i as f64 * dtheta;
                [r * th.cos(), r * th.sin(), 0.0]
            })
            .collect()
    }

    #[test]
    fn straight_line_has_zero_curvature() {
        let nodes: Vec<Vec3> = (0..10).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect();
        for n in 0..nodes.len() - 2 {
            assert!(curvature(&nodes, n).abs() < 1e-9);
        }
    }

    #[test]
    fn circle_curvature_matches_polyline_limit() {
        // The estimator converges to sqrt(3)/2 * (1/R) for a sampled circle.
        let nodes = circle_polyline(1.0, 0.02, 16);
        let expect = 0.75f64.sqrt(); // 0.86603 at R = 1
        for n in 0..nodes.len() - 2 {
            let cur = curvature(&nodes, n);
            assert!(
                (cur - expect).abs() / expect < 5e-3,
                "node {n}: {cur} vs {expect}"
            );
        }
        let nodes = circle_polyline(2.0, 0.02, 16);
        let expect = 0.75f64.sqrt() / 2.0; // 0.43301 at R = 2
        let cur = curvature(&nodes, 3);
        assert!((cur - expect).abs() / expect < 5e-3);
    }

    #[test]
    fn curvature_is_rigid_invariant_and_scales_inversely() {
        let nodes = circle_polyline(1.0, 0.05, 8);
        let base: Vec<f64> = (0..6).map(|n| curvature(&nodes, n)).collect();
        let rot = crate::math::rotation_exp([0.4, -0.2, 0.9]);
        let moved: Vec<Vec3> = nodes
            .iter()
            .map(|p| crate::math::add(crate::math::mat_vec(&rot, *p), [1.0, 2.0, 3.0]))
            .collect();
        for n in 0..6 {
            assert!((curvature(&moved, n) - base[n]).abs() < 1e-9);
        }
        let scaled: Vec<Vec3> = nodes.iter().map(|p| crate::math::scale(*p, 2.5)).collect();
        for n in 0..6 {
            assert!((curvature(&scaled, n) - base[n] / 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn curvature_gradient_matches_finite_differences() {
        let nodes = circle_polyline(1.0, 0.3, 4);
        let (_, grad) = curvature_with_grad(&nodes, 0);
        let h = 1e-7;
        for node in 0..3 {
            for q in 0..3 {
                let mut np = nodes.clone();
                let mut nm = nodes.clone();
                np[node][q] += h;
                nm[node][q] -= h;
                let fd = (curvature(&np, 0) - curvature(&nm, 0)) / (2.0 * h);
                assert!(
                    (fd - grad[node][q]).abs() < 1e-5 * fd.abs().max(1.0),
                    "node {node} coord {q}: fd {fd} vs {}",
                    grad[node][q]
                );
            }
        }
    }

    #[test]
    fn dirs_constant_norm_on_helix() {
        let nodes: Vec<Vec3> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.3;
                [t.cos(), t.sin(), 0.1 * t]
            })
            .collect();
        let dirs = strand_dirs(&nodes);
        assert_eq!(dirs.len(), nodes.len());
        let n0 = crate::math::norm(dirs[0]);
        for d in &dirs[..dirs.len() - 1] {
            assert!((crate::math::norm(*d) - n0).abs() < 1e-12);
        }
        // Last node reuses the previous segment.
        assert_eq!(dirs[19], crate::math::sub(nodes[19], nodes[18]));
    }

    #[test]
    fn quarter_turn_per_node_still_positive_excess() {
        let nodes = circle_polyline(1.0, PI / 2.0, 4);
        assert!(curvature(&nodes, 0) > 0.0);
    }
}
