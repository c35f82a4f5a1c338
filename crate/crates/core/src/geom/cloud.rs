//! Oriented point clouds with exact k-nearest-neighbor queries.
//!
//! The kd-tree returns the same neighbors, in the same order, as a
//! brute-force scan sorted by (distance, index): equal distances break
//! toward the lower index, and pruning only discards subtrees that are
//! strictly farther than the current k-th candidate.

use crate::math::{self, Vec3};
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub pos: Vec3,
    /// Unit line direction (sign is not meaningful).
    pub dir: Vec3,
}

#[derive(Debug, Clone, Default)]
pub struct OrientedPointCloud {
    pub points: Vec<OrientedPoint>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<OrientedPoint>) -> Self {
        OrientedPointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn build_index(&self) -> KnnIndex {
        KnnIndex::build(self.points.iter().map(|p| p.pos).collect())
    }

    /// Brute-force k nearest neighbors: (index, distance) ascending,
    /// ties broken by lower index. Reference oracle for the kd-tree.
    pub fn knn_brute(&self, query: Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist2(p.pos, query)))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }
}

#[inline]
fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = math::sub(a, b);
    math::dot(d, d)
}

struct KdNode {
    /// Range into `order`.
    start: u32,
    len: u32,
    axis: u8,
    split: f64,
    left: i32,
    right: i32,
}

/// Static kd-tree over point positions.
pub struct KnnIndex {
    pts: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<KdNode>,
    root: i32,
}

const LEAF_SIZE: usize = 16;

impl KnnIndex {
    pub fn build(pts: Vec<Vec3>) -> Self {
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        let root = if n == 0 { -1 } else { Self::build_node(&pts, &mut order, 0, n, &mut nodes) };
        KnnIndex { pts, order, nodes, root }
    }

    fn build_node(
        pts: &[Vec3],
        order: &mut [u32],
        start: usize,
        len: usize,
        nodes: &mut Vec<KdNode>,
    ) -> i32 {
        if len <= LEAF_SIZE {
            nodes.push(KdNode {
                start: start as u32,
                len: len as u32,
                axis: 0,
                split: 0.0,
                left: -1,
                right: -1,
            });
            return nodes.len() as i32 - 1;
        }
        // Widest-spread axis.
        let slice = &order[start..start + len];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice {
            let p = pts[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut axis = 0;
        for a in 1..3 {
            if hi[a] - lo[a] > hi[axis] - lo[axis] {
                axis = a;
            }
        }
        let mid = len / 2;
        order[start..start + len].select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][axis].total_cmp(&pts[b as usize][axis]).then(a.cmp(&b))
        });
        let split = pts[order[start + mid] as usize][axis];
        let me = nodes.len();
        nodes.push(KdNode {
            start: start as u32,
            len: len as u32,
            axis: axis as u8,
            split,
            left: -1,
            right: -1,
        });
        let left = Self::build_node(pts, order, start, mid, nodes);
        let right = Self::build_node(pts, order, start + mid, len - mid, nodes);
        nodes[me].left = left;
        nodes[me].right = right;
        me as i32
    }

    /// k nearest neighbors of `query`: (index, distance) ascending,
    /// ties by lower index. Matches [`OrientedPointCloud::knn_brute`].
    pub fn knn(&self, query: Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.pts.is_empty() {
            return Vec::new();
        }
        let k = k.min(self.pts.len());
        // Max-heap of current candidates; worst (largest d2, then largest
        // index) sits on top so ties resolve exactly like the sorted scan.
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> =
            heap.into_iter().map(|c| (c.idx as usize, c.d2.sqrt())).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn search(&self, node: i32, query: Vec3, k: usize, heap: &mut BinaryHeap<Cand>) {
        if node < 0 {
            return;
        }
        let nd = &self.nodes[node as usize];
        if nd.left < 0 {
            for &i in &self.order[nd.start as usize..(nd.start + nd.len) as usize] {
                let d2 = dist2(self.pts[i as usize], query);
                let c = Cand { d2, idx: i };
                if heap.len() < k {
                    heap.push(c);
                } else if c < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(c);
                }
            }
            return;
        }
        let axis = nd.axis as usize;
        let delta = query[axis] - nd.split;
        let (near, far) = if delta < 0.0 { (nd.left, nd.right) } else { (nd.right, nd.left) };
        self.search(near, query, k, heap);
        // Visit the far side unless it is strictly farther than the current
        // worst candidate (equal distance could still win on index).
        let d2 = delta * delta;
        if heap.len() < k || d2 <= heap.peek().unwrap().d2 {
            self.search(far, query, k, heap);
        }
    }
}

#[derive(PartialEq)]
struct Cand {
    d2: f64,
    idx: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
