//! Exact k-nearest-neighbour search over points on the sphere.
//!
//! Points are stored as unit vectors in a kd-tree. Chord length is monotone
//! in great-circle distance, so the tree prunes on chord length and the final
//! ordering is recomputed with haversine and a caller-supplied tie-break key.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geo::{haversine_unchecked, GeoPosition};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct SpatialIndex<K> {
    points: Vec<[f64; 3]>,
    positions: Vec<GeoPosition>,
    keys: Vec<K>,
    /// Permutation of point ids laid out as an implicit tree.
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    id: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

impl<K: Ord + Copy> SpatialIndex<K> {
    pub fn new(items: impl IntoIterator<Item = (K, GeoPosition)>) -> Self {
        let (keys, positions): (Vec<K>, Vec<GeoPosition>) = items.into_iter().unzip();
        let points: Vec<[f64; 3]> = positions.iter().map(|p| p.to_unit_vector()).collect();
        let mut index = SpatialIndex {
            order: (0..points.len() as u32).collect(),
            points,
            positions,
            keys,
            nodes: Vec::new(),
        };
        if !index.points.is_empty() {
            let n = index.order.len();
            index.build(0, n);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn key(&self, id: usize) -> K {
        self.keys[id]
    }

    pub fn position(&self, id: usize) -> GeoPosition {
        self.positions[id]
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let node_id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start: start as u32, end: end as u32 });
            return node_id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &id in &self.order[start..end] {
            let p = self.points[id as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(Node::Split { axis: axis as u8, value, left: 0, right: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[node_id as usize] = Node::Split { axis: axis as u8, value, left, right };
        node_id
    }

    /// The `k` points closest to `center` ordered by (great-circle distance,
    /// key), skipping any for which `skip` returns true.
    pub fn nearest(&self, center: GeoPosition, k: usize, skip: impl Fn(usize) -> bool) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let q = center.to_unit_vector();
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn(0, &q, k, &skip, &mut heap);
        let Some(worst) = heap.peek().map(|c| c.dist2) else {
            return Vec::new();
        };
        // Re-collect everything at (or within rounding of) the k-th chord so
        // ties and chord/haversine rounding differences resolve exactly.
        let radius2 = worst * (1.0 + 1e-9) + 1e-24;
        let mut within = Vec::new();
        self.range(0, &q, radius2, &skip, &mut within);
        let mut scored: Vec<(f64, K, usize)> = within
            .into_iter()
            .map(|id| (haversine_unchecked(center, self.positions[id]), self.keys[id], id))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        scored.into_iter().map(|(_, _, id)| id).collect()
    }

    fn knn(&self, node: u32, q: &[f64; 3], k: usize, skip: &impl Fn(usize) -> bool, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start as usize..end as usize] {
                    if skip(id as usize) {
                        continue;
                    }
                    let c = Candidate { dist2: dist2(q, &self.points[id as usize]), id };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn(near, q, k, skip, heap);
                let bound = heap.peek().map_or(f64::INFINITY, |c| c.dist2);
                if heap.len() < k || diff * diff <= bound * (1.0 + 1e-9) {
                    self.knn(far, q, k, skip, heap);
                }
            }
        }
    }

    fn range(&self, node: u32, q: &[f64; 3], radius2: f64, skip: &impl Fn(usize) -> bool, out: &mut Vec<usize>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start as usize..end as usize] {
                    if !skip(id as usize) && dist2(q, &self.points[id as usize]) <= radius2 {
                        out.push(id as usize);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                if diff <= 0.0 || diff * diff <= radius2 {
                    self.range(left, q, radius2, skip, out);
                }
                if diff >= 0.0 || diff * diff <= radius2 {
                    self.range(right, q, radius2, skip, out);
                }
            }
        }
    }
}
