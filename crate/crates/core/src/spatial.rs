//! Static KD-tree for exact k-nearest-neighbor and radius queries in 3D.
//!
//! Results are ordered by `(squared distance, point index)`, so ties are
//! always resolved toward the lower index and queries are deterministic
//! regardless of tree shape.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geom::Vec3;

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("cannot build a KD-tree over an empty point set")]
    EmptyPointSet,
    #[error("k = {k} exceeds the point count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// One query hit: index into the point array the tree was built from, and
/// the Euclidean distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf,
    Split { left: u32, right: u32 },
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    start: u32,
    end: u32,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    // tree-ordered copy of the points, parallel to `order`
    sorted: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2.total_cmp(&o.d2).then(self.index.cmp(&o.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[inline]
fn box_distance_squared(q: Vec3, lo: Vec3, hi: Vec3) -> f64 {
    let mut d = 0.0;
    for a in 0..3 {
        let v = if q[a] < lo[a] {
            lo[a] - q[a]
        } else if q[a] > hi[a] {
            q[a] - hi[a]
        } else {
            0.0
        };
        d += v * v;
    }
    d
}

impl KdTree {
    /// Median-split construction on the axis of widest spread.
    pub fn build(points: Vec<Vec3>, leaf_size: usize) -> Result<KdTree, IndexError> {
        if points.is_empty() {
            return Err(IndexError::EmptyPointSet);
        }
        let leaf_size = leaf_size.max(1);
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / leaf_size + 1);
        Self::build_node(&points, &mut order, 0, leaf_size, &mut nodes);
        let sorted = order.iter().map(|&i| points[i as usize]).collect();
        Ok(KdTree { points, sorted, order, nodes, leaf_size })
    }

    fn build_node(
        points: &[Vec3],
        order: &mut [u32],
        offset: usize,
        leaf_size: usize,
        nodes: &mut Vec<Node>,
    ) -> u32 {
        let (mut lo, mut hi) = (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY));
        for &i in order.iter() {
            lo = lo.component_min(points[i as usize]);
            hi = hi.component_max(points[i as usize]);
        }
        let id = nodes.len() as u32;
        nodes.push(Node {
            lo,
            hi,
            start: offset as u32,
            end: (offset + order.len()) as u32,
            kind: NodeKind::Leaf,
        });
        let spread = hi - lo;
        if order.len() <= leaf_size || spread.max_abs() == 0.0 {
            return id;
        }
        let axis = if spread.x >= spread.y && spread.x >= spread.z {
            0
        } else if spread.y >= spread.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let (l, r) = order.split_at_mut(mid);
        let left = Self::build_node(points, l, offset, leaf_size, nodes);
        let right = Self::build_node(points, r, offset + mid, leaf_size, nodes);
        nodes[id as usize].kind = NodeKind::Split { left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Bounding box of all stored points.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        (self.nodes[0].lo, self.nodes[0].hi)
    }

    /// Number of node levels from root to the deepest leaf.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: u32) -> usize {
            match nodes[id as usize].kind {
                NodeKind::Leaf => 1,
                NodeKind::Split { left, right } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Exactly `k` nearest points, ascending by distance, ties to lower index.
    pub fn knn(&self, query: Vec3, k: usize) -> Result<Vec<Neighbor>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if k > self.points.len() {
            return Err(IndexError::KTooLarge { k, n: self.points.len() });
        }
        let mut out = Vec::with_capacity(k);
        self.knn_into(query, k, f64::INFINITY, &mut out);
        Ok(out)
    }

    /// Up to `k` nearest points with distance `<= max_radius`, written into
    /// `out` (cleared first). Allocation-free once `out` has capacity.
    pub fn knn_within(&self, query: Vec3, k: usize, max_radius: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        if k == 0 {
            return;
        }
        self.knn_into(query, k.min(self.points.len()), max_radius * max_radius, out);
    }

    fn knn_into(&self, query: Vec3, k: usize, max_d2: f64, out: &mut Vec<Neighbor>) {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, box_distance_squared(query, self.nodes[0].lo, self.nodes[0].hi)));
        while let Some((id, bd2)) = stack.pop() {
            let bound = if heap.len() == k { heap.peek().map_or(max_d2, |c| c.d2) } else { max_d2 };
            if bd2 > bound {
                continue;
            }
            let node = &self.nodes[id as usize];
            match node.kind {
                NodeKind::Leaf => {
                    for slot in node.start..node.end {
                        let d2 = query.distance_squared(self.sorted[slot as usize]);
                        if d2 > max_d2 {
                            continue;
                        }
                        let cand = Candidate { d2, index: self.order[slot as usize] };
                        if heap.len() < k {
                            heap.push(cand);
                        } else if cand < *heap.peek().expect("heap full") {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    let ln = &self.nodes[left as usize];
                    let rn = &self.nodes[right as usize];
                    let dl = box_distance_squared(query, ln.lo, ln.hi);
                    let dr = box_distance_squared(query, rn.lo, rn.hi);
                    // push the farther child first so the nearer one is explored first
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        let start = out.len();
        out.extend(
            heap.into_sorted_vec()
                .into_iter()
                .map(|c| Neighbor { index: c.index as usize, distance: c.d2.sqrt() }),
        );
        debug_assert!(out[start..].windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    /// Distance to the nearest stored point, if it lies within `radius`.
    pub fn nearest_within(&self, query: Vec3, radius: f64) -> Option<Neighbor> {
        let mut out = Vec::with_capacity(1);
        self.knn_within(query, 1, radius, &mut out);
        out.pop()
    }

    /// True when some stored point lies within `radius` of `query`.
    pub fn any_within(&self, query: Vec3, radius: f64) -> bool {
        let r2 = radius * radius;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if box_distance_squared(query, node.lo, node.hi) > r2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf => {
                    if self.sorted[node.start as usize..node.end as usize]
                        .iter()
                        .any(|p| query.distance_squared(*p) <= r2)
                    {
                        return true;
                    }
                }
                NodeKind::Split { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }

    /// All points with distance `<= radius`, ordered as in [`KdTree::knn`].
    pub fn radius_query(&self, query: Vec3, radius: f64) -> Vec<Neighbor> {
        if !(radius >= 0.0) {
            return Vec::new();
        }
        let r2 = radius * radius;
        let mut hits: Vec<Candidate> = Vec::new();
        let mut stack: Vec<u32> = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if box_distance_squared(query, node.lo, node.hi) > r2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf => {
                    for slot in node.start..node.end {
                        let d2 = query.distance_squared(self.sorted[slot as usize]);
                        if d2 <= r2 {
                            hits.push(Candidate { d2, index: self.order[slot as usize] });
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        hits.sort_unstable();
        hits.into_iter()
            .map(|c| Neighbor { index: c.index as usize, distance: c.d2.sqrt() })
            .collect()
    }
}
