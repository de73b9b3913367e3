//! Exact k-nearest-neighbour search with a kd-tree.
//!
//! Results are ordered by `(squared distance, index)` so that equal
//! distances resolve to the lowest index, exactly as a linear scan would.
//! Squared distances are accumulated in coordinate order, which makes them
//! bit-identical to the brute-force computation.

use crate::points::{dist_sq, PointSet};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

/// A neighbour: squared distance and index into the indexed set.
pub type Neighbor = (f64, usize);

#[inline]
fn better(a: Neighbor, b: Neighbor) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl KdTree {
    pub fn new(points: &PointSet) -> Self {
        let dim = points.dim();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            build(points, &mut order, 0, &mut nodes);
        }
        let mut coords = Vec::with_capacity(points.as_flat().len());
        for &i in &order {
            coords.extend_from_slice(points.point(i));
        }
        KdTree {
            dim,
            coords,
            ids: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Nearest point, or `None` for an empty tree.
    pub fn nearest(&self, q: &[f64]) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = [(f64::INFINITY, usize::MAX)];
        self.search_fixed(0, q, &mut best);
        Some(best[0])
    }

    /// The two nearest points in order; needs at least two points.
    pub fn nearest_two(&self, q: &[f64]) -> Option<[Neighbor; 2]> {
        if self.len() < 2 {
            return None;
        }
        let mut best = [(f64::INFINITY, usize::MAX); 2];
        self.search_fixed(0, q, &mut best);
        Some(best)
    }

    /// The `k` nearest points in order, written into `out`.
    pub fn k_nearest(&self, q: &[f64], k: usize, out: &mut Vec<Neighbor>) {
        out.clear();
        let k = k.min(self.len());
        if k == 0 {
            return;
        }
        out.resize(k, (f64::INFINITY, usize::MAX));
        let mut found = 0;
        self.search(0, q, out, &mut found);
    }

    /// Search for small fixed `K`. Unfilled slots hold `(inf, MAX)`, which
    /// every real point beats, so no fill counter is needed.
    fn search_fixed<const K: usize>(&self, node: usize, q: &[f64], best: &mut [Neighbor; K]) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let p = &self.coords[slot * self.dim..(slot + 1) * self.dim];
                    let cand = (dist_sq(q, p), self.ids[slot]);
                    if better(cand, best[K - 1]) {
                        let mut pos = K - 1;
                        while pos > 0 && better(cand, best[pos - 1]) {
                            best[pos] = best[pos - 1];
                            pos -= 1;
                        }
                        best[pos] = cand;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search_fixed(near, q, best);
                if diff * diff <= best[K - 1].0 {
                    self.search_fixed(far, q, best);
                }
            }
        }
    }

    fn search(&self, node: usize, q: &[f64], best: &mut [Neighbor], found: &mut usize) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let p = &self.coords[slot * self.dim..(slot + 1) * self.dim];
                    let cand = (dist_sq(q, p), self.ids[slot]);
                    let k = best.len();
                    if *found < k || better(cand, best[k - 1]) {
                        // Insertion into the short sorted list.
                        let mut pos = (*found).min(k - 1);
                        while pos > 0 && better(cand, best[pos - 1]) {
                            best[pos] = best[pos - 1];
                            pos -= 1;
                        }
                        best[pos] = cand;
                        *found = (*found + 1).min(k);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best, found);
                // Ties must still be visited for the index rule, hence <=.
                if *found < best.len() || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, best, found);
                }
            }
        }
    }
}

fn build(points: &PointSet, order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let dim = points.dim();
    let mut axis = 0;
    let mut widest = -1.0;
    for a in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in order.iter() {
            let v = points.point(i)[a];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    if widest <= 0.0 {
        // All points coincide; splitting cannot separate them.
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points.point(a)[axis]
            .total_cmp(&points.point(b)[axis])
            .then(a.cmp(&b))
    });
    let value = points.point(order[mid])[axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build(points, lo, offset, nodes);
    let right = build(points, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Linear-scan reference for the `k` nearest points.
pub fn brute_force_k_nearest(points: &PointSet, q: &[f64], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist_sq(q, p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}
