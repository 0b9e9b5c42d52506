//! Exact k-nearest-neighbour search: a KD-tree and the quadratic reference
//! implementation it must agree with.

use crate::error::{Error, Result};

/// Squared Euclidean distance.
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Exact k-nearest neighbours by exhaustive scan, sorted by ascending
/// squared distance with ties broken towards the lower point index.
pub fn brute_force_knn(points: &[[f64; 3]], query: [f64; 3], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter(format!(
            "k = {k} out of range for {} points",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        dist2(points[a], query)
            .partial_cmp(&dist2(points[b], query))
            .expect("finite distances")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static KD-tree over a 3-D point cloud giving exact k-nearest-neighbour
/// queries with the same tie rule as [`brute_force_knn`]: equal distances
/// resolve to the lower point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl KdTree {
    /// Builds a balanced tree by recursive median splits along the axis of
    /// largest extent.
    pub fn build(points: &[[f64; 3]]) -> Result<KdTree> {
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::Numerical(format!("non-finite coordinate in point {i}")));
            }
        }
        let mut tree =
            KdTree { points: points.to_vec(), nodes: Vec::with_capacity(points.len()), root: None };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.split(&mut idx);
        Ok(tree)
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when no points are indexed.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn split(&mut self, idx: &mut [usize]) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = self.widest_axis(idx);
        // Sort by (coordinate, index) so the construction is deterministic
        // even with duplicate coordinates.
        idx.sort_by(|&a, &b| {
            self.points[a][axis]
                .partial_cmp(&self.points[b][axis])
                .expect("finite coordinates")
                .then(a.cmp(&b))
        });
        let mid = idx.len() / 2;
        let point = idx[mid];
        let slot = self.nodes.len();
        self.nodes.push(Node { point, axis, left: None, right: None });
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.split(lo);
        let right = self.split(hi);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    fn widest_axis(&self, idx: &[usize]) -> usize {
        let mut best = 0;
        let mut best_extent = f64::NEG_INFINITY;
        for axis in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in idx {
                lo = lo.min(self.points[i][axis]);
                hi = hi.max(self.points[i][axis]);
            }
            if hi - lo > best_extent {
                best_extent = hi - lo;
                best = axis;
            }
        }
        best
    }

    /// Exact k-nearest neighbours of `query`, sorted by ascending squared
    /// distance, ties towards the lower index.
    pub fn nearest(&self, query: [f64; 3], k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::Parameter(format!(
                "k = {k} out of range for {} points",
                self.points.len()
            )));
        }
        // Max-heap of (squared distance bits, index). For non-negative
        // finite doubles the bit pattern orders identically to the value,
        // and the index component makes a lower index beat an equal
        // distance at a higher index.
        let mut heap: std::collections::BinaryHeap<(u64, usize)> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<(u64, usize)> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|(_, i)| i).collect())
    }

    fn search(
        &self,
        node: Option<usize>,
        query: [f64; 3],
        k: usize,
        heap: &mut std::collections::BinaryHeap<(u64, usize)>,
    ) {
        let Some(n) = node else { return };
        let Node { point, axis, left, right } = self.nodes[n];
        let d2 = dist2(self.points[point], query);
        let cand = (d2.to_bits(), point);
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("non-empty heap") {
            heap.pop();
            heap.push(cand);
        }
        let delta = query[axis] - self.points[point][axis];
        let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
        self.search(near, query, k, heap);
        // The far side can still hold a winner when the heap is short, when
        // the plane is closer than the current worst, or at exact equality
        // where a lower index would win the tie.
        let plane_d2 = (delta * delta).to_bits();
        if heap.len() < k || plane_d2 <= heap.peek().expect("non-empty heap").0 {
            self.search(far, query, k, heap);
        }
    }
}
