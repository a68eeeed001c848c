//! Static k-d tree over the first `len` points of a flat coordinate buffer.

use super::distance_unchecked;

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct KdTree {
    nodes: Vec<KdNode>,
    root: Option<usize>,
    len: usize,
}

/// Best candidate so far: smaller distance wins, then the earlier index.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Best {
    pub index: usize,
    pub distance: f64,
}

impl Best {
    pub fn offer(slot: &mut Option<Best>, index: usize, distance: f64) {
        let better = match slot {
            None => true,
            Some(b) => distance < b.distance || (distance == b.distance && index < b.index),
        };
        if better {
            *slot = Some(Best { index, distance });
        }
    }
}

impl KdTree {
    /// Number of points covered by the tree.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Builds the tree over points `0..len`; `coords` is row-major with
    /// `dim` entries per point.
    pub fn build(coords: &[f64], dim: usize, len: usize, weights: &[f64]) -> Self {
        let mut tree = KdTree {
            nodes: Vec::with_capacity(len),
            root: None,
            len,
        };
        let mut ids: Vec<usize> = (0..len).collect();
        tree.root = tree.build_rec(coords, dim, weights, &mut ids);
        tree
    }

    fn build_rec(&mut self, coords: &[f64], dim: usize, weights: &[f64], ids: &mut [usize]) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        // Split on the axis with the widest weighted spread.
        let mut axis = 0;
        let mut widest = -1.0;
        for k in 0..dim {
            let (lo, hi) = ids.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = coords[i * dim + k];
                (lo.min(v), hi.max(v))
            });
            let spread = (hi - lo) * weights[k].sqrt();
            if spread > widest {
                widest = spread;
                axis = k;
            }
        }
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            coords[a * dim + axis].total_cmp(&coords[b * dim + axis]).then(a.cmp(&b))
        });
        let point = ids[mid];
        let slot = self.nodes.len();
        self.nodes.push(KdNode {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lower, rest) = ids.split_at_mut(mid);
        let left = self.build_rec(coords, dim, weights, lower);
        let right = self.build_rec(coords, dim, weights, &mut rest[1..]);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    pub fn nearest(&self, coords: &[f64], dim: usize, weights: &[f64], query: &[f64], best: &mut Option<Best>) {
        if let Some(root) = self.root {
            self.search(root, coords, dim, weights, query, best);
        }
    }

    fn search(&self, node: usize, coords: &[f64], dim: usize, weights: &[f64], query: &[f64], best: &mut Option<Best>) {
        let n = &self.nodes[node];
        let p = &coords[n.point * dim..(n.point + 1) * dim];
        Best::offer(best, n.point, distance_unchecked(query, p, weights));

        let diff = query[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if let Some(c) = near {
            self.search(c, coords, dim, weights, query, best);
        }
        if let Some(c) = far {
            let plane = diff.abs() * weights[n.axis].sqrt();
            // Points at exactly the best distance must still be visited for
            // the index tie-break, so the test is slightly conservative.
            let bound = best.map_or(f64::INFINITY, |b| b.distance * (1.0 + 1e-12) + 1e-300);
            if plane <= bound {
                self.search(c, coords, dim, weights, query, best);
            }
        }
    }
}
