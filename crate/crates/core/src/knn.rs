//! Static k-d tree under the max-norm, used by the kNN mutual information
//! estimator: k-th neighbour distances and strict ball counts.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF: usize = 32;

struct Node {
    lo: usize,
    hi: usize,
    /// Child node indices; `usize::MAX` for leaves.
    left: usize,
    right: usize,
}

pub(crate) struct KdTree {
    dim: usize,
    /// Row-major coordinates in tree order; node `[lo, hi)` ranges index these slots.
    pts: Vec<f64>,
    /// Original row of each slot.
    order: Vec<usize>,
    /// Slot of each original row.
    slot: Vec<usize>,
    nodes: Vec<Node>,
    /// Per node: `dim` minima then `dim` maxima.
    bounds: Vec<f64>,
}

#[derive(PartialEq)]
struct Cand(f64, bool, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

/// Bounded max-heap of the smallest distances offered so far.
struct DistHeap {
    cap: usize,
    v: Vec<f64>,
}

impl DistHeap {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            v: Vec::with_capacity(cap),
        }
    }

    fn full(&self) -> bool {
        self.v.len() == self.cap
    }

    fn top(&self) -> f64 {
        self.v.first().copied().unwrap_or(0.0)
    }

    fn offer(&mut self, d: f64) {
        if self.v.len() < self.cap {
            self.v.push(d);
            let mut c = self.v.len() - 1;
            while c > 0 {
                let p = (c - 1) / 2;
                if self.v[p] >= self.v[c] {
                    break;
                }
                self.v.swap(p, c);
                c = p;
            }
        } else if d < self.v[0] {
            self.v[0] = d;
            let n = self.v.len();
            let mut p = 0;
            loop {
                let (l, r) = (2 * p + 1, 2 * p + 2);
                let mut m = p;
                if l < n && self.v[l] > self.v[m] {
                    m = l;
                }
                if r < n && self.v[r] > self.v[m] {
                    m = r;
                }
                if m == p {
                    break;
                }
                self.v.swap(p, m);
                p = m;
            }
        }
    }
}

impl KdTree {
    /// Builds over rows of the given columns (all of equal length).
    pub(crate) fn new(columns: &[&[f64]]) -> Self {
        let dim = columns.len();
        assert!(dim > 0, "k-d tree needs at least one dimension");
        let n = columns[0].len();
        let mut pts = Vec::with_capacity(n * dim);
        for i in 0..n {
            pts.extend(columns.iter().map(|c| c[i]));
        }
        let mut tree = Self {
            dim,
            pts,
            order: (0..n).collect(),
            slot: Vec::new(),
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        let mut sorted = Vec::with_capacity(n * dim);
        let mut slot = vec![0; n];
        for (s, &r) in tree.order.iter().enumerate() {
            sorted.extend_from_slice(&tree.pts[r * dim..(r + 1) * dim]);
            slot[r] = s;
        }
        tree.pts = sorted;
        tree.slot = slot;
        tree
    }

    /// Coordinates of the point in slot `s`.
    fn point(&self, s: usize) -> &[f64] {
        &self.pts[s * self.dim..(s + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            left: usize::MAX,
            right: usize::MAX,
        });
        let dim = self.dim;
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for &r in &self.order[lo..hi] {
            for d in 0..dim {
                let v = self.pts[r * dim + d];
                mins[d] = mins[d].min(v);
                maxs[d] = maxs[d].max(v);
            }
        }
        self.bounds.extend_from_slice(&mins);
        self.bounds.extend_from_slice(&maxs);
        if hi - lo <= LEAF {
            return id;
        }
        let split = (0..dim)
            .max_by(|&a, &b| (maxs[a] - mins[a]).total_cmp(&(maxs[b] - mins[b])))
            .expect("dim > 0");
        let mid = lo + (hi - lo) / 2;
        let pts = &self.pts;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a * dim + split]
                .total_cmp(&pts[b * dim + split])
                .then(a.cmp(&b))
        });
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    fn node_bounds(&self, id: usize) -> (&[f64], &[f64]) {
        let b = &self.bounds[id * 2 * self.dim..(id + 1) * 2 * self.dim];
        b.split_at(self.dim)
    }

    /// Smallest possible distance from `q` to a point in the node.
    fn min_dist(&self, id: usize, q: &[f64]) -> f64 {
        let (mins, maxs) = self.node_bounds(id);
        let mut d: f64 = 0.0;
        for k in 0..self.dim {
            d = d.max(mins[k] - q[k]).max(q[k] - maxs[k]);
        }
        d
    }

    /// Smallest and largest possible distance from `q` to a point in the node.
    fn dist_range(&self, id: usize, q: &[f64]) -> (f64, f64) {
        let (mins, maxs) = self.node_bounds(id);
        let (mut near, mut far): (f64, f64) = (0.0, 0.0);
        for k in 0..self.dim {
            near = near.max(mins[k] - q[k]).max(q[k] - maxs[k]);
            far = far.max(q[k] - mins[k]).max(maxs[k] - q[k]);
        }
        (near, far)
    }

    fn dist(&self, s: usize, q: &[f64]) -> f64 {
        let p = self.point(s);
        let mut d: f64 = 0.0;
        for k in 0..self.dim {
            d = d.max((p[k] - q[k]).abs());
        }
        d
    }

    /// The `m` nearest rows to row `i` (itself included), ordered by distance,
    /// then self first, then row index.
    pub(crate) fn nearest(&self, i: usize, m: usize) -> Vec<(f64, usize)> {
        let q: Vec<f64> = self.point(self.slot[i]).to_vec();
        let mut heap = BinaryHeap::with_capacity(m + 1);
        if m > 0 && !self.nodes.is_empty() {
            self.knn_rec(0, &q, i, m, &mut heap);
        }
        let mut v: Vec<Cand> = heap.into_vec();
        v.sort();
        v.into_iter().map(|c| (c.0, c.2)).collect()
    }

    fn knn_rec(&self, id: usize, q: &[f64], i: usize, m: usize, heap: &mut BinaryHeap<Cand>) {
        if heap.len() == m && self.min_dist(id, q) > heap.peek().expect("full").0 {
            return;
        }
        let node = &self.nodes[id];
        if node.left == usize::MAX {
            for s in node.lo..node.hi {
                let r = self.order[s];
                let c = Cand(self.dist(s, q), r != i, r);
                if heap.len() < m {
                    heap.push(c);
                } else if c < *heap.peek().expect("full") {
                    heap.pop();
                    heap.push(c);
                }
            }
            return;
        }
        let (a, b) = (node.left, node.right);
        let (first, second) = if self.min_dist(a, q) <= self.min_dist(b, q) { (a, b) } else { (b, a) };
        self.knn_rec(first, q, i, m, heap);
        self.knn_rec(second, q, i, m, heap);
    }

    /// Distance from row `i` to its `k`-th nearest other row.
    pub(crate) fn kth_distance(&self, i: usize, k: usize) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let q: Vec<f64> = self.point(self.slot[i]).to_vec();
        // max-heap of the k + 1 smallest distances (self included)
        let mut best = DistHeap::new(k + 1);
        self.kth_rec(0, &q, &mut best);
        best.top()
    }

    fn kth_rec(&self, id: usize, q: &[f64], best: &mut DistHeap) {
        let node = &self.nodes[id];
        if node.left == usize::MAX {
            for s in node.lo..node.hi {
                best.offer(self.dist(s, q));
            }
            return;
        }
        let (a, b) = (node.left, node.right);
        let (da, db) = (self.min_dist(a, q), self.min_dist(b, q));
        let ((first, d1), (second, d2)) = if da <= db { ((a, da), (b, db)) } else { ((b, db), (a, da)) };
        if !best.full() || d1 < best.top() {
            self.kth_rec(first, q, best);
        }
        if !best.full() || d2 < best.top() {
            self.kth_rec(second, q, best);
        }
    }

    /// Rows (row `i` included) strictly closer than `eps` to row `i`.
    pub(crate) fn count_within(&self, i: usize, eps: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let q: Vec<f64> = self.point(self.slot[i]).to_vec();
        self.count_rec(0, &q, eps)
    }

    fn count_rec(&self, id: usize, q: &[f64], eps: f64) -> usize {
        let (near, far) = self.dist_range(id, q);
        if near >= eps {
            return 0;
        }
        let node = &self.nodes[id];
        if far < eps {
            return node.hi - node.lo;
        }
        if node.left == usize::MAX {
            return (node.lo..node.hi).filter(|&s| self.dist(s, q) < eps).count();
        }
        self.count_rec(node.left, q, eps) + self.count_rec(node.right, q, eps)
    }
}
