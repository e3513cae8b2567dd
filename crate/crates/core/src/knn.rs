//! A static 3-d kd-tree for k-nearest-neighbor queries.

use alloc::vec::Vec;

use crate::linalg::dist2;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Point indices in tree order; node `[lo, hi)` splits at its midpoint.
    order: Vec<usize>,
    axes: Vec<u8>,
}

const LEAF: usize = 8;

impl KdTree {
    pub fn build(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = alloc::vec![0u8; points.len()];
        split(points, &mut order, &mut axes);
        Self { points: points.to_vec(), order, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest neighbors of point `index`, excluding itself, as
    /// `(index, squared distance)` sorted by distance then index.
    pub fn nearest_excluding(&self, index: usize, k: usize) -> Vec<(usize, f64)> {
        let mut best = Best { k, items: Vec::with_capacity(k + 1) };
        self.search(&self.points[index], Some(index), 0, self.order.len(), &mut best);
        best.items
    }

    /// The `k` nearest points to `query`.
    pub fn nearest(&self, query: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        let mut best = Best { k, items: Vec::with_capacity(k + 1) };
        self.search(query, None, 0, self.order.len(), &mut best);
        best.items
    }

    fn search(&self, q: &[f64; 3], skip: Option<usize>, lo: usize, hi: usize, best: &mut Best) {
        if hi - lo <= LEAF {
            for &idx in &self.order[lo..hi] {
                if Some(idx) != skip {
                    best.offer(idx, dist2(q, &self.points[idx]));
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid];
        let axis = self.axes[mid] as usize;
        if Some(pivot) != skip {
            best.offer(pivot, dist2(q, &self.points[pivot]));
        }
        let delta = q[axis] - self.points[pivot][axis];
        let (near, far) = if delta < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, skip, near.0, near.1, best);
        if delta * delta <= best.bound() {
            self.search(q, skip, far.0, far.1, best);
        }
    }
}

fn split(points: &[[f64; 3]], order: &mut [usize], axes: &mut [u8]) {
    if order.len() <= LEAF {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(points[i][d]);
            hi[d] = hi[d].max(points[i][d]);
        }
    }
    let axis = (0..3).max_by(|a, b| (hi[*a] - lo[*a]).total_cmp(&(hi[*b] - lo[*b]))).unwrap_or(0);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |a, b| points[*a][axis].total_cmp(&points[*b][axis]).then(a.cmp(b)));
    axes[mid] = axis as u8;
    let (left, right) = order.split_at_mut(mid);
    let (left_axes, right_axes) = axes.split_at_mut(mid);
    split(points, left, left_axes);
    split(points, &mut right[1..], &mut right_axes[1..]);
}

struct Best {
    k: usize,
    items: Vec<(usize, f64)>,
}

impl Best {
    fn bound(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].1
        }
    }

    fn offer(&mut self, idx: usize, d: f64) {
        if self.k == 0 {
            return;
        }
        let key = |a: &(usize, f64)| (a.1, a.0);
        if self.items.len() == self.k {
            let worst = self.items[self.k - 1];
            if (d, idx) >= key(&worst) {
                return;
            }
        }
        let pos = self.items.partition_point(|e| key(e) < (d, idx));
        self.items.insert(pos, (idx, d));
        self.items.truncate(self.k);
    }
}
