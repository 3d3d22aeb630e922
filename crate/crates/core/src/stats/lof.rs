//! Local Outlier Factor with exact k-nearest-neighbour sets: ties in
//! distance are broken by point index, so the kd-tree search and the
//! brute-force reference select identical neighbourhoods.

use super::StatsError;
use crate::Scalar;

/// Floor for the mean reachability distance, keeping densities finite for
/// duplicate-heavy neighbourhoods.
pub const LRD_EPSILON: f64 = 1e-12;

const LEAF_SIZE: usize = 16;

fn flatten<T: Scalar>(points: &[Vec<T>], k: usize) -> Result<(Vec<T>, usize), StatsError> {
    let n = points.len();
    if k == 0 || n <= k {
        return Err(StatsError::BadNeighbourCount { n, k });
    }
    let dim = points[0].len();
    let mut flat = Vec::with_capacity(n * dim);
    for (row, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(StatsError::RaggedPoints { row, got: p.len(), expected: dim });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(row));
        }
        flat.extend_from_slice(p);
    }
    Ok((flat, dim))
}

#[inline]
fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| {
        let d = x - y;
        s + d * d
    })
}

#[inline]
fn before<T: Scalar>(a: (T, usize), b: (T, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// The k best candidates in (distance², index) order.
struct Best<T> {
    k: usize,
    items: Vec<(T, usize)>,
}

impl<T: Scalar> Best<T> {
    fn new(k: usize) -> Self {
        Best { k, items: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> Option<(T, usize)> {
        (self.items.len() == self.k).then(|| self.items[self.k - 1])
    }

    fn offer(&mut self, c: (T, usize)) {
        if let Some(w) = self.worst() {
            if !before(c, w) {
                return;
            }
        }
        let pos = self.items.iter().position(|&e| before(c, e)).unwrap_or(self.items.len());
        self.items.insert(pos, c);
        self.items.truncate(self.k);
    }
}

enum Node<T> {
    /// `flat`: every point coincides and `perm[start..end]` is index-sorted.
    Leaf {
        start: usize,
        end: usize,
        min_idx: usize,
        flat: bool,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
        min_idx: usize,
    },
}

struct KdTree<'a, T> {
    data: &'a [T],
    dim: usize,
    perm: Vec<usize>,
    nodes: Vec<Node<T>>,
}

/// Moves the elements satisfying `pred` to the front; returns their count.
fn partition(items: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut next = 0;
    for j in 0..items.len() {
        if pred(items[j]) {
            items.swap(next, j);
            next += 1;
        }
    }
    next
}

impl<'a, T: Scalar> KdTree<'a, T> {
    fn build(data: &'a [T], dim: usize) -> Self {
        let n = data.len() / dim;
        let mut tree = KdTree { data, dim, perm: (0..n).collect(), nodes: Vec::new() };
        tree.build_node(0, n);
        tree
    }

    fn coord(&self, i: usize, axis: usize) -> T {
        self.data[i * self.dim + axis]
    }

    fn point(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn min_idx(&self, node: usize) -> usize {
        match self.nodes[node] {
            Node::Leaf { min_idx, .. } | Node::Split { min_idx, .. } => min_idx,
        }
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        let leaf_min = self.perm[start..end].iter().copied().min().unwrap_or(usize::MAX);
        self.nodes.push(Node::Leaf { start, end, min_idx: leaf_min, flat: false });
        if end - start <= LEAF_SIZE {
            return slot;
        }
        let mut best_axis = 0;
        let mut best_spread = T::zero();
        for axis in 0..self.dim {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &i in &self.perm[start..end] {
                let c = self.coord(i, axis);
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= T::zero() {
            self.perm[start..end].sort_unstable();
            self.nodes[slot] = Node::Leaf { start, end, min_idx: leaf_min, flat: true };
            return slot;
        }
        let (data, dim) = (self.data, self.dim);
        let at = |i: usize| data[i * dim + best_axis];
        self.perm[start..end]
            .select_nth_unstable_by((end - start) / 2, |&a, &b| at(a).partial_cmp(&at(b)).expect("finite coordinates"));
        let value = at(self.perm[start + (end - start) / 2]);
        // copies of the pivot stay on one side so coincident points are never split
        let mut below = partition(&mut self.perm[start..end], |i| at(i) < value);
        if below == 0 {
            below = partition(&mut self.perm[start..end], |i| at(i) <= value);
        }
        let mid = start + below;
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot] = Node::Split { axis: best_axis, value, left, right, min_idx: leaf_min };
        slot
    }

    fn search(&self, node: usize, query: usize, best: &mut Best<T>, off: &mut [T]) {
        match self.nodes[node] {
            Node::Leaf { start, end, flat: false, .. } => {
                let q = self.point(query);
                for &i in &self.perm[start..end] {
                    if i != query {
                        best.offer((dist2(q, self.point(i)), i));
                    }
                }
            }
            Node::Leaf { start, end, flat: true, .. } => {
                // one distance for all, so candidates only get worse
                let d = dist2(self.point(query), self.point(self.perm[start]));
                for &i in &self.perm[start..end] {
                    if i == query {
                        continue;
                    }
                    if best.worst().is_some_and(|w| !before((d, i), w)) {
                        break;
                    }
                    best.offer((d, i));
                }
            }
            Node::Split { axis, value, left, right, .. } => {
                let diff = self.coord(query, axis) - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, query, best, off);
                // lower bound to the far cell, summed like `dist2` so it never exceeds it
                let saved = off[axis];
                off[axis] = diff;
                let bound = off.iter().fold(T::zero(), |s, &d| s + d * d);
                let prune = match best.worst() {
                    Some((wd, wi)) => bound > wd || (bound == wd && self.min_idx(far) > wi),
                    None => false,
                };
                if !prune {
                    self.search(far, query, best, off);
                }
                off[axis] = saved;
            }
        }
    }
}

fn scores_from_neighbours<T: Scalar>(nbrs: &[Vec<(T, usize)>], k: usize) -> Vec<T> {
    let kf = T::from_count(k);
    let kdist: Vec<T> = nbrs.iter().map(|nb| nb[k - 1].0.sqrt()).collect();
    let lrd: Vec<T> = nbrs
        .iter()
        .map(|nb| {
            let reach = nb.iter().fold(T::zero(), |s, &(d2, o)| s + kdist[o].max(d2.sqrt()));
            T::one() / (reach / kf).max(T::lit(LRD_EPSILON))
        })
        .collect();
    nbrs.iter()
        .enumerate()
        .map(|(i, nb)| {
            let mean = nb.iter().fold(T::zero(), |s, &(_, o)| s + lrd[o]) / kf;
            mean / lrd[i]
        })
        .collect()
}

/// LOF score of every point; about 1 for inliers.
pub fn lof_scores<T: Scalar>(points: &[Vec<T>], k: usize) -> Result<Vec<T>, StatsError> {
    let (flat, dim) = flatten(points, k)?;
    let tree = KdTree::build(&flat, dim);
    let nbrs: Vec<Vec<(T, usize)>> = (0..points.len())
        .map(|i| {
            let mut best = Best::new(k);
            tree.search(0, i, &mut best, &mut vec![T::zero(); dim]);
            best.items
        })
        .collect();
    Ok(scores_from_neighbours(&nbrs, k))
}

/// O(n²) reference implementation.
pub fn lof_scores_brute_force<T: Scalar>(points: &[Vec<T>], k: usize) -> Result<Vec<T>, StatsError> {
    let (flat, dim) = flatten(points, k)?;
    let n = points.len();
    let nbrs: Vec<Vec<(T, usize)>> = (0..n)
        .map(|i| {
            let q = &flat[i * dim..(i + 1) * dim];
            let mut all: Vec<(T, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (dist2(q, &flat[j * dim..(j + 1) * dim]), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
            all.truncate(k);
            all
        })
        .collect();
    Ok(scores_from_neighbours(&nbrs, k))
}

/// Per-column zero mean and unit (population) variance; constant columns
/// become zero.
pub fn standardize<T: Scalar>(points: &[Vec<T>]) -> Vec<Vec<T>> {
    let Some(first) = points.first() else { return Vec::new() };
    let n = T::from_count(points.len());
    let dim = first.len();
    let mut mean = vec![T::zero(); dim];
    for p in points {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut sd = vec![T::zero(); dim];
    for p in points {
        for ((s, &v), &m) in sd.iter_mut().zip(p).zip(&mean) {
            *s = *s + (v - m) * (v - m);
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((&v, &m), &s)| if s > T::zero() { (v - m) / s } else { T::zero() })
                .collect()
        })
        .collect()
}

/// Indices kept and dropped by [`remove_outliers`], both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutlierSplit {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

impl OutlierSplit {
    pub fn apply<D: Clone>(&self, rows: &[D]) -> Vec<D> {
        self.kept.iter().map(|&i| rows[i].clone()).collect()
    }
}

/// Drops the ⌈fraction·n⌉ points with the highest LOF score.
pub fn remove_outliers<T: Scalar>(points: &[Vec<T>], fraction: f64, k: usize) -> Result<OutlierSplit, StatsError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(StatsError::BadFraction(fraction));
    }
    let n = points.len();
    let m = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if m == 0 {
        return Ok(OutlierSplit { kept: (0..n).collect(), removed: Vec::new() });
    }
    let scores = lof_scores(points, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b)));
    let mut removed: Vec<usize> = order[..m].to_vec();
    removed.sort_unstable();
    let mut drop = vec![false; n];
    removed.iter().for_each(|&i| drop[i] = true);
    Ok(OutlierSplit { kept: (0..n).filter(|&i| !drop[i]).collect(), removed })
}
