use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Aabb, Vec3};
use crate::error::{HapError, Result};

const LEAF_SIZE: usize = 8;

/// Balanced k-d tree over a fixed point set.
///
/// Every query orders candidates by `(squared distance, index)`, so results
/// match a brute-force scan exactly, ties included.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
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

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        for &i in &self.order[start..end] {
            bounds.grow(&self.points[i]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let ext = bounds.extent();
            let axis = ext.imax();
            let mid = start + (end - start) / 2;
            let pts = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    /// `k` nearest indices, nearest first; ties go to the lower index.
    pub fn knn(&self, q: &Vec3, k: usize) -> Result<Vec<usize>> {
        Ok(self.knn_with_dist2(q, k)?.into_iter().map(|(i, _)| i).collect())
    }

    /// Like [`knn`](Self::knn) but also returns squared distances.
    pub fn knn_with_dist2(&self, q: &Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k > self.len() {
            return Err(HapError::invalid(format!(
                "k = {k} exceeds the {} indexed points",
                self.len()
            )));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| (c.idx, c.d2)).collect())
    }

    fn knn_rec(&self, node: usize, q: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let n = &self.nodes[node];
        if heap.len() == k {
            // Equal bound may still hold a lower-index tie, so only prune on `>`.
            if n.bounds.dist2(q) > heap.peek().map_or(f64::INFINITY, |c| c.d2) {
                return;
            }
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let c = Candidate {
                        d2: (self.points[i] - q).norm_squared(),
                        idx: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.nodes[l].bounds.dist2(q), self.nodes[r].bounds.dist2(q));
                if dl <= dr {
                    self.knn_rec(l, q, k, heap);
                    self.knn_rec(r, q, k, heap);
                } else {
                    self.knn_rec(r, q, k, heap);
                    self.knn_rec(l, q, k, heap);
                }
            }
        }
    }

    /// Nearest index and squared distance. Panics on an empty index.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        assert!(!self.is_empty(), "nearest() on an empty index");
        let mut best = Candidate {
            d2: f64::INFINITY,
            idx: usize::MAX,
        };
        self.nearest_rec(0, q, &mut best);
        (best.idx, best.d2)
    }

    fn nearest_rec(&self, node: usize, q: &Vec3, best: &mut Candidate) {
        let n = &self.nodes[node];
        if n.bounds.dist2(q) > best.d2 {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let c = Candidate {
                        d2: (self.points[i] - q).norm_squared(),
                        idx: i,
                    };
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.nodes[l].bounds.dist2(q), self.nodes[r].bounds.dist2(q));
                if dl <= dr {
                    self.nearest_rec(l, q, best);
                    self.nearest_rec(r, q, best);
                } else {
                    self.nearest_rec(r, q, best);
                    self.nearest_rec(l, q, best);
                }
            }
        }
    }

    /// Up to `k_max` indices within distance `r` (inclusive), nearest first.
    pub fn ball_query(&self, q: &Vec3, r: f64, k_max: usize) -> Vec<usize> {
        if self.is_empty() || k_max == 0 || r.is_nan() || r < 0.0 {
            return Vec::new();
        }
        let r2 = r * r;
        let mut found = Vec::new();
        self.ball_rec(0, q, r2, &mut found);
        found.sort();
        found.truncate(k_max);
        found.into_iter().map(|c| c.idx).collect()
    }

    fn ball_rec(&self, node: usize, q: &Vec3, r2: f64, found: &mut Vec<Candidate>) {
        let n = &self.nodes[node];
        if n.bounds.dist2(q) > r2 {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 <= r2 {
                        found.push(Candidate { d2, idx: i });
                    }
                }
            }
            Some((l, r)) => {
                self.ball_rec(l, q, r2, found);
                self.ball_rec(r, q, r2, found);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> SpatialIndex {
        SpatialIndex::new(&(0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn knn_examples() {
        let idx = line(3);
        assert_eq!(idx.knn(&Vec3::new(0.9, 0.0, 0.0), 1).unwrap(), vec![1]);
        assert_eq!(idx.knn(&Vec3::new(0.5, 0.0, 0.0), 2).unwrap(), vec![0, 1]);
        let mut all = idx.knn(&Vec3::new(7.0, 1.0, 0.0), 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(idx.knn(&Vec3::zeros(), 4).is_err());
    }

    #[test]
    fn ball_query_examples() {
        let idx = line(10);
        assert_eq!(idx.ball_query(&Vec3::zeros(), 2.5, 30), vec![0, 1, 2]);
        assert_eq!(idx.ball_query(&Vec3::new(3.0, 0.0, 0.0), 1e-6, 1), vec![3]);
        assert!(idx.ball_query(&Vec3::new(0.5, 5.0, 0.0), 1.0, 30).is_empty());
    }

    #[test]
    fn ties_prefer_lower_index_across_leaves() {
        // Many duplicates of the same point spread over several leaves.
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 40];
        let idx = SpatialIndex::new(&pts);
        assert_eq!(idx.knn(&Vec3::zeros(), 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(idx.nearest(&Vec3::zeros()).0, 0);
        assert_eq!(idx.ball_query(&Vec3::zeros(), 10.0, 2), vec![0, 1]);
    }
}
