//! Static k-d tree over one frame's points.
//!
//! Neighbours are ordered by `(squared distance, point index)`, so equal
//! distances resolve to the lower index, matching a linear scan exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::types::{dist2, Point3};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist2.sqrt()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

// max-heap on the (dist2, index) key
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.key_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    root: Option<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = if points.is_empty() {
            None
        } else {
            let n = order.len();
            Some(Self::build_node(points, &mut order, 0, n))
        };
        Self { points, order, root }
    }

    fn build_node(points: &[Point3], order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        // split on the axis of largest extent
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for &i in slice.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[slice[mid]][axis];
        let mid = start + mid;
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, order, start, mid)),
            right: Box::new(Self::build_node(points, order, mid, end)),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [Point3] {
        self.points
    }

    /// The `min(k, len)` nearest points to `q`, ascending by distance.
    pub fn nearest(&self, q: &Point3, k: usize) -> Result<Vec<Neighbor>> {
        let root = self.root.as_ref().ok_or(Error::EmptyFrame)?;
        let k = k.min(self.points.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(root, q, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|e| e.0).collect();
        out.sort_by(|a, b| a.key_cmp(b));
        Ok(out)
    }

    fn search(&self, node: &Node, q: &Point3, k: usize, heap: &mut BinaryHeap<HeapEntry>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let cand = Neighbor {
                        index: i,
                        dist2: dist2(q, &self.points[i]),
                    };
                    if heap.len() < k {
                        heap.push(HeapEntry(cand));
                    } else if let Some(worst) = heap.peek() {
                        if cand.key_cmp(&worst.0) == Ordering::Less {
                            heap.pop();
                            heap.push(HeapEntry(cand));
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // ties on the boundary must still be visited
                let visit_far = heap.len() < k || heap.peek().is_some_and(|w| diff * diff <= w.0.dist2);
                if visit_far {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

/// Nearest neighbours of `q` among `points` (builds a throwaway tree).
pub fn knn_query(points: &[Point3], q: &Point3, k: usize) -> Result<Vec<Neighbor>> {
    KdTree::build(points).nearest(q, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn brute(points: &[Point3], q: &Point3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = p - q;
                (i, d.x * d.x + d.y * d.y + d.z * d.z)
            })
            .collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn nearest_on_a_line() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        let nn = knn_query(&pts, &Point3::new(0.9, 0.0, 0.0), 1).unwrap();
        assert_eq!(nn[0].index, 1);
    }

    #[test]
    fn coincident_query_has_zero_distance() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.0)];
        let nn = knn_query(&pts, &Point3::new(1.0, 2.0, 3.0), 1).unwrap();
        assert_eq!(nn[0].index, 1);
        assert_eq!(nn[0].dist2, 0.0);
    }

    #[test]
    fn empty_frame_is_an_error() {
        assert!(matches!(knn_query(&[], &Point3::zeros(), 3), Err(Error::EmptyFrame)));
    }

    #[test]
    fn k_larger_than_frame() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        assert_eq!(knn_query(&pts, &Point3::zeros(), 5).unwrap().len(), 2);
    }

    #[test]
    fn ties_break_by_lower_index() {
        // a grid of duplicates exercises the boundary-tie path
        let mut pts = Vec::new();
        for i in 0..40 {
            pts.push(Point3::new((i % 4) as f64, ((i / 4) % 3) as f64, 0.0));
        }
        let q = Point3::new(1.5, 1.0, 0.0);
        let tree = KdTree::build(&pts);
        for k in 1..20 {
            let got: Vec<(usize, f64)> = tree
                .nearest(&q, k)
                .unwrap()
                .iter()
                .map(|n| (n.index, n.dist2))
                .collect();
            assert_eq!(got, brute(&pts, &q, k));
        }
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = seeded_rng(3);
        for _ in 0..20 {
            let pts: Vec<Point3> = (0..500)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-3.0..3.0),
                    )
                })
                .collect();
            let tree = KdTree::build(&pts);
            for _ in 0..50 {
                let q = Point3::new(
                    rng.random_range(-12.0..12.0),
                    rng.random_range(-12.0..12.0),
                    rng.random_range(-4.0..4.0),
                );
                let got: Vec<(usize, f64)> = tree
                    .nearest(&q, 8)
                    .unwrap()
                    .iter()
                    .map(|n| (n.index, n.dist2))
                    .collect();
                assert_eq!(got, brute(&pts, &q, 8));
            }
        }
    }
}
