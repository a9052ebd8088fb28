use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::dist2;
use crate::cloud_io::PointCloud;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

/// A neighbor hit: point index and squared Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub dist2: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

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

/// Balanced 3-d tree over a scan's positions.
///
/// Queries are exact and deterministic: ties in distance go to the lower
/// point index, and the query point itself is never returned.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Self {
        let points: Vec<[f64; 3]> = (0..cloud.len()).map(|i| cloud.position_f64(i)).collect();
        Self::from_points(points).expect("PointCloud is never empty")
    }

    pub fn from_points(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("cannot index an empty point set"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        build_node(&points, &mut order, 0, &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// The `min(k, N-1)` nearest neighbors of point `i`, nearest first.
    pub fn knn_of(&self, i: usize, k: usize) -> Vec<Neighbor> {
        self.knn(self.points[i], k, Some(i as u32))
    }

    /// The `k` nearest indexed points to an arbitrary query position.
    pub fn knn(&self, query: [f64; 3], k: usize, exclude: Option<u32>) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, exclude, &mut heap);
        let mut out = heap.into_vec();
        out.sort_unstable();
        out
    }

    fn search(
        &self,
        node: usize,
        query: [f64; 3],
        k: usize,
        exclude: Option<u32>,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    if Some(idx) == exclude {
                        continue;
                    }
                    let cand = Neighbor {
                        index: idx,
                        dist2: dist2(query, self.points[idx as usize]),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap holds k items") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, k, exclude, heap);
                // `<=` keeps equal-distance candidates on the far side reachable for the index tie-break
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").dist2 {
                    self.search(far, query, k, exclude, heap);
                }
            }
        }
    }

    /// Neighbor lists for every point, computed in parallel.
    pub fn knn_all(&self, k: usize) -> Neighborhoods {
        let lists = (0..self.len())
            .into_par_iter()
            .map(|i| self.knn_of(i, k))
            .collect();
        Neighborhoods { k, lists }
    }
}

fn build_node(
    points: &[[f64; 3]],
    order: &mut [u32],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .expect("three axes");
    if hi[axis] - lo[axis] == 0.0 {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(points, left_part, offset, nodes);
    let right = build_node(points, right_part, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Precomputed neighbor lists, one per point.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    pub k: usize,
    pub lists: Vec<Vec<Neighbor>>,
}

impl Neighborhoods {
    pub fn of(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Exhaustive k-NN with the same ordering rules as [`KdTree`].
pub fn brute_force_knn(points: &[[f64; 3]], i: usize, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &p)| Neighbor {
            index: j as u32,
            dist2: dist2(points[i], p),
        })
        .collect();
    all.sort_unstable();
    all.truncate(k);
    all
}
