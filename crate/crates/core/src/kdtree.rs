//! Exact 3D nearest-neighbour search.
//!
//! Nodes split at the median of the axis with the widest spread; leaves hold
//! at most [`LEAF_SIZE`] points. Queries are exact: the returned index
//! minimises Euclidean distance, ties going to the lowest point index.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::Point3;

pub const LEAF_SIZE: usize = 16;

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

/// Immutable after construction; queries take `&self`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Best {
    d2: f64,
    index: usize,
}

impl Best {
    #[inline]
    fn offer(&mut self, d2: f64, index: usize) {
        if d2 < self.d2 || (d2 == self.d2 && index < self.index) {
            self.d2 = d2;
            self.index = index;
        }
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&points, &mut order, 0, points.len(), &mut nodes);
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

    /// The `i`-th point as passed to [`KdTree::build`].
    #[inline]
    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// Index of the nearest point and its Euclidean distance.
    pub fn nearest(&self, query: &Point3) -> (usize, f64) {
        let (i, d2) = self.nearest_squared(query);
        (i, libm::sqrt(d2))
    }

    /// Index of the nearest point and the squared distance.
    pub fn nearest_squared(&self, query: &Point3) -> (usize, f64) {
        let q = [query.x, query.y, query.z];
        let mut best = Best {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.search(0, &q, usize::MAX, &mut best);
        (best.index, best.d2)
    }

    /// Nearest point other than the one stored at `exclude`; `None` for a
    /// single-point tree.
    pub fn nearest_excluding(&self, query: &Point3, exclude: usize) -> Option<(usize, f64)> {
        let q = [query.x, query.y, query.z];
        let mut best = Best {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.search(0, &q, exclude, &mut best);
        (best.index != usize::MAX).then(|| (best.index, libm::sqrt(best.d2)))
    }

    fn search(&self, node: usize, q: &[f64; 3], exclude: usize, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i != exclude {
                        best.offer(squared_distance(&self.points[i], q), i);
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
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, exclude, best);
                // `<=` so equal-distance points with a lower index are still found.
                if diff * diff <= best.d2 {
                    self.search(far, q, exclude, best);
                }
            }
        }
    }
}

fn build_node(
    points: &[[f64; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let axis = widest_axis(points, slice);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let value = points[slice[mid]][axis];
    nodes.push(Node::Leaf { start, end });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

fn widest_axis(points: &[[f64; 3]], indices: &[usize]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in indices {
        for k in 0..3 {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let spread = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut axis = 0;
    for k in 1..3 {
        if spread[k] > spread[axis] {
            axis = k;
        }
    }
    axis
}
