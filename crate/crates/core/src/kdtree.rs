//! Exact nearest-neighbour search over a static point set.
//!
//! Splits on the coordinate of widest spread at the median. The distance to
//! a splitting plane along one coordinate bounds both the L1 and the L2
//! distance to anything on the far side, so pruning is exact for either.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Minkowski {
    L1,
    L2,
}

impl Minkowski {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Minkowski::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Minkowski::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    norm: Minkowski,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl KdTree {
    /// Builds a tree over `points`. Returns `None` when `points` is empty.
    pub fn build(points: Vec<Vec<f64>>, norm: Minkowski) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
            norm,
        };
        let n = tree.points.len();
        tree.build_node(0, n);
        Some(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let points = &self.points;
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |a, b| {
            points[*a][dim].total_cmp(&points[*b][dim])
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let dims = self.points[self.order[start]].len();
        (0..dims)
            .map(|d| {
                let (lo, hi) = self.order[start..end].iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &i| {
                        let x = self.points[i][d];
                        (lo.min(x), hi.max(x))
                    },
                );
                (d, hi - lo)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
            .0
    }

    /// Nearest point to `query`; ties go to the lowest index.
    pub fn nearest(&self, query: &[f64]) -> Neighbor {
        let mut best = Neighbor {
            index: usize::MAX,
            distance: f64::INFINITY,
        };
        self.search(0, query, &mut best);
        best
    }

    fn search(&self, node: usize, query: &[f64], best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = self.norm.dist(query, &self.points[i]);
                    if d < best.distance || (d == best.distance && i < best.index) {
                        *best = Neighbor {
                            index: i,
                            distance: d,
                        };
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, best);
                if diff.abs() <= best.distance {
                    self.search(far, query, best);
                }
            }
        }
    }
}
