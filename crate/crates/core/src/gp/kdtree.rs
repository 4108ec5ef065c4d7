use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

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

/// Exact k-nearest-neighbour index over a fixed point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Worst candidate on top: larger distance, then larger index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = points.first() {
            if first.is_empty() || points.iter().any(|p| p.len() != first.len()) {
                return Err(Error::Usage(
                    "kd-tree points must share a positive dimension".into(),
                ));
            }
        }
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.split(0, tree.points.len());
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn split(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.points[0].len();
        let slice = &self.order[start..end];
        let axis = (0..dim)
            .max_by(|&a, &b| {
                let spread = |d: usize| {
                    let (lo, hi) = slice
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                            (lo.min(self.points[i][d]), hi.max(self.points[i][d]))
                        });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.split(start, mid);
        let right = self.split(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Indices of the `n` nearest points, closest first; equal distances
    /// are ordered by index.
    pub fn nearest(&self, query: &[f64], n: usize) -> Result<Vec<usize>> {
        if self.points.is_empty() {
            return Err(Error::Usage(
                "nearest-neighbour query on an empty index".into(),
            ));
        }
        if n > self.points.len() {
            return Err(Error::Usage(format!(
                "requested {n} neighbours from {} points",
                self.points.len()
            )));
        }
        if query.len() != self.points[0].len() {
            return Err(Error::Usage("query dimension differs from index".into()));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(n + 1);
        self.search(0, query, n, &mut heap);
        let mut out = heap.into_sorted_vec();
        out.truncate(n);
        Ok(out.into_iter().map(|c| c.index).collect())
    }

    fn search(&self, node: usize, q: &[f64], n: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let dist: f64 = self.points[i]
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let c = Candidate { dist, index: i };
                    if heap.len() < n {
                        heap.push(c);
                    } else if heap.peek().is_some_and(|w| c < *w) {
                        heap.pop();
                        heap.push(c);
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
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, n, heap);
                // Equal-distance points in the far branch may still win on index.
                if heap.len() < n || heap.peek().is_some_and(|w| diff * diff <= w.dist) {
                    self.search(far, q, n, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_index_errors() {
        let t = KdTree::build(vec![]).unwrap();
        assert!(matches!(t.nearest(&[0.0, 0.0], 0), Err(Error::Usage(_))));
    }

    #[test]
    fn all_points_returned() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64, (i * 7 % 5) as f64])
            .collect();
        let t = KdTree::build(pts).unwrap();
        let mut got = t.nearest(&[3.0, 1.0], 30).unwrap();
        got.sort();
        assert_eq!(got, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_points_break_ties_by_index() {
        let pts = vec![vec![1.0, 1.0]; 20];
        let t = KdTree::build(pts).unwrap();
        assert_eq!(t.nearest(&[0.0, 0.0], 3).unwrap(), vec![0, 1, 2]);
    }
}
