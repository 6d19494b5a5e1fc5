//! k-nearest-neighbor regressor with k = 1 under the Euclidean metric.
//!
//! The index stores every training input with its associated target; queries
//! return the target of the closest indexed point, breaking exact distance
//! ties by lowest insertion index. Low-dimensional indexes get a k-d tree,
//! higher dimensions fall back to a linear scan; both return identical
//! results.

use super::{LearnerError, Predictor, TaskKind, TrainingSet};
use crate::domain::Trajectory;
use crate::linalg::Mat;

const KDTREE_MAX_DIM: usize = 8;
const KDTREE_MIN_POINTS: usize = 64;

#[derive(Debug, Clone)]
pub struct KnnModel {
    /// Neighbor count; this implementation always uses 1.
    pub k: usize,
    dim: usize,
    target_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    tree: Option<KdTree>,
}

impl KnnModel {
    /// Index training trajectories for the given task. For step prediction
    /// the final snapshot of every trajectory is excluded (it has no
    /// successor).
    pub fn fit(trajs: &[Trajectory], task: TaskKind) -> Result<Self, LearnerError> {
        let pairs = super::training_pairs(trajs, task)?;
        Self::fit_pairs(&pairs.inputs, &pairs.targets)
    }

    pub fn fit_set(set: &TrainingSet) -> Result<Self, LearnerError> {
        Self::fit_pairs(&set.inputs, &set.targets)
    }

    pub fn fit_pairs(inputs: &Mat, targets: &Mat) -> Result<Self, LearnerError> {
        if inputs.rows() == 0 {
            return Err(LearnerError::EmptyTrainingSet);
        }
        if inputs.rows() != targets.rows() {
            return Err(LearnerError::Dimension {
                expected: inputs.rows(),
                got: targets.rows(),
            });
        }
        let dim = inputs.cols();
        let tree = if dim <= KDTREE_MAX_DIM && inputs.rows() >= KDTREE_MIN_POINTS {
            Some(KdTree::build(inputs.data(), dim))
        } else {
            None
        };
        Ok(Self {
            k: 1,
            dim,
            target_dim: targets.cols(),
            inputs: inputs.data().to_vec(),
            targets: targets.data().to_vec(),
            tree,
        })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.inputs.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the nearest training input, lowest index on exact ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.dim, "query dimension mismatch");
        match &self.tree {
            Some(tree) => tree.nearest(&self.inputs, self.dim, x),
            None => {
                let mut best = 0usize;
                let mut best_d2 = f64::INFINITY;
                for i in 0..self.len() {
                    let row = &self.inputs[i * self.dim..(i + 1) * self.dim];
                    let d2 = squared_distance(row, x);
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = i;
                    }
                }
                best
            }
        }
    }
}

impl Predictor for KnnModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.target_dim
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let i = self.nearest(x);
        self.targets[i * self.target_dim..(i + 1) * self.target_dim].to_vec()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone)]
struct KdNode {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<KdNode>,
    root: i32,
}

impl KdTree {
    fn build(data: &[f64], dim: usize) -> Self {
        let n = data.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(n);
        let root = Self::build_rec(data, dim, &mut order, 0, &mut nodes);
        Self { nodes, root }
    }

    fn build_rec(
        data: &[f64],
        dim: usize,
        order: &mut [u32],
        depth: usize,
        nodes: &mut Vec<KdNode>,
    ) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = depth % dim;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let va = data[a as usize * dim + axis];
            let vb = data[b as usize * dim + axis];
            va.partial_cmp(&vb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let point = order[mid];
        let id = nodes.len() as i32;
        nodes.push(KdNode {
            point,
            axis: axis as u8,
            left: -1,
            right: -1,
        });
        let (left_slice, rest) = order.split_at_mut(mid);
        let right_slice = &mut rest[1..];
        let left = Self::build_rec(data, dim, left_slice, depth + 1, nodes);
        let right = Self::build_rec(data, dim, right_slice, depth + 1, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        id
    }

    fn nearest(&self, data: &[f64], dim: usize, query: &[f64]) -> usize {
        let mut best = usize::MAX;
        let mut best_d2 = f64::INFINITY;
        self.search(self.root, data, dim, query, &mut best, &mut best_d2);
        best
    }

    fn search(
        &self,
        node_id: i32,
        data: &[f64],
        dim: usize,
        query: &[f64],
        best: &mut usize,
        best_d2: &mut f64,
    ) {
        if node_id < 0 {
            return;
        }
        let node = &self.nodes[node_id as usize];
        let idx = node.point as usize;
        let point = &data[idx * dim..(idx + 1) * dim];
        let d2 = squared_distance(point, query);
        if d2 < *best_d2 || (d2 == *best_d2 && idx < *best) {
            *best_d2 = d2;
            *best = idx;
        }
        let axis = node.axis as usize;
        let diff = query[axis] - point[axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, data, dim, query, best, best_d2);
        // The far side can still hold an equal-distance lower-index point,
        // so recurse on <= rather than strict <.
        if diff * diff <= *best_d2 {
            self.search(far, data, dim, query, best, best_d2);
        }
    }
}
