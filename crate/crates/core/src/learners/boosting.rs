//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each round fits a depth-limited least-squares tree to the residuals
//! `y - p` and adds it with shrinkage; leaf values are mean residuals.

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use crate::data::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum RegNode {
    Leaf(f64),
    Branch {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegressionTree {
    nodes: Vec<RegNode>,
}

impl RegressionTree {
    fn fit(x: &Matrix, target: &[f64], max_depth: usize) -> Self {
        let mut nodes = vec![RegNode::Leaf(0.0)];
        let mut stack = vec![(0usize, (0..x.rows()).collect::<Vec<_>>(), 0usize)];
        while let Some((slot, rows, depth)) = stack.pop() {
            let sum: f64 = rows.iter().map(|&r| target[r]).sum();
            let split = if depth < max_depth {
                best_sse_split(x, target, &rows, sum)
            } else {
                None
            };
            match split {
                None => nodes[slot] = RegNode::Leaf(sum / rows.len() as f64),
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| x.row(i)[feature] <= threshold);
                    nodes.push(RegNode::Leaf(0.0));
                    nodes.push(RegNode::Leaf(0.0));
                    let (left, right) = (nodes.len() - 2, nodes.len() - 1);
                    nodes[slot] = RegNode::Branch {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Self { nodes }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf(v) => return *v,
                RegNode::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }
}

/// Maximizes `S_l^2 / n_l + S_r^2 / n_r`, the least-squares gain. Returns
/// `None` when no split strictly improves on the unsplit node.
fn best_sse_split(x: &Matrix, target: &[f64], rows: &[usize], total: f64) -> Option<(usize, f64)> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let base = total * total / n as f64;
    let tol = 1e-12 * (1.0 + base.abs());
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = rows.to_vec();
    for f in 0..x.cols() {
        order.sort_by(|&a, &b| x.row(a)[f].total_cmp(&x.row(b)[f]));
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += target[order[i]];
            let lo = x.row(order[i])[f];
            let hi = x.row(order[i + 1])[f];
            if lo == hi {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr;
            if gain > base + tol && best.is_none_or(|(g, _, _)| gain > g + tol) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some((gain, f, if mid < hi { mid } else { lo }));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    base_score: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    training_loss: Vec<f64>,
}

fn mean_log_loss(raw: &[f64], y: &[f64]) -> f64 {
    raw.iter()
        .zip(y)
        .map(|(&z, &t)| z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z)
        .sum::<f64>()
        / raw.len() as f64
}

impl BoostedModel {
    /// `classes` holds 0 for the negative and 1 for the positive class; both
    /// must be present.
    pub(crate) fn fit(
        x: &Matrix,
        classes: &[usize],
        n_rounds: usize,
        learning_rate: f64,
        max_depth: usize,
    ) -> Self {
        let y: Vec<f64> = classes.iter().map(|&c| c as f64).collect();
        let p = (y.iter().sum::<f64>() / y.len() as f64).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (p / (1.0 - p)).ln();
        let mut raw = vec![base_score; y.len()];
        let mut training_loss = vec![mean_log_loss(&raw, &y)];
        let mut trees = Vec::with_capacity(n_rounds);
        for _ in 0..n_rounds {
            let residual: Vec<f64> = raw.iter().zip(&y).map(|(&z, &t)| t - sigmoid(z)).collect();
            let tree = RegressionTree::fit(x, &residual, max_depth);
            for (z, row) in raw.iter_mut().zip(x.iter_rows()) {
                *z += learning_rate * tree.predict(row);
            }
            training_loss.push(mean_log_loss(&raw, &y));
            trees.push(tree);
        }
        Self {
            base_score,
            learning_rate,
            trees,
            training_loss,
        }
    }

    /// Mean training log-loss before the first round and after each round.
    pub fn training_loss(&self) -> &[f64] {
        &self.training_loss
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub(crate) fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        let p = sigmoid(self.raw_score(x));
        vec![1.0 - p, p]
    }
}
