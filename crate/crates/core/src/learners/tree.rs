//! CART classification trees grown on Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values; rows with `x[feature] <= threshold` go left. Among equally good
//! splits the lower feature index wins, then the lower threshold.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::data::Matrix;

/// `1 - sum_c p_c^2` over the label frequencies.
pub fn gini_impurity(labels: &[u32]) -> Result<f64, LearnerError> {
    if labels.is_empty() {
        return Err(LearnerError::EmptyInput);
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    let n = labels.len() as f64;
    let mut sum_sq = 0.0;
    for run in sorted.chunk_by(|a, b| a == b) {
        let p = run.len() as f64 / n;
        sum_sq += p * p;
    }
    Ok(1.0 - sum_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        distribution: Vec<f64>,
    },
    Branch {
        split: Split,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

/// Growth limits shared by single trees and forests.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per node; `None` examines all of them.
    pub max_features: Option<usize>,
}

/// Sum over both children of `sum_c count_c^2 / n_child`. Maximizing it is
/// the same as minimizing the size-weighted child Gini impurity.
fn purity_score(left: &[usize], n_left: usize, right: &[usize], n_right: usize) -> f64 {
    let sq = |c: &[usize], n: usize| c.iter().map(|&k| (k * k) as f64).sum::<f64>() / n as f64;
    sq(left, n_left) + sq(right, n_right)
}

/// Best Gini split of `rows` over `features`, or `None` when no threshold
/// leaves at least `min_leaf` rows on both sides.
pub(crate) fn best_split(
    x: &Matrix,
    classes: &[usize],
    n_classes: usize,
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = rows.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mut total = vec![0usize; n_classes];
    for &r in rows {
        total[classes[r]] += 1;
    }
    let tol = 1e-12 * n as f64;
    let mut best: Option<(f64, Split)> = None;
    let mut order = rows.to_vec();
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for &f in features {
        order.sort_by(|&a, &b| x.row(a)[f].total_cmp(&x.row(b)[f]));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&total);
        for i in 0..n - 1 {
            let c = classes[order[i]];
            left[c] += 1;
            right[c] -= 1;
            let lo = x.row(order[i])[f];
            let hi = x.row(order[i + 1])[f];
            let n_left = i + 1;
            if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let score = purity_score(&left, n_left, &right, n - n_left);
            if best.is_none_or(|(b, _)| score > b + tol) {
                best = Some((
                    score,
                    Split {
                        feature: f,
                        threshold: midpoint(lo, hi),
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

impl TreeModel {
    pub(crate) fn fit<R: Rng>(
        x: &Matrix,
        classes: &[usize],
        n_classes: usize,
        rows: &[usize],
        params: GrowParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = TreeModel { nodes: Vec::new() };
        let all_features: Vec<usize> = (0..x.cols()).collect();
        let mut stack = vec![(tree.push_placeholder(), rows.to_vec(), 0usize)];
        while let Some((slot, node_rows, depth)) = stack.pop() {
            let mut counts = vec![0usize; n_classes];
            for &r in &node_rows {
                counts[classes[r]] += 1;
            }
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || depth >= params.max_depth {
                None
            } else {
                let features = match params.max_features {
                    Some(m) if m < all_features.len() => {
                        let mut f: Vec<usize> =
                            all_features.choose_multiple(rng, m).copied().collect();
                        f.sort_unstable();
                        f
                    }
                    _ => all_features.clone(),
                };
                best_split(
                    x,
                    classes,
                    n_classes,
                    &node_rows,
                    &features,
                    params.min_leaf,
                )
            };
            match split {
                None => {
                    let n = node_rows.len() as f64;
                    tree.nodes[slot] = Node::Leaf {
                        distribution: counts.iter().map(|&c| c as f64 / n).collect(),
                    };
                }
                Some(split) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = node_rows
                        .iter()
                        .partition(|&&i| x.row(i)[split.feature] <= split.threshold);
                    let left = tree.push_placeholder();
                    let right = tree.push_placeholder();
                    tree.nodes[slot] = Node::Branch { split, left, right };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        tree
    }

    fn push_placeholder(&mut self) -> usize {
        self.nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });
        self.nodes.len() - 1
    }

    pub fn root_split(&self) -> Option<Split> {
        match self.nodes.first() {
            Some(Node::Branch { split, .. }) => Some(*split),
            _ => None,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Branch { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn proba_row(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { distribution } => return distribution,
                Node::Branch { split, left, right } => {
                    i = if x[split.feature] <= split.threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}
