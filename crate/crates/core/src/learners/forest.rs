//! Random forest: bootstrap-sampled CART trees with per-node feature
//! subsampling, combined by majority vote.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{GrowParams, TreeModel};
use crate::data::Matrix;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    n_classes: usize,
    trees: Vec<TreeModel>,
}

impl ForestModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn fit(
        x: &Matrix,
        classes: &[usize],
        n_classes: usize,
        n_trees: usize,
        feature_fraction: Option<f64>,
        max_depth: usize,
        min_leaf: usize,
        seed: u64,
    ) -> Self {
        let d = x.cols();
        let fraction = feature_fraction.unwrap_or_else(|| (d as f64).sqrt() / d as f64);
        let max_features = ((fraction * d as f64).round() as usize).clamp(1, d.max(1));
        let params = GrowParams {
            max_depth,
            min_leaf,
            max_features: Some(max_features),
        };
        let n = x.rows();
        // one independent stream per tree keeps the result independent of scheduling
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                TreeModel::fit(x, classes, n_classes, &rows, params, &mut rng)
            })
            .collect();
        Self { n_classes, trees }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub(crate) fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for tree in &self.trees {
            votes[super::argmax(tree.proba_row(x))] += 1.0;
        }
        let total = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }
}
