//! Brute-force k-nearest-neighbour voting on standardized features.

use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use crate::data::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    scaler: Standardizer,
    points: Matrix,
    classes: Vec<usize>,
}

impl KnnModel {
    pub(crate) fn fit(x: &Matrix, classes: &[usize], n_classes: usize, k: usize) -> Self {
        let scaler = Standardizer::fit(x);
        Self {
            k,
            n_classes,
            points: scaler.transform(x),
            scaler,
            classes: classes.to_vec(),
        }
    }

    /// Fit-set positions of the `k` nearest stored points, closest first.
    /// Equal distances are ordered by fit-set position.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut q = vec![0.0; query.len()];
        self.scaler.transform_row(query, &mut q);
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub(crate) fn proba_row(&self, query: &[f64]) -> Vec<f64> {
        let nn = self.neighbors(query);
        let mut votes = vec![0.0; self.n_classes];
        for &i in &nn {
            votes[self.classes[i]] += 1.0;
        }
        let total = nn.len() as f64;
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }
}
