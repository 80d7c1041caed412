//! Gaussian naive Bayes with per-class, per-feature normal densities.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;

const RELATIVE_VAR_FLOOR: f64 = 1e-9;
const ABSOLUTE_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    log_priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianNbModel {
    pub(crate) fn fit(x: &Matrix, classes: &[usize], n_classes: usize) -> Self {
        let d = x.cols();
        let n = x.rows() as f64;
        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; d]; n_classes];
        for (r, &c) in x.iter_rows().zip(classes) {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(r) {
                *m += v;
            }
        }
        for (m, &cnt) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= cnt as f64);
        }
        let mut variances = vec![vec![0.0; d]; n_classes];
        for (r, &c) in x.iter_rows().zip(classes) {
            for ((s, v), m) in variances[c].iter_mut().zip(r).zip(&means[c]) {
                *s += (v - m) * (v - m);
            }
        }
        let floor = variance_floor(x);
        for (vars, &cnt) in variances.iter_mut().zip(&counts) {
            vars.iter_mut()
                .for_each(|s| *s = (*s / cnt as f64).max(floor));
        }
        let log_priors = counts.iter().map(|&c| (c as f64 / n).ln()).collect();
        Self {
            log_priors,
            means,
            variances,
        }
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Per-class variances after the floor has been applied.
    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    /// Unnormalized log-posterior of each class: log prior plus the sum of
    /// per-feature Gaussian log densities.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.log_priors
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(lp, (mu, var))| {
                lp + x
                    .iter()
                    .zip(mu.iter().zip(var))
                    .map(|(v, (m, s))| {
                        -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (v - m) * (v - m) / (2.0 * s)
                    })
                    .sum::<f64>()
            })
            .collect()
    }

    pub(crate) fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        super::softmax(&self.log_joint(x))
    }
}

/// `max(1e-9 * largest feature variance, 1e-12)`; each class variance is
/// clamped from below by this value.
fn variance_floor(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let widest = (0..x.cols())
        .map(|j| {
            let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n
        })
        .fold(0.0, f64::max);
    (RELATIVE_VAR_FLOOR * widest).max(ABSOLUTE_VAR_FLOOR)
}
