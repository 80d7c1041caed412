//! L2-regularized binary logistic regression trained by full-batch gradient
//! descent on standardized inputs.

use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use crate::data::Matrix;

/// Gradient of the penalized mean negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticGradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood of `targets` (each 0 or 1) plus
/// `0.5 * l2 * |weights|^2`. The bias is not penalized.
pub fn logistic_loss(weights: &[f64], bias: f64, x: &Matrix, targets: &[f64], l2: f64) -> f64 {
    let n = x.rows() as f64;
    let nll: f64 = x
        .iter_rows()
        .zip(targets)
        .map(|(r, &y)| {
            let z = dot(weights, r) + bias;
            softplus(z) - y * z
        })
        .sum();
    nll / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`logistic_loss`] with respect to weights and bias.
pub fn logistic_gradient(
    weights: &[f64],
    bias: f64,
    x: &Matrix,
    targets: &[f64],
    l2: f64,
) -> LogisticGradient {
    let n = x.rows() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (r, &y) in x.iter_rows().zip(targets) {
        let err = sigmoid(dot(weights, r) + bias) - y;
        gb += err;
        for (g, v) in gw.iter_mut().zip(r) {
            *g += err * v;
        }
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    LogisticGradient {
        weights: gw,
        bias: gb / n,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    scaler: Standardizer,
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    /// `classes` holds 0 for the negative and 1 for the positive class.
    pub(crate) fn fit(
        x: &Matrix,
        classes: &[usize],
        l2: f64,
        epochs: usize,
        learning_rate: f64,
    ) -> Self {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let targets: Vec<f64> = classes.iter().map(|&c| c as f64).collect();
        let mut weights = vec![0.0; x.cols()];
        let mut bias = 0.0;
        for _ in 0..epochs {
            let g = logistic_gradient(&weights, bias, &xs, &targets, l2);
            for (w, gw) in weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * gw;
            }
            bias -= learning_rate * g.bias;
        }
        Self {
            scaler,
            weights,
            bias,
        }
    }

    /// Model with explicit parameters over an identity scaling.
    pub fn from_parameters(weights: Vec<f64>, bias: f64) -> Self {
        let d = weights.len();
        let scaler = Standardizer::fit(&Matrix::zeros(1, d));
        Self {
            scaler,
            weights,
            bias,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub(crate) fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; x.len()];
        self.scaler.transform_row(x, &mut z);
        let p = sigmoid(dot(&self.weights, &z) + self.bias);
        vec![1.0 - p, p]
    }
}
