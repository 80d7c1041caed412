//! One-hidden-layer perceptron: ReLU hidden units, softmax output, mean
//! cross-entropy loss, mini-batch SGD on standardized inputs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use crate::data::Matrix;

const INIT_RANGE: f64 = 0.1;

/// Network weights. `w1` is `hidden x inputs`, `w2` is `outputs x hidden`,
/// both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_hidden,
            n_out,
            w1: vec![0.0; n_hidden * n_in],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; n_out * n_hidden],
            b2: vec![0.0; n_out],
        }
    }

    /// Every parameter drawn uniformly from `[-0.1, 0.1]`.
    pub fn random<R: Rng>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_in, n_hidden, n_out);
        for v in p.values_mut() {
            *v = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        p
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        for (h, (w, b)) in hidden
            .iter_mut()
            .zip(self.w1.chunks_exact(self.n_in).zip(&self.b1))
        {
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
            *h = z.max(0.0);
        }
        for (o, (w, b)) in logits
            .iter_mut()
            .zip(self.w2.chunks_exact(self.n_hidden).zip(&self.b2))
        {
            *o = w.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>() + b;
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.n_hidden];
        let mut logits = vec![0.0; self.n_out];
        self.forward(x, &mut hidden, &mut logits);
        super::softmax(&logits)
    }

    /// Mean cross-entropy of `targets` (class indices) over the rows of `x`.
    pub fn loss(&self, x: &Matrix, targets: &[usize]) -> f64 {
        let mut hidden = vec![0.0; self.n_hidden];
        let mut logits = vec![0.0; self.n_out];
        let mut total = 0.0;
        for (row, &t) in x.iter_rows().zip(targets) {
            self.forward(row, &mut hidden, &mut logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - logits[t];
        }
        total / x.rows() as f64
    }

    /// Gradient of [`MlpParams::loss`] by backpropagation.
    pub fn gradient(&self, x: &Matrix, targets: &[usize]) -> MlpParams {
        let mut grad = MlpParams::zeros(self.n_in, self.n_hidden, self.n_out);
        let mut hidden = vec![0.0; self.n_hidden];
        let mut logits = vec![0.0; self.n_out];
        let mut dhidden = vec![0.0; self.n_hidden];
        let scale = 1.0 / x.rows() as f64;
        for (row, &t) in x.iter_rows().zip(targets) {
            self.forward(row, &mut hidden, &mut logits);
            let mut dlogits = super::softmax(&logits);
            dlogits[t] -= 1.0;
            dhidden.iter_mut().for_each(|v| *v = 0.0);
            for (o, &dz) in dlogits.iter().enumerate() {
                let dz = dz * scale;
                grad.b2[o] += dz;
                let base = o * self.n_hidden;
                for (h, &a) in hidden.iter().enumerate() {
                    grad.w2[base + h] += dz * a;
                    dhidden[h] += dz * self.w2[base + h];
                }
            }
            for (h, &a) in hidden.iter().enumerate() {
                if a <= 0.0 {
                    continue;
                }
                let dz = dhidden[h];
                grad.b1[h] += dz;
                let base = h * self.n_in;
                for (i, &v) in row.iter().enumerate() {
                    grad.w1[base + i] += dz * v;
                }
            }
        }
        grad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    scaler: Standardizer,
    params: MlpParams,
}

impl MlpModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn fit(
        x: &Matrix,
        classes: &[usize],
        n_classes: usize,
        hidden_units: usize,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let mut params = MlpParams::random(x.cols(), hidden_units, n_classes, &mut rng);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(batch_size.max(1)) {
                let bx = xs.select_rows(batch);
                let by: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();
                let g = params.gradient(&bx, &by);
                for (p, d) in params.values_mut().zip(g.values()) {
                    *p -= learning_rate * d;
                }
            }
        }
        Self { scaler, params }
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub(crate) fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; x.len()];
        self.scaler.transform_row(x, &mut z);
        self.params.probabilities(&z)
    }
}
