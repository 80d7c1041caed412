#![allow(dead_code)]

use std::sync::Arc;

use hellsemble::data::{stratified_split, DataView, Dataset, IndexSubset, SplitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Share of rows that belong to the pocket.
pub const POCKET_FRACTION: f64 = 0.15;
const POCKET_COLUMNS: usize = 4;
const COLUMN_SPACING: f64 = 0.05;
const ROW_SPACING: f64 = 0.1;

/// Two-feature binary data: a linearly separable bulk plus a small pocket
/// that no straight line separates.
///
/// Bulk: two half-normal bands on either side of the line `x + y = 0`,
/// stretched five times further along the line than across it.
///
/// Pocket: four narrow columns of alternating label placed beside the bulk,
/// odd columns shifted by half a row. Every pocket point's nearest
/// neighbours therefore sit in the adjacent columns and carry the other
/// label, while a single threshold on `x` between columns is exact.
///
/// Rows `0..pocket_len(n)` are the pocket.
pub fn pocket_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        if i < pocket_len(n) {
            let (col, row) = (i % POCKET_COLUMNS, i / POCKET_COLUMNS);
            let shift = if col % 2 == 1 { 0.5 * ROW_SPACING } else { 0.0 };
            rows.push([
                25.0 + col as f64 * COLUMN_SPACING + 1e-3 * normal(&mut rng),
                row as f64 * ROW_SPACING + shift + 1e-3 * normal(&mut rng),
            ]);
            labels.push((col % 2) as u8);
        } else {
            let y = (i % 2) as u8;
            let side = if y == 1 { 1.0 } else { -1.0 };
            let across = side * normal(&mut rng).abs();
            let along = 5.0 * normal(&mut rng);
            rows.push([h * (across + along), h * (across - along)]);
            labels.push(y);
        }
    }
    Dataset::from_rows(&rows, labels).expect("generated rows are well formed")
}

pub fn pocket_len(n: usize) -> usize {
    (POCKET_FRACTION * n as f64) as usize
}

/// Test, validation and training parts: 20% test, then 25% of the rest.
pub struct Parts {
    pub test: IndexSubset,
    pub val: IndexSubset,
    pub train: IndexSubset,
}

pub fn split_three(data: Dataset, seed: u64) -> Parts {
    let full = IndexSubset::full(Arc::new(data));
    let (test, rest) = stratified_split(&full, &SplitSpec::new(0.2, seed).unwrap()).unwrap();
    let (val, train) =
        stratified_split(&rest, &SplitSpec::new(0.25, seed.wrapping_add(1)).unwrap()).unwrap();
    Parts { test, val, train }
}

pub fn labels_u32<V: DataView>(v: &V) -> Vec<u32> {
    v.label_vec().into_iter().map(u32::from).collect()
}

/// Two overlapping unit Gaussians, centres `-sep` and `+sep` on feature 0.
pub fn blobs(seed: u64, n: usize, d: usize, sep: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let centre = if y == 1 { sep } else { -sep };
        let row: Vec<f64> = (0..d)
            .map(|j| {
                let c = if j == 0 { centre } else { 0.0 };
                c + normal(&mut rng)
            })
            .collect();
        rows.push(row);
        labels.push(y);
    }
    Dataset::from_rows(&rows, labels).unwrap()
}

/// Relative error with an absolute floor, for gradient checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
