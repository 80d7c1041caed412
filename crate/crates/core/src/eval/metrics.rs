//! Scoring functions and the metric registry.
//!
//! Built-ins are `accuracy` (on labels) and `roc_auc` (on positive-class
//! scores). Additional metrics can be registered under a name at runtime and
//! then referenced from configs by that name.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("LengthMismatch: {truth} truth values, {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("EmptyInput")]
    EmptyInput,
    #[error("SingleClassTruth: roc_auc needs both classes")]
    SingleClassTruth,
    #[error("MetricUnknown: `{0}`")]
    MetricUnknown(String),
    #[error("MetricInput: `{0}` cannot score this kind of prediction")]
    WrongInput(String),
    #[error("MetricExists: `{0}` is already registered")]
    AlreadyRegistered(String),
}

/// What an ensemble hands to a metric.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    Labels(&'a [u32]),
    /// Positive-class probabilities.
    Scores(&'a [f64]),
}

pub trait Metric: Send + Sync {
    /// Whether the metric consumes positive-class scores rather than labels.
    fn uses_scores(&self) -> bool {
        false
    }

    /// Maps truth and prediction to a value in `[0, 1]`, higher is better.
    fn score(&self, truth: &[u32], prediction: Prediction<'_>) -> Result<f64, MetricError>;
}

/// Name of a registered metric.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricId(pub String);

impl MetricId {
    pub fn accuracy() -> Self {
        MetricId("accuracy".into())
    }

    pub fn roc_auc() -> Self {
        MetricId("roc_auc".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn resolve(&self) -> Result<Arc<dyn Metric>, MetricError> {
        registry()
            .read()
            .expect("metric registry poisoned")
            .get(&self.0)
            .cloned()
            .ok_or_else(|| MetricError::MetricUnknown(self.0.clone()))
    }
}

impl Default for MetricId {
    fn default() -> Self {
        Self::accuracy()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_lengths(truth: usize, predicted: usize) -> Result<(), MetricError> {
    if truth != predicted {
        return Err(MetricError::LengthMismatch { truth, predicted });
    }
    if truth == 0 {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(truth: &[u32], predicted: &[u32]) -> Result<f64, MetricError> {
    check_lengths(truth.len(), predicted.len())?;
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Area under the ROC curve for label 1 as the positive class: the
/// probability that a random positive scores above a random negative, ties
/// counting one half. Computed from mid-ranks (Mann-Whitney U).
pub fn roc_auc(truth: &[u32], scores: &[f64]) -> Result<f64, MetricError> {
    check_lengths(truth.len(), scores.len())?;
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps every quantity an integer
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their average
        let twice_mid = (start + 1 + end) as u128;
        let positives = order[start..end].iter().filter(|&&i| truth[i] == 1).count() as u128;
        twice_rank_sum += twice_mid * positives;
        start = end;
    }
    let p = n_pos as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

struct Accuracy;

impl Metric for Accuracy {
    fn score(&self, truth: &[u32], prediction: Prediction<'_>) -> Result<f64, MetricError> {
        match prediction {
            Prediction::Labels(p) => accuracy(truth, p),
            Prediction::Scores(_) => Err(MetricError::WrongInput("accuracy".into())),
        }
    }
}

struct RocAuc;

impl Metric for RocAuc {
    fn uses_scores(&self) -> bool {
        true
    }

    fn score(&self, truth: &[u32], prediction: Prediction<'_>) -> Result<f64, MetricError> {
        match prediction {
            Prediction::Scores(s) => roc_auc(truth, s),
            Prediction::Labels(_) => Err(MetricError::WrongInput("roc_auc".into())),
        }
    }
}

type Registry = RwLock<HashMap<String, Arc<dyn Metric>>>;

fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut m: HashMap<String, Arc<dyn Metric>> = HashMap::new();
        m.insert("accuracy".into(), Arc::new(Accuracy));
        m.insert("roc_auc".into(), Arc::new(RocAuc));
        RwLock::new(m)
    })
}

/// Makes a user metric available under `name`. Names are never replaced.
pub fn register_metric(name: &str, metric: Arc<dyn Metric>) -> Result<MetricId, MetricError> {
    let mut reg = registry().write().expect("metric registry poisoned");
    if reg.contains_key(name) {
        return Err(MetricError::AlreadyRegistered(name.into()));
    }
    reg.insert(name.into(), metric);
    Ok(MetricId(name.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert_eq!(accuracy(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[], &[]), Err(MetricError::EmptyInput));
        assert!(matches!(
            accuracy(&[0, 1], &[0]),
            Err(MetricError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn roc_auc_examples() {
        assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0, 1, 0, 1], &[0.3; 4]).unwrap(), 0.5);
        assert_eq!(
            roc_auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]).unwrap(),
            0.75
        );
        assert_eq!(
            roc_auc(&[1, 1], &[0.1, 0.2]),
            Err(MetricError::SingleClassTruth)
        );
    }

    #[test]
    fn registry_resolves_builtins_and_user_metrics() {
        assert!(MetricId::accuracy().resolve().is_ok());
        assert!(MetricId::roc_auc().resolve().unwrap().uses_scores());
        assert_eq!(
            MetricId("nope".into()).resolve().err(),
            Some(MetricError::MetricUnknown("nope".into()))
        );

        struct Recall;
        impl Metric for Recall {
            fn score(&self, truth: &[u32], p: Prediction<'_>) -> Result<f64, MetricError> {
                let Prediction::Labels(p) = p else {
                    return Err(MetricError::WrongInput("recall".into()));
                };
                let pos = truth.iter().filter(|&&t| t == 1).count();
                let hit = truth
                    .iter()
                    .zip(p)
                    .filter(|&(&t, &q)| t == 1 && q == 1)
                    .count();
                Ok(hit as f64 / pos.max(1) as f64)
            }
        }
        let id = register_metric("test_recall", Arc::new(Recall)).unwrap();
        let m = id.resolve().unwrap();
        assert_eq!(
            m.score(&[1, 1, 0], Prediction::Labels(&[1, 0, 0])).unwrap(),
            0.5
        );
        assert!(register_metric("accuracy", Arc::new(Recall)).is_err());
    }
}
