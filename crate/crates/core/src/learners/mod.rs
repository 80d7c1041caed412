//! Base learners behind one fit/predict interface.
//!
//! Every kind serves as a binary ensemble member. `knn`, `decision_tree`,
//! `random_forest` and `mlp` also accept any number of classes and can act
//! as routers. A training set holding a single class yields a constant
//! predictor for every kind.

mod boosting;
mod forest;
mod knn;
mod logistic;
mod mlp;
mod naive_bayes;
mod scaling;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::data::{DataView, Matrix};

pub use boosting::BoostedModel;
pub use forest::ForestModel;
pub use knn::KnnModel;
pub use logistic::{logistic_gradient, logistic_loss, sigmoid, LogisticGradient, LogisticModel};
pub use mlp::{MlpModel, MlpParams};
pub use naive_bayes::GaussianNbModel;
pub use scaling::Standardizer;
pub use tree::{gini_impurity, Node, Split, TreeModel};

pub const LEARNER_FORMAT: &str = "hellsemble.learner";
pub const LEARNER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("EmptyTrainingSet")]
    EmptyTrainingSet,
    #[error("EmptyInput")]
    EmptyInput,
    #[error("LengthMismatch: {rows} feature rows, {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("DimensionMismatch: model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("UnsupportedClassCount: {kind} is binary-only, got {classes} classes")]
    UnsupportedClassCount { kind: LearnerKind, classes: usize },
    #[error("InvalidHyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("CorruptModel: {0}")]
    CorruptModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Knn,
    GaussianNb,
    LogisticRegression,
    DecisionTree,
    RandomForest,
    GradientBoostedTrees,
    Mlp,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Knn => "knn",
            LearnerKind::GaussianNb => "gaussian_nb",
            LearnerKind::LogisticRegression => "logistic_regression",
            LearnerKind::DecisionTree => "decision_tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::GradientBoostedTrees => "gradient_boosted_trees",
            LearnerKind::Mlp => "mlp",
        }
    }

    pub fn supports_multiclass(self) -> bool {
        matches!(
            self,
            LearnerKind::Knn
                | LearnerKind::DecisionTree
                | LearnerKind::RandomForest
                | LearnerKind::Mlp
        )
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_k() -> usize {
    5
}
fn default_l2() -> f64 {
    1e-4
}
fn default_lr_epochs() -> usize {
    300
}
fn default_lr_rate() -> f64 {
    0.5
}
fn default_max_depth() -> usize {
    8
}
fn default_min_leaf() -> usize {
    1
}
fn default_n_trees() -> usize {
    100
}
fn default_n_rounds() -> usize {
    100
}
fn default_boost_rate() -> f64 {
    0.1
}
fn default_boost_depth() -> usize {
    3
}
fn default_hidden() -> usize {
    32
}
fn default_mlp_epochs() -> usize {
    200
}
fn default_mlp_rate() -> f64 {
    0.01
}
fn default_batch() -> usize {
    32
}

/// Kind-specific hyperparameters. Omitted fields take the documented
/// defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerParams {
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    GaussianNb {},
    LogisticRegression {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_lr_epochs")]
        epochs: usize,
        #[serde(default = "default_lr_rate")]
        learning_rate: f64,
    },
    DecisionTree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
    RandomForest {
        #[serde(default = "default_n_trees")]
        n_trees: usize,
        /// Fraction of features examined per node; `sqrt(d) / d` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feature_fraction: Option<f64>,
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
    GradientBoostedTrees {
        #[serde(default = "default_n_rounds")]
        n_rounds: usize,
        #[serde(default = "default_boost_rate")]
        learning_rate: f64,
        #[serde(default = "default_boost_depth")]
        max_depth: usize,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden_units: usize,
        #[serde(default = "default_mlp_epochs")]
        epochs: usize,
        #[serde(default = "default_mlp_rate")]
        learning_rate: f64,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

impl LearnerParams {
    pub fn defaults(kind: LearnerKind) -> Self {
        let json = serde_json::json!({ "kind": kind.as_str() });
        serde_json::from_value(json).expect("every kind has full defaults")
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::Knn { .. } => LearnerKind::Knn,
            LearnerParams::GaussianNb {} => LearnerKind::GaussianNb,
            LearnerParams::LogisticRegression { .. } => LearnerKind::LogisticRegression,
            LearnerParams::DecisionTree { .. } => LearnerKind::DecisionTree,
            LearnerParams::RandomForest { .. } => LearnerKind::RandomForest,
            LearnerParams::GradientBoostedTrees { .. } => LearnerKind::GradientBoostedTrees,
            LearnerParams::Mlp { .. } => LearnerKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(LearnerError::InvalidHyperparameter(format!(
                    "{name} must be positive"
                )))
            } else {
                Ok(())
            }
        };
        let rate = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(LearnerError::InvalidHyperparameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            LearnerParams::Knn { k } => positive("k", k),
            LearnerParams::GaussianNb {} => Ok(()),
            LearnerParams::LogisticRegression {
                l2,
                epochs,
                learning_rate,
            } => {
                if !(l2.is_finite() && l2 >= 0.0) {
                    return Err(LearnerError::InvalidHyperparameter(format!(
                        "l2 must be non-negative, got {l2}"
                    )));
                }
                positive("epochs", epochs)?;
                rate("learning_rate", learning_rate)
            }
            LearnerParams::DecisionTree {
                max_depth,
                min_leaf,
            } => {
                positive("max_depth", max_depth)?;
                positive("min_leaf", min_leaf)
            }
            LearnerParams::RandomForest {
                n_trees,
                feature_fraction,
                max_depth,
                min_leaf,
            } => {
                positive("n_trees", n_trees)?;
                positive("max_depth", max_depth)?;
                positive("min_leaf", min_leaf)?;
                match feature_fraction {
                    Some(f) if !(f > 0.0 && f <= 1.0) => Err(LearnerError::InvalidHyperparameter(
                        format!("feature_fraction must be in (0, 1], got {f}"),
                    )),
                    _ => Ok(()),
                }
            }
            LearnerParams::GradientBoostedTrees {
                n_rounds,
                learning_rate,
                max_depth,
            } => {
                positive("n_rounds", n_rounds)?;
                positive("max_depth", max_depth)?;
                rate("learning_rate", learning_rate)
            }
            LearnerParams::Mlp {
                hidden_units,
                epochs,
                learning_rate,
                batch_size,
            } => {
                positive("hidden_units", hidden_units)?;
                positive("epochs", epochs)?;
                positive("batch_size", batch_size)?;
                rate("learning_rate", learning_rate)
            }
        }
    }
}

/// Learner kind, hyperparameters and seed. Serialized flat, e.g.
/// `{"kind": "knn", "k": 3, "seed": 7}`; a missing seed reads as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Map<String, Value>", into = "Map<String, Value>")]
pub struct LearnerSpec {
    pub params: LearnerParams,
    pub seed: u64,
}

impl TryFrom<Map<String, Value>> for LearnerSpec {
    type Error = String;

    fn try_from(mut map: Map<String, Value>) -> Result<Self, Self::Error> {
        let seed = match map.remove("seed") {
            None => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| format!("seed must be a non-negative integer, got {v}"))?,
        };
        let params: LearnerParams =
            serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?;
        params.validate().map_err(|e| e.to_string())?;
        Ok(Self { params, seed })
    }
}

impl From<LearnerSpec> for Map<String, Value> {
    fn from(spec: LearnerSpec) -> Self {
        let mut map = match serde_json::to_value(&spec.params) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("learner params serialize to an object"),
        };
        map.insert("seed".into(), Value::from(spec.seed));
        map
    }
}

impl LearnerSpec {
    pub fn new(params: LearnerParams) -> Self {
        Self { params, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn defaults(kind: LearnerKind) -> Self {
        Self::new(LearnerParams::defaults(kind))
    }

    pub fn knn(k: usize) -> Self {
        Self::new(LearnerParams::Knn { k })
    }

    pub fn gaussian_nb() -> Self {
        Self::defaults(LearnerKind::GaussianNb)
    }

    pub fn logistic_regression() -> Self {
        Self::defaults(LearnerKind::LogisticRegression)
    }

    pub fn decision_tree() -> Self {
        Self::defaults(LearnerKind::DecisionTree)
    }

    pub fn random_forest() -> Self {
        Self::defaults(LearnerKind::RandomForest)
    }

    pub fn gradient_boosted_trees() -> Self {
        Self::defaults(LearnerKind::GradientBoostedTrees)
    }

    pub fn mlp() -> Self {
        Self::defaults(LearnerKind::Mlp)
    }

    pub fn kind(&self) -> LearnerKind {
        self.params.kind()
    }

    /// Short display name: the kind, followed by every hyperparameter that
    /// differs from its default (`k` is always shown for k-NN).
    pub fn name(&self) -> String {
        let kind = self.kind();
        let to_map = |p: &LearnerParams| match serde_json::to_value(p) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        let defaults = to_map(&LearnerParams::defaults(kind));
        let ours = to_map(&self.params);
        let mut parts: BTreeMap<&str, String> = BTreeMap::new();
        for (key, value) in &ours {
            if key == "kind" {
                continue;
            }
            if kind == LearnerKind::Knn || defaults.get(key) != Some(value) {
                parts.insert(key, value.to_string());
            }
        }
        if parts.is_empty() {
            kind.as_str().to_string()
        } else {
            let inner: Vec<String> = parts.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{}({})", kind.as_str(), inner.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "state", rename_all = "snake_case")]
pub enum FittedModel {
    Constant,
    Knn(KnnModel),
    GaussianNb(GaussianNbModel),
    LogisticRegression(LogisticModel),
    DecisionTree(TreeModel),
    RandomForest(ForestModel),
    GradientBoostedTrees(BoostedModel),
    Mlp(MlpModel),
}

/// A fitted model. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLearner {
    spec: LearnerSpec,
    class_set: Vec<u32>,
    n_features: usize,
    model: FittedModel,
}

#[derive(Serialize, Deserialize)]
struct LearnerEnvelope<L> {
    format: String,
    version: u32,
    learner: L,
}

/// Fits `spec` on rows of `x` with labels `labels`.
pub fn fit(spec: &LearnerSpec, x: &Matrix, labels: &[u32]) -> Result<TrainedLearner, LearnerError> {
    spec.params.validate()?;
    if x.rows() == 0 {
        return Err(LearnerError::EmptyTrainingSet);
    }
    if labels.len() != x.rows() {
        return Err(LearnerError::LengthMismatch {
            rows: x.rows(),
            labels: labels.len(),
        });
    }
    let mut class_set = labels.to_vec();
    class_set.sort_unstable();
    class_set.dedup();
    let n_classes = class_set.len();
    let kind = spec.kind();
    if n_classes > 2 && !kind.supports_multiclass() {
        return Err(LearnerError::UnsupportedClassCount {
            kind,
            classes: n_classes,
        });
    }
    let classes: Vec<usize> = labels
        .iter()
        .map(|l| class_set.binary_search(l).expect("label is in class set"))
        .collect();

    let model = if n_classes == 1 {
        FittedModel::Constant
    } else {
        match spec.params {
            LearnerParams::Knn { k } => FittedModel::Knn(KnnModel::fit(x, &classes, n_classes, k)),
            LearnerParams::GaussianNb {} => {
                FittedModel::GaussianNb(GaussianNbModel::fit(x, &classes, n_classes))
            }
            LearnerParams::LogisticRegression {
                l2,
                epochs,
                learning_rate,
            } => FittedModel::LogisticRegression(LogisticModel::fit(
                x,
                &classes,
                l2,
                epochs,
                learning_rate,
            )),
            LearnerParams::DecisionTree {
                max_depth,
                min_leaf,
            } => {
                let rows: Vec<usize> = (0..x.rows()).collect();
                let params = tree::GrowParams {
                    max_depth,
                    min_leaf,
                    max_features: None,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                FittedModel::DecisionTree(TreeModel::fit(
                    x, &classes, n_classes, &rows, params, &mut rng,
                ))
            }
            LearnerParams::RandomForest {
                n_trees,
                feature_fraction,
                max_depth,
                min_leaf,
            } => FittedModel::RandomForest(ForestModel::fit(
                x,
                &classes,
                n_classes,
                n_trees,
                feature_fraction,
                max_depth,
                min_leaf,
                spec.seed,
            )),
            LearnerParams::GradientBoostedTrees {
                n_rounds,
                learning_rate,
                max_depth,
            } => FittedModel::GradientBoostedTrees(BoostedModel::fit(
                x,
                &classes,
                n_rounds,
                learning_rate,
                max_depth,
            )),
            LearnerParams::Mlp {
                hidden_units,
                epochs,
                learning_rate,
                batch_size,
            } => FittedModel::Mlp(MlpModel::fit(
                x,
                &classes,
                n_classes,
                hidden_units,
                epochs,
                learning_rate,
                batch_size,
                spec.seed,
            )),
        }
    };
    Ok(TrainedLearner {
        spec: spec.clone(),
        class_set,
        n_features: x.cols(),
        model,
    })
}

/// Fits `spec` on a binary dataset view.
pub fn fit_view<V: DataView + ?Sized>(
    spec: &LearnerSpec,
    data: &V,
) -> Result<TrainedLearner, LearnerError> {
    let labels: Vec<u32> = (0..data.n_rows())
        .map(|i| u32::from(data.label(i)))
        .collect();
    fit(spec, &data.feature_matrix(), &labels)
}

impl TrainedLearner {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    /// Sorted distinct labels seen at fit time.
    pub fn class_set(&self) -> &[u32] {
        &self.class_set
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    fn check_dims(&self, x: &Matrix) -> Result<(), LearnerError> {
        if x.cols() != self.n_features && x.rows() > 0 {
            return Err(LearnerError::DimensionMismatch {
                expected: self.n_features,
                found: x.cols(),
            });
        }
        Ok(())
    }

    fn proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut p = match &self.model {
            FittedModel::Constant => vec![1.0],
            FittedModel::Knn(m) => m.proba_row(row),
            FittedModel::GaussianNb(m) => m.proba_row(row),
            FittedModel::LogisticRegression(m) => m.proba_row(row),
            FittedModel::DecisionTree(m) => m.proba_row(row).to_vec(),
            FittedModel::RandomForest(m) => m.proba_row(row),
            FittedModel::GradientBoostedTrees(m) => m.proba_row(row),
            FittedModel::Mlp(m) => m.proba_row(row),
        };
        let total: f64 = p.iter().sum();
        if total > 0.0 && total != 1.0 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        p
    }

    /// Row-stochastic matrix with one column per entry of the class set.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, LearnerError> {
        self.check_dims(x)?;
        let mut data = Vec::with_capacity(x.rows() * self.class_set.len());
        for row in x.iter_rows() {
            data.extend(self.proba_row(row));
        }
        Matrix::new(x.rows(), self.class_set.len(), data)
            .map_err(|e| LearnerError::CorruptModel(e.to_string()))
    }

    /// Most probable label per row; ties go to the smaller label.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u32>, LearnerError> {
        self.check_dims(x)?;
        Ok(x.iter_rows()
            .map(|row| self.class_set[argmax(&self.proba_row(row))])
            .collect())
    }

    /// Probability of `label` per row; 0 when the label was never seen.
    pub fn proba_of(&self, x: &Matrix, label: u32) -> Result<Vec<f64>, LearnerError> {
        self.check_dims(x)?;
        Ok(match self.class_set.binary_search(&label) {
            Ok(c) => x.iter_rows().map(|row| self.proba_row(row)[c]).collect(),
            Err(_) => vec![0.0; x.rows()],
        })
    }

    /// Versioned JSON blob carrying the spec, class set and fitted state.
    pub fn to_blob(&self) -> String {
        serde_json::to_string(&LearnerEnvelope {
            format: LEARNER_FORMAT.to_string(),
            version: LEARNER_FORMAT_VERSION,
            learner: self,
        })
        .expect("fitted learners serialize")
    }

    pub fn from_blob(blob: &str) -> Result<Self, LearnerError> {
        let env: LearnerEnvelope<TrainedLearner> =
            serde_json::from_str(blob).map_err(|e| LearnerError::CorruptModel(e.to_string()))?;
        if env.format != LEARNER_FORMAT || env.version != LEARNER_FORMAT_VERSION {
            return Err(LearnerError::CorruptModel(format!(
                "unsupported format {} v{}",
                env.format, env.version
            )));
        }
        Ok(env.learner)
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}
