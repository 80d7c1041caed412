//! Ensemble construction over circles of difficulty, and routed prediction.
//!
//! Construction repeatedly fits a member on the current circle, labels the
//! circle's instances with the member's index for the router, retrains the
//! router, and scores the routed ensemble on validation data. A member that
//! does not strictly raise the validation score is rolled back and
//! construction stops. Otherwise the next circle is the member's
//! misclassified training instances plus a seeded carryover of correctly
//! classified ones.

mod build;
mod router;

use std::borrow::Borrow;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataView, InstanceId, Matrix};
use crate::eval::metrics::{Metric, MetricError, MetricId, Prediction};
use crate::learners::{LearnerError, LearnerKind, LearnerSpec, TrainedLearner};

pub use build::{
    fit, fit_greedy, fit_sequential, select_greedy_candidate, CandidateOutcome, EnsembleState,
};
pub use router::{train_router, update_router_dataset, RouterDataset, RouterEntry};

pub const MODEL_FORMAT: &str = "hellsemble.model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HellsembleError {
    #[error("EmptyTrainingSet")]
    EmptyTrainingSet,
    #[error("EmptyValidationSet")]
    EmptyValidationSet,
    #[error("RouterUnsupported: {0} cannot fit more than two classes")]
    RouterUnsupported(LearnerKind),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("DimensionMismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("RouteOutOfRange: router chose circle {0}")]
    RouteOutOfRange(u32),
    #[error("CorruptModel: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sequential,
    Greedy,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sequential => "sequential",
            Mode::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// Clamped train-minus-validation score gap.
    GapClamp,
    Fixed,
}

fn default_alpha_max() -> f64 {
    0.5
}

/// How many correctly classified instances carry over into the next circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaPolicy {
    pub rule: AlphaRule,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default)]
    pub fixed_value: f64,
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        Self {
            rule: AlphaRule::GapClamp,
            alpha_max: default_alpha_max(),
            fixed_value: 0.0,
        }
    }
}

impl AlphaPolicy {
    pub fn fixed(value: f64) -> Self {
        Self {
            rule: AlphaRule::Fixed,
            fixed_value: value,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HellsembleError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(HellsembleError::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {v}"
                )))
            }
        };
        unit("alpha_max", self.alpha_max)?;
        unit("fixed_value", self.fixed_value)
    }
}

fn default_max_iterations() -> usize {
    10
}

fn default_min_subset_size() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HellsembleConfig {
    /// Candidate member specs, in the order the sequential mode consumes them.
    pub candidates: Vec<LearnerSpec>,
    pub router: LearnerSpec,
    pub mode: Mode,
    #[serde(default)]
    pub metric: MetricId,
    #[serde(default)]
    pub alpha_policy: AlphaPolicy,
    /// Iteration cap for the greedy mode.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Construction stops when the next circle would be smaller than this.
    #[serde(default = "default_min_subset_size")]
    pub min_subset_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Keep a non-improving member instead of rolling it back.
    #[serde(default)]
    pub strict_algorithm1: bool,
}

impl HellsembleConfig {
    pub fn new(candidates: Vec<LearnerSpec>, router: LearnerSpec, mode: Mode) -> Self {
        Self {
            candidates,
            router,
            mode,
            metric: MetricId::default(),
            alpha_policy: AlphaPolicy::default(),
            max_iterations: default_max_iterations(),
            min_subset_size: default_min_subset_size(),
            seed: 0,
            strict_algorithm1: false,
        }
    }

    pub fn validate(&self) -> Result<(), HellsembleError> {
        if self.candidates.is_empty() {
            return Err(HellsembleError::InvalidConfig(
                "candidates must not be empty".into(),
            ));
        }
        if !self.router.kind().supports_multiclass() {
            return Err(HellsembleError::RouterUnsupported(self.router.kind()));
        }
        if self.max_iterations == 0 {
            return Err(HellsembleError::InvalidConfig(
                "max_iterations must be positive".into(),
            ));
        }
        if self.min_subset_size == 0 {
            return Err(HellsembleError::InvalidConfig(
                "min_subset_size must be positive".into(),
            ));
        }
        for spec in self.candidates.iter().chain(std::iter::once(&self.router)) {
            spec.params.validate()?;
        }
        self.alpha_policy.validate()?;
        self.metric.resolve()?;
        Ok(())
    }
}

/// One construction step, accepted or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub chosen_spec: LearnerSpec,
    /// Position of the chosen spec in the candidate list.
    pub candidate_index: usize,
    /// Validation score of every candidate tried in this iteration.
    pub candidate_scores: Vec<f64>,
    pub train_size: usize,
    pub misclassified_count: usize,
    pub alpha_used: f64,
    /// Routed ensemble score on the full training data; absent when rejected.
    pub train_score: Option<f64>,
    pub val_score: f64,
    pub accepted: bool,
    /// Instance ids of the circle the member was fitted on.
    pub circle_ids: Vec<InstanceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoMisclassified,
    NoImprovement,
    CandidatesExhausted,
    SubsetTooSmall,
    CircleDidNotShrink,
}

/// Per-call bookkeeping of routed prediction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictTrace {
    pub router_calls: usize,
    pub router_rows: usize,
    /// Prediction calls made on each member.
    pub member_calls: Vec<usize>,
    /// Rows evaluated by each member.
    pub member_rows: Vec<usize>,
}

impl PredictTrace {
    fn new(members: usize) -> Self {
        Self {
            member_calls: vec![0; members],
            member_rows: vec![0; members],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedHellsemble {
    members: Vec<TrainedLearner>,
    router: Option<TrainedLearner>,
    history: Vec<IterationRecord>,
    config: HellsembleConfig,
    router_labels: BTreeMap<InstanceId, u32>,
    stop_reason: StopReason,
    n_features: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelArchive<M> {
    format: String,
    version: u32,
    model: M,
}

impl FittedHellsemble {
    pub fn members(&self) -> &[TrainedLearner] {
        &self.members
    }

    pub fn router(&self) -> Option<&TrainedLearner> {
        self.router.as_ref()
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn config(&self) -> &HellsembleConfig {
        &self.config
    }

    /// Final circle label of every instance that entered construction.
    pub fn router_labels(&self) -> &BTreeMap<InstanceId, u32> {
        &self.router_labels
    }

    pub fn router_histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for &c in self.router_labels.values() {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop_reason
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Best accepted validation score.
    pub fn best_val_score(&self) -> f64 {
        self.history
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.val_score)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_dims(&self, x: &Matrix) -> Result<(), HellsembleError> {
        if x.cols() != self.n_features && x.rows() > 0 {
            return Err(HellsembleError::DimensionMismatch {
                expected: self.n_features,
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Member index (0-based) chosen for each row.
    pub fn route(&self, x: &Matrix) -> Result<Vec<usize>, HellsembleError> {
        self.check_dims(x)?;
        let mut trace = PredictTrace::new(self.members.len());
        route_rows(self.members.len(), self.router.as_ref(), x, &mut trace)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u32>, HellsembleError> {
        self.predict_traced(x).map(|(p, _)| p)
    }

    /// [`FittedHellsemble::predict`] plus a record of every router and
    /// member call it made.
    pub fn predict_traced(&self, x: &Matrix) -> Result<(Vec<u32>, PredictTrace), HellsembleError> {
        self.check_dims(x)?;
        let mut trace = PredictTrace::new(self.members.len());
        let out = dispatch(
            &self.members,
            self.router.as_ref(),
            x,
            &mut trace,
            |m, sub| Ok(m.predict(sub)?),
        )?;
        Ok((out, trace))
    }

    /// Two columns, `P(label 0)` and `P(label 1)`, from the routed member.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, HellsembleError> {
        self.check_dims(x)?;
        let mut trace = PredictTrace::new(self.members.len());
        let rows = dispatch(
            &self.members,
            self.router.as_ref(),
            x,
            &mut trace,
            binary_proba,
        )?;
        let data = rows.into_iter().flat_map(|r: [f64; 2]| r).collect();
        Matrix::new(x.rows(), 2, data).map_err(|e| HellsembleError::CorruptModel(e.to_string()))
    }

    /// Self-describing JSON archive of config, members, router and history.
    pub fn to_archive(&self) -> String {
        serde_json::to_string(&ModelArchive {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            model: self,
        })
        .expect("fitted ensembles serialize")
    }

    pub fn from_archive(text: &str) -> Result<Self, HellsembleError> {
        let archive: ModelArchive<FittedHellsemble> =
            serde_json::from_str(text).map_err(|e| HellsembleError::CorruptModel(e.to_string()))?;
        if archive.format != MODEL_FORMAT || archive.version != MODEL_FORMAT_VERSION {
            return Err(HellsembleError::CorruptModel(format!(
                "unsupported format {} v{}",
                archive.format, archive.version
            )));
        }
        let model = archive.model;
        if model.members.is_empty() {
            return Err(HellsembleError::CorruptModel("no members".into()));
        }
        if let Some(router) = &model.router {
            let expected: Vec<u32> = (1..=model.members.len() as u32).collect();
            if router.class_set() != expected.as_slice() {
                return Err(HellsembleError::CorruptModel(
                    "router classes do not match members".into(),
                ));
            }
        }
        Ok(model)
    }
}

fn binary_proba(m: &TrainedLearner, x: &Matrix) -> Result<Vec<[f64; 2]>, HellsembleError> {
    let p0 = m.proba_of(x, 0)?;
    let p1 = m.proba_of(x, 1)?;
    Ok(p0.into_iter().zip(p1).map(|(a, b)| [a, b]).collect())
}

/// Router decision per row as a 0-based member index; member 0 when there is
/// no router.
fn route_rows(
    n_members: usize,
    router: Option<&TrainedLearner>,
    x: &Matrix,
    trace: &mut PredictTrace,
) -> Result<Vec<usize>, HellsembleError> {
    let Some(router) = router else {
        return Ok(vec![0; x.rows()]);
    };
    trace.router_calls += 1;
    trace.router_rows += x.rows();
    router
        .predict(x)?
        .into_iter()
        .map(|circle| {
            if circle >= 1 && (circle as usize) <= n_members {
                Ok(circle as usize - 1)
            } else {
                Err(HellsembleError::RouteOutOfRange(circle))
            }
        })
        .collect()
}

/// Routes rows, then calls `f` once per member on exactly the rows routed to
/// it and scatters the results back into row order.
fn dispatch<M, T, F>(
    members: &[M],
    router: Option<&TrainedLearner>,
    x: &Matrix,
    trace: &mut PredictTrace,
    f: F,
) -> Result<Vec<T>, HellsembleError>
where
    M: Borrow<TrainedLearner>,
    T: Clone + Default,
    F: Fn(&TrainedLearner, &Matrix) -> Result<Vec<T>, HellsembleError>,
{
    let routes = route_rows(members.len(), router, x, trace)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for (row, &m) in routes.iter().enumerate() {
        groups[m].push(row);
    }
    let mut out = vec![T::default(); x.rows()];
    for (j, rows) in groups.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        trace.member_calls[j] += 1;
        trace.member_rows[j] += rows.len();
        let values = f(members[j].borrow(), &x.select_rows(rows))?;
        for (&row, v) in rows.iter().zip(values) {
            out[row] = v;
        }
    }
    Ok(out)
}

/// Scores the routed ensemble on `data`. Label metrics see each row's
/// assigned member prediction; score metrics see its positive-class
/// probability, assembled into one vector before scoring.
pub fn evaluate_ensemble<M, V>(
    members: &[M],
    router: Option<&TrainedLearner>,
    data: &V,
    metric: &dyn Metric,
) -> Result<f64, HellsembleError>
where
    M: Borrow<TrainedLearner>,
    V: DataView + ?Sized,
{
    if members.is_empty() {
        return Err(HellsembleError::InvalidConfig(
            "no members to evaluate".into(),
        ));
    }
    let x = data.feature_matrix();
    let truth: Vec<u32> = (0..data.n_rows())
        .map(|i| u32::from(data.label(i)))
        .collect();
    let mut trace = PredictTrace::new(members.len());
    let score = if metric.uses_scores() {
        let p = dispatch(members, router, &x, &mut trace, |m, sub| {
            Ok(m.proba_of(sub, 1)?)
        })?;
        metric.score(&truth, Prediction::Scores(&p))?
    } else {
        let p = dispatch(
            members,
            router,
            &x,
            &mut trace,
            |m, sub| Ok(m.predict(sub)?),
        )?;
        metric.score(&truth, Prediction::Labels(&p))?
    };
    Ok(score)
}

/// [`evaluate_ensemble`] with the metric looked up by name.
pub fn evaluate_ensemble_by_id<M, V>(
    members: &[M],
    router: Option<&TrainedLearner>,
    data: &V,
    metric: &MetricId,
) -> Result<f64, HellsembleError>
where
    M: Borrow<TrainedLearner>,
    V: DataView + ?Sized,
{
    evaluate_ensemble(members, router, data, metric.resolve()?.as_ref())
}

/// Carryover fraction for the next circle.
pub fn compute_alpha(train_score: f64, val_score: f64, policy: &AlphaPolicy) -> f64 {
    match policy.rule {
        AlphaRule::GapClamp => (train_score - val_score).clamp(0.0, policy.alpha_max),
        AlphaRule::Fixed => policy.fixed_value,
    }
}

/// Number of correct instances carried over: `ceil(alpha * correct)`, with
/// products within 1e-9 of an integer treated as that integer.
pub fn carryover_count(alpha: f64, correct: usize) -> usize {
    let raw = alpha * correct as f64;
    let nearest = raw.round();
    let count = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (count.max(0.0) as usize).min(correct)
}

/// Ids of the next circle: every misclassified instance of `circle` plus a
/// seeded uniform sample, without replacement, of `ceil(alpha * #correct)`
/// correctly classified ones. Returned in ascending id order.
pub fn partition_next<V: DataView + ?Sized>(
    circle: &V,
    predictions: &[u32],
    alpha: f64,
    seed: u64,
) -> Result<Vec<InstanceId>, HellsembleError> {
    if predictions.len() != circle.n_rows() {
        return Err(HellsembleError::Learner(LearnerError::LengthMismatch {
            rows: circle.n_rows(),
            labels: predictions.len(),
        }));
    }
    let mut next = Vec::new();
    let mut correct = Vec::new();
    for (i, &p) in predictions.iter().enumerate() {
        if p == u32::from(circle.label(i)) {
            correct.push(circle.id(i));
        } else {
            next.push(circle.id(i));
        }
    }
    let take = carryover_count(alpha, correct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    next.extend(correct.choose_multiple(&mut rng, take).copied());
    next.sort_unstable();
    Ok(next)
}

/// Rows of a base view selected by position, used as the current circle.
pub(crate) struct RowsView<'a, V: ?Sized> {
    pub base: &'a V,
    pub rows: &'a [usize],
}

impl<V: DataView + ?Sized> DataView for RowsView<'_, V> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn n_features(&self) -> usize {
        self.base.n_features()
    }

    fn row(&self, i: usize) -> &[f64] {
        self.base.row(self.rows[i])
    }

    fn label(&self, i: usize) -> u8 {
        self.base.label(self.rows[i])
    }

    fn id(&self, i: usize) -> InstanceId {
        self.base.id(self.rows[i])
    }
}
