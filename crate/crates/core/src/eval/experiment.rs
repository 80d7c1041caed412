//! The benchmark grid: every (suite, router, mode) Hellsemble per dataset,
//! plus each distinct base spec trained on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{MetricError, MetricId};
use crate::data::{stratified_split, Dataset, IndexSubset, SplitSpec};
use crate::hellsemble::{
    self, evaluate_ensemble, AlphaPolicy, HellsembleConfig, IterationRecord, Mode,
};
use crate::learners::{self, LearnerSpec};
use crate::seed::derive_seed_str;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("UnknownConfiguration: {0}")]
    UnknownConfiguration(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A named list of candidate specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    pub specs: Vec<LearnerSpec>,
}

impl Suite {
    pub fn new(name: &str, specs: Vec<LearnerSpec>) -> Self {
        Self {
            name: name.into(),
            specs,
        }
    }
}

/// Held-out fractions: `test` of each dataset, then `validation` of the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub test: f64,
    pub validation: f64,
}

impl Default for Splits {
    fn default() -> Self {
        Self {
            test: 0.2,
            validation: 0.25,
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_max_iterations() -> usize {
    10
}

fn default_min_subset_size() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default = "default_routers")]
    pub routers: Vec<LearnerSpec>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub splits: Splits,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub metric: MetricId,
    #[serde(default)]
    pub alpha_policy: AlphaPolicy,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_min_subset_size")]
    pub min_subset_size: usize,
    /// Measure wall time per cell. Off by default so reports are
    /// byte-identical across runs.
    #[serde(default)]
    pub record_wall_time: bool,
}

/// The four suites of the reference grid.
pub fn default_suites() -> Vec<Suite> {
    let suite1 = vec![
        LearnerSpec::knn(5),
        LearnerSpec::logistic_regression(),
        LearnerSpec::decision_tree(),
        LearnerSpec::gaussian_nb(),
    ];
    let suite2 = vec![
        LearnerSpec::random_forest(),
        LearnerSpec::gradient_boosted_trees(),
        LearnerSpec::mlp(),
    ];
    let suite3 = vec![
        LearnerSpec::knn(3),
        LearnerSpec::knn(5),
        LearnerSpec::decision_tree(),
        LearnerSpec::gaussian_nb(),
    ];
    let mut suite4: Vec<LearnerSpec> = Vec::new();
    for spec in suite1.iter().chain(&suite2).chain(&suite3) {
        if !suite4.contains(spec) {
            suite4.push(spec.clone());
        }
    }
    vec![
        Suite::new("suite1", suite1),
        Suite::new("suite2", suite2),
        Suite::new("suite3", suite3),
        Suite::new("suite4", suite4),
    ]
}

pub fn default_routers() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::knn(3),
        LearnerSpec::knn(5),
        LearnerSpec::mlp(),
        LearnerSpec::random_forest(),
    ]
}

pub fn default_modes() -> Vec<Mode> {
    vec![Mode::Sequential, Mode::Greedy]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suites: default_suites(),
            routers: default_routers(),
            modes: default_modes(),
            splits: Splits::default(),
            seed: default_seed(),
            metric: MetricId::default(),
            alpha_policy: AlphaPolicy::default(),
            max_iterations: default_max_iterations(),
            min_subset_size: default_min_subset_size(),
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: &str| Err(ExperimentError::InvalidConfig(m.into()));
        if self.suites.is_empty() {
            return invalid("suites must not be empty");
        }
        if self.routers.is_empty() {
            return invalid("routers must not be empty");
        }
        if self.modes.is_empty() {
            return invalid("modes must not be empty");
        }
        let mut names = BTreeSet::new();
        for suite in &self.suites {
            if suite.specs.is_empty() {
                return invalid(&format!("suite `{}` has no specs", suite.name));
            }
            if !names.insert(suite.name.as_str()) {
                return invalid(&format!("duplicate suite name `{}`", suite.name));
            }
        }
        let routers: BTreeSet<String> = self.routers.iter().map(LearnerSpec::name).collect();
        if routers.len() != self.routers.len() {
            return invalid("duplicate router");
        }
        let modes: BTreeSet<&str> = self.modes.iter().map(|m| m.as_str()).collect();
        if modes.len() != self.modes.len() {
            return invalid("duplicate mode");
        }
        for f in [self.splits.test, self.splits.validation] {
            if !(f > 0.0 && f < 1.0) {
                return invalid(&format!("split fraction {f} outside (0, 1)"));
            }
        }
        for spec in self.suites.iter().flat_map(|s| &s.specs) {
            spec.params
                .validate()
                .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        }
        for router in &self.routers {
            if !router.kind().supports_multiclass() {
                return invalid(&format!(
                    "router {} cannot fit more than two classes",
                    router.name()
                ));
            }
            router
                .params
                .validate()
                .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        }
        self.alpha_policy
            .validate()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        self.metric.resolve()?;
        Ok(())
    }

    /// Distinct base specs across all suites, in first-appearance order.
    pub fn base_specs(&self) -> Vec<LearnerSpec> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for spec in self.suites.iter().flat_map(|s| &s.specs) {
            if seen.insert(spec.name()) {
                out.push(spec.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Failed => "failed",
        }
    }
}

/// Condensed construction step for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub chosen: String,
    pub circle_size: usize,
    pub misclassified: usize,
    pub alpha: f64,
    pub val_score: f64,
    pub accepted: bool,
}

impl From<&IterationRecord> for HistoryEntry {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            chosen: r.chosen_spec.name(),
            circle_size: r.train_size,
            misclassified: r.misclassified_count,
            alpha: r.alpha_used,
            val_score: r.val_score,
            accepted: r.accepted,
        }
    }
}

/// One Hellsemble cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub dataset: String,
    pub suite: String,
    pub router: String,
    pub mode: Mode,
    /// Zero for failed cells.
    pub member_count: usize,
    pub multi_model: bool,
    pub test_score: Option<f64>,
    /// Test scores of the suite's specs trained on their own.
    pub baseline_scores: BTreeMap<String, Option<f64>>,
    pub wall_ms: u64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub history: Vec<HistoryEntry>,
}

/// One standalone base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub spec: String,
    pub test_score: Option<f64>,
    pub wall_ms: u64,
    pub status: CellStatus,
    pub error: Option<String>,
}

/// Identifies one grid configuration across datasets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigKey {
    pub suite: String,
    pub router: String,
    pub mode: Mode,
}

impl ConfigKey {
    pub fn new(suite: &str, router: &str, mode: Mode) -> Self {
        Self {
            suite: suite.into(),
            router: router.into(),
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigAggregate {
    #[serde(flatten)]
    pub key: ConfigKey,
    /// Datasets on which the cell succeeded.
    pub datasets: usize,
    pub multi_model_ratio: Option<f64>,
    pub mean_score: Option<f64>,
    /// Mean standalone score of each suite spec over the same datasets.
    pub mean_baseline_scores: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub datasets: Vec<String>,
    pub rows: Vec<EnsembleRow>,
    pub baselines: Vec<BaselineRow>,
    pub aggregates: Vec<ConfigAggregate>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio_of(rows: &[&EnsembleRow]) -> Option<f64> {
    let ok: Vec<_> = rows.iter().filter(|r| r.status == CellStatus::Ok).collect();
    if ok.is_empty() {
        return None;
    }
    let multi = ok.iter().filter(|r| r.member_count > 1).count();
    Some(multi as f64 / ok.len() as f64)
}

/// Fraction of datasets whose ensemble for `key` has more than one member,
/// counted over the cells that succeeded.
pub fn multi_model_ratio(
    report: &ExperimentReport,
    key: &ConfigKey,
) -> Result<f64, ExperimentError> {
    let rows: Vec<&EnsembleRow> = report
        .rows
        .iter()
        .filter(|r| r.suite == key.suite && r.router == key.router && r.mode == key.mode)
        .collect();
    if rows.is_empty() {
        return Err(ExperimentError::UnknownConfiguration(format!(
            "{}/{}/{}",
            key.suite,
            key.router,
            key.mode.as_str()
        )));
    }
    ratio_of(&rows).ok_or_else(|| {
        ExperimentError::UnknownConfiguration(format!(
            "{}/{}/{} has no successful cells",
            key.suite,
            key.router,
            key.mode.as_str()
        ))
    })
}

/// Quotes a field that would otherwise break the row.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_score(score: Option<f64>) -> String {
    score.map(|s| s.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn aggregate(&self, key: &ConfigKey) -> Option<&ConfigAggregate> {
        self.aggregates.iter().find(|a| &a.key == key)
    }

    /// One line per cell, ensembles first, then baselines. Baseline lines
    /// carry the spec name in the suite column, router `none` and mode
    /// `baseline`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,suite,router,mode,member_count,score,wall_ms,status\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.dataset),
                csv_field(&r.suite),
                csv_field(&r.router),
                r.mode.as_str(),
                r.member_count,
                csv_score(r.test_score),
                r.wall_ms,
                r.status.as_str()
            );
        }
        for b in &self.baselines {
            let _ = writeln!(
                out,
                "{},{},none,baseline,1,{},{},{}",
                csv_field(&b.dataset),
                csv_field(&b.spec),
                csv_score(b.test_score),
                b.wall_ms,
                b.status.as_str()
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Parts of a dataset shared by every cell.
struct Prepared {
    train: IndexSubset,
    val: IndexSubset,
    test: IndexSubset,
}

fn prepare(config: &ExperimentConfig, name: &str, data: &Arc<Dataset>) -> Result<Prepared, String> {
    let full = IndexSubset::full(Arc::clone(data));
    let test_split = SplitSpec::new(
        config.splits.test,
        derive_seed_str(config.seed, &[name, "test"]),
    )
    .map_err(|e| e.to_string())?;
    let (test, rest) = stratified_split(&full, &test_split).map_err(|e| e.to_string())?;
    let val_split = SplitSpec::new(
        config.splits.validation,
        derive_seed_str(config.seed, &[name, "validation"]),
    )
    .map_err(|e| e.to_string())?;
    let (val, train) = stratified_split(&rest, &val_split).map_err(|e| e.to_string())?;
    Ok(Prepared { train, val, test })
}

/// Spec with its seed derived from the run seed, dataset and spec name, so a
/// spec gets the same seed as a member and as a baseline.
fn seeded(config: &ExperimentConfig, dataset: &str, spec: &LearnerSpec) -> LearnerSpec {
    spec.clone()
        .with_seed(derive_seed_str(config.seed, &[dataset, &spec.name()]))
}

enum Job {
    Ensemble {
        dataset: usize,
        suite: usize,
        router: usize,
        mode: usize,
    },
    Baseline {
        dataset: usize,
        spec: usize,
    },
}

enum Outcome {
    Ensemble(EnsembleRow),
    Baseline(BaselineRow),
}

fn elapsed_ms(config: &ExperimentConfig, start: Instant) -> u64 {
    if config.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn run_ensemble(
    config: &ExperimentConfig,
    name: &str,
    prepared: &Result<Prepared, String>,
    suite: &Suite,
    router: &LearnerSpec,
    mode: Mode,
) -> EnsembleRow {
    let start = Instant::now();
    let router_name = router.name();
    let mut row = EnsembleRow {
        dataset: name.into(),
        suite: suite.name.clone(),
        router: router_name.clone(),
        mode,
        member_count: 0,
        multi_model: false,
        test_score: None,
        baseline_scores: BTreeMap::new(),
        wall_ms: 0,
        status: CellStatus::Failed,
        error: None,
        history: Vec::new(),
    };
    let result = (|| -> Result<_, String> {
        let p = prepared.as_ref().map_err(Clone::clone)?;
        let candidates = suite
            .specs
            .iter()
            .map(|s| seeded(config, name, s))
            .collect();
        let router_spec = router.clone().with_seed(derive_seed_str(
            config.seed,
            &[name, "router", &router_name],
        ));
        let mut hc = HellsembleConfig::new(candidates, router_spec, mode);
        hc.metric = config.metric.clone();
        hc.alpha_policy = config.alpha_policy;
        hc.max_iterations = config.max_iterations;
        hc.min_subset_size = config.min_subset_size;
        hc.seed = derive_seed_str(
            config.seed,
            &[name, &suite.name, &router_name, mode.as_str()],
        );
        let model = hellsemble::fit(&hc, &p.train, &p.val).map_err(|e| e.to_string())?;
        let metric = config.metric.resolve().map_err(|e| e.to_string())?;
        let score = evaluate_ensemble(model.members(), model.router(), &p.test, metric.as_ref())
            .map_err(|e| e.to_string())?;
        Ok((model, score))
    })();
    match result {
        Ok((model, score)) => {
            row.member_count = model.members().len();
            row.multi_model = row.member_count > 1;
            row.test_score = Some(score);
            row.status = CellStatus::Ok;
            row.history = model.history().iter().map(HistoryEntry::from).collect();
        }
        Err(e) => row.error = Some(e),
    }
    row.wall_ms = elapsed_ms(config, start);
    row
}

fn run_baseline(
    config: &ExperimentConfig,
    name: &str,
    prepared: &Result<Prepared, String>,
    spec: &LearnerSpec,
) -> BaselineRow {
    let start = Instant::now();
    let result = (|| -> Result<f64, String> {
        let p = prepared.as_ref().map_err(Clone::clone)?;
        let model =
            learners::fit_view(&seeded(config, name, spec), &p.train).map_err(|e| e.to_string())?;
        let metric = config.metric.resolve().map_err(|e| e.to_string())?;
        evaluate_ensemble(&[model], None, &p.test, metric.as_ref()).map_err(|e| e.to_string())
    })();
    let (test_score, status, error) = match result {
        Ok(s) => (Some(s), CellStatus::Ok, None),
        Err(e) => (None, CellStatus::Failed, Some(e)),
    };
    BaselineRow {
        dataset: name.into(),
        spec: spec.name(),
        test_score,
        wall_ms: elapsed_ms(config, start),
        status,
        error,
    }
}

/// Runs the grid on the global rayon pool.
pub fn run_experiment(
    config: &ExperimentConfig,
    datasets: &[(String, Arc<Dataset>)],
) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let specs = config.base_specs();
    let prepared: Vec<Result<Prepared, String>> = datasets
        .iter()
        .map(|(name, data)| prepare(config, name, data))
        .collect();

    let mut jobs = Vec::new();
    for dataset in 0..datasets.len() {
        for suite in 0..config.suites.len() {
            for router in 0..config.routers.len() {
                for mode in 0..config.modes.len() {
                    jobs.push(Job::Ensemble {
                        dataset,
                        suite,
                        router,
                        mode,
                    });
                }
            }
        }
        for spec in 0..specs.len() {
            jobs.push(Job::Baseline { dataset, spec });
        }
    }

    // collect keeps job order, so the report does not depend on scheduling
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Ensemble {
                dataset,
                suite,
                router,
                mode,
            } => Outcome::Ensemble(run_ensemble(
                config,
                &datasets[dataset].0,
                &prepared[dataset],
                &config.suites[suite],
                &config.routers[router],
                config.modes[mode],
            )),
            Job::Baseline { dataset, spec } => Outcome::Baseline(run_baseline(
                config,
                &datasets[dataset].0,
                &prepared[dataset],
                &specs[spec],
            )),
        })
        .collect();

    let mut rows = Vec::new();
    let mut baselines = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Ensemble(r) => rows.push(r),
            Outcome::Baseline(b) => baselines.push(b),
        }
    }

    let lookup: BTreeMap<(&str, &str), Option<f64>> = baselines
        .iter()
        .map(|b| ((b.dataset.as_str(), b.spec.as_str()), b.test_score))
        .collect();
    let suite_specs: BTreeMap<&str, Vec<String>> = config
        .suites
        .iter()
        .map(|s| {
            (
                s.name.as_str(),
                s.specs.iter().map(LearnerSpec::name).collect(),
            )
        })
        .collect();
    for row in &mut rows {
        row.baseline_scores = suite_specs[row.suite.as_str()]
            .iter()
            .map(|s| (s.clone(), lookup[&(row.dataset.as_str(), s.as_str())]))
            .collect();
    }

    let mut aggregates = Vec::new();
    for suite in &config.suites {
        for router in &config.routers {
            for &mode in &config.modes {
                let key = ConfigKey::new(&suite.name, &router.name(), mode);
                let cells: Vec<&EnsembleRow> = rows
                    .iter()
                    .filter(|r| {
                        r.suite == key.suite && r.router == key.router && r.mode == key.mode
                    })
                    .collect();
                let ok: Vec<&&EnsembleRow> = cells
                    .iter()
                    .filter(|r| r.status == CellStatus::Ok)
                    .collect();
                let mean_baseline_scores = suite_specs[suite.name.as_str()]
                    .iter()
                    .map(|s| {
                        let m = mean(ok.iter().filter_map(|r| r.baseline_scores[s]));
                        (s.clone(), m)
                    })
                    .collect();
                aggregates.push(ConfigAggregate {
                    datasets: ok.len(),
                    multi_model_ratio: ratio_of(&cells),
                    mean_score: mean(ok.iter().filter_map(|r| r.test_score)),
                    mean_baseline_scores,
                    key,
                });
            }
        }
    }

    Ok(ExperimentReport {
        config: config.clone(),
        datasets: datasets.iter().map(|(n, _)| n.clone()).collect(),
        rows,
        baselines,
        aggregates,
    })
}

/// Runs the grid on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(
    config: &ExperimentConfig,
    datasets: &[(String, Arc<Dataset>)],
    jobs: usize,
) -> Result<ExperimentReport, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    pool.install(|| run_experiment(config, datasets))
}
