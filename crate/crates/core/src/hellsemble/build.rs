use std::collections::HashMap;

use rayon::prelude::*;

use super::{
    compute_alpha, evaluate_ensemble, partition_next, train_router, FittedHellsemble,
    HellsembleConfig, HellsembleError, IterationRecord, Mode, RouterDataset, RowsView, StopReason,
};
use crate::data::{DataView, InstanceId};
use crate::eval::metrics::Metric;
use crate::learners::{self, LearnerSpec, TrainedLearner};
use crate::seed::derive_seed;

/// Accepted members, their router and the router's training labels.
#[derive(Debug, Clone, Default)]
pub struct EnsembleState {
    pub members: Vec<TrainedLearner>,
    pub router: Option<TrainedLearner>,
    pub router_data: RouterDataset,
}

/// A candidate fitted on the current circle together with the tentative
/// router state it was evaluated under.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub index: usize,
    pub model: TrainedLearner,
    pub router: Option<TrainedLearner>,
    pub router_data: RouterDataset,
    pub score: f64,
    /// Scores of every candidate evaluated, in list order.
    pub scores: Vec<f64>,
}

/// Fits every candidate on `circle` (row positions of `train`), extends a
/// copy of `state` with it, retrains the router on the tentative circle
/// labels and scores the result on `val`. Returns the strict argmax; ties go
/// to the earlier candidate. `state` itself is never modified.
#[allow(clippy::too_many_arguments)]
pub fn select_greedy_candidate<T, V>(
    state: &EnsembleState,
    candidates: &[LearnerSpec],
    circle: &[usize],
    train: &T,
    val: &V,
    router_spec: &LearnerSpec,
    metric: &dyn Metric,
) -> Result<CandidateOutcome, HellsembleError>
where
    T: DataView + Sync + ?Sized,
    V: DataView + Sync + ?Sized,
{
    if candidates.is_empty() {
        return Err(HellsembleError::InvalidConfig(
            "candidates must not be empty".into(),
        ));
    }
    let view = RowsView {
        base: train,
        rows: circle,
    };
    let circle_label = state.members.len() as u32 + 1;
    let evaluated: Vec<Result<CandidateOutcome, HellsembleError>> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let model = learners::fit_view(spec, &view)?;
            let mut router_data = state.router_data.clone();
            router_data.assign(circle.iter().map(|&r| (train.id(r), r)), circle_label);
            let router = train_router(&router_data, train, router_spec)?;
            let mut members: Vec<&TrainedLearner> = state.members.iter().collect();
            members.push(&model);
            let score = evaluate_ensemble(&members, router.as_ref(), val, metric)?;
            Ok(CandidateOutcome {
                index,
                model,
                router,
                router_data,
                score,
                scores: Vec::new(),
            })
        })
        .collect();

    let mut best: Option<CandidateOutcome> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for outcome in evaluated {
        let outcome = outcome?;
        scores.push(outcome.score);
        if best.as_ref().is_none_or(|b| outcome.score > b.score) {
            best = Some(outcome);
        }
    }
    let mut best = best.expect("at least one candidate");
    best.scores = scores;
    Ok(best)
}

pub fn fit_sequential<T, V>(
    config: &HellsembleConfig,
    train: &T,
    val: &V,
) -> Result<FittedHellsemble, HellsembleError>
where
    T: DataView + Sync + ?Sized,
    V: DataView + Sync + ?Sized,
{
    if config.mode != Mode::Sequential {
        return Err(HellsembleError::InvalidConfig(
            "fit_sequential needs mode sequential".into(),
        ));
    }
    construct(config, train, val)
}

pub fn fit_greedy<T, V>(
    config: &HellsembleConfig,
    train: &T,
    val: &V,
) -> Result<FittedHellsemble, HellsembleError>
where
    T: DataView + Sync + ?Sized,
    V: DataView + Sync + ?Sized,
{
    if config.mode != Mode::Greedy {
        return Err(HellsembleError::InvalidConfig(
            "fit_greedy needs mode greedy".into(),
        ));
    }
    construct(config, train, val)
}

/// Builds an ensemble in the mode named by `config`.
pub fn fit<T, V>(
    config: &HellsembleConfig,
    train: &T,
    val: &V,
) -> Result<FittedHellsemble, HellsembleError>
where
    T: DataView + Sync + ?Sized,
    V: DataView + Sync + ?Sized,
{
    construct(config, train, val)
}

fn construct<T, V>(
    config: &HellsembleConfig,
    train: &T,
    val: &V,
) -> Result<FittedHellsemble, HellsembleError>
where
    T: DataView + Sync + ?Sized,
    V: DataView + Sync + ?Sized,
{
    config.validate()?;
    if train.is_empty() {
        return Err(HellsembleError::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(HellsembleError::EmptyValidationSet);
    }
    if val.n_features() != train.n_features() {
        return Err(HellsembleError::DimensionMismatch {
            expected: train.n_features(),
            found: val.n_features(),
        });
    }
    let metric = config.metric.resolve()?;
    let metric = metric.as_ref();
    let position: HashMap<InstanceId, usize> =
        (0..train.n_rows()).map(|i| (train.id(i), i)).collect();

    // the greedy variant swaps only the member choice; the outer loop keeps
    // one pass per candidate slot
    let max_iterations = match config.mode {
        Mode::Sequential => config.candidates.len(),
        Mode::Greedy => config.candidates.len().min(config.max_iterations),
    };

    let mut state = EnsembleState::default();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut best_score = 0.0;
    let mut circle: Vec<usize> = (0..train.n_rows()).collect();
    let mut stop_reason = StopReason::CandidatesExhausted;

    for iteration in 1..=max_iterations {
        let (pool, offset) = match config.mode {
            Mode::Sequential => (&config.candidates[iteration - 1..iteration], iteration - 1),
            Mode::Greedy => (&config.candidates[..], 0),
        };
        let outcome =
            select_greedy_candidate(&state, pool, &circle, train, val, &config.router, metric)?;

        let view = RowsView {
            base: train,
            rows: &circle,
        };
        let predictions = outcome.model.predict(&view.feature_matrix())?;
        let misclassified = predictions
            .iter()
            .enumerate()
            .filter(|&(i, &p)| p != u32::from(view.label(i)))
            .count();
        let mut record = IterationRecord {
            iteration,
            chosen_spec: pool[outcome.index].clone(),
            candidate_index: offset + outcome.index,
            candidate_scores: outcome.scores.clone(),
            train_size: circle.len(),
            misclassified_count: misclassified,
            alpha_used: 0.0,
            train_score: None,
            val_score: outcome.score,
            accepted: false,
            circle_ids: view.id_vec(),
        };

        // the first member is always kept, otherwise the ensemble is empty
        if iteration > 1 && outcome.score <= best_score {
            history.push(record);
            if config.strict_algorithm1 {
                state.members.push(outcome.model);
                state.router = outcome.router;
                state.router_data = outcome.router_data;
            }
            stop_reason = StopReason::NoImprovement;
            break;
        }

        best_score = outcome.score;
        state.members.push(outcome.model);
        state.router = outcome.router;
        state.router_data = outcome.router_data;
        let train_score = evaluate_ensemble(&state.members, state.router.as_ref(), train, metric)?;
        let alpha = compute_alpha(train_score, outcome.score, &config.alpha_policy);
        record.accepted = true;
        record.train_score = Some(train_score);
        record.alpha_used = alpha;
        history.push(record);

        if misclassified == 0 {
            stop_reason = StopReason::NoMisclassified;
            break;
        }
        if iteration == max_iterations {
            break;
        }
        let seed = derive_seed(config.seed, &[iteration as u64]);
        let next_ids = partition_next(&view, &predictions, alpha, seed)?;
        let mut next: Vec<usize> = next_ids.iter().map(|id| position[id]).collect();
        next.sort_unstable();
        if next.len() < config.min_subset_size {
            stop_reason = StopReason::SubsetTooSmall;
            break;
        }
        // an unchanged circle would erase the previous member's router label
        if next.len() == circle.len() {
            stop_reason = StopReason::CircleDidNotShrink;
            break;
        }
        circle = next;
    }

    Ok(FittedHellsemble {
        members: state.members,
        router: state.router,
        history,
        config: config.clone(),
        router_labels: state.router_data.labels(),
        stop_reason,
        n_features: train.n_features(),
    })
}
