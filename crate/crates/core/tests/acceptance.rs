//! Acceptance checks. Runs as a plain binary (no libtest harness) and prints
//! one PASS or FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hellsemble::data::{DataView, Dataset, IndexSubset, Matrix};
use hellsemble::eval::{
    accuracy, multi_model_ratio, roc_auc, run_experiment_with_jobs, ConfigKey, ExperimentConfig,
    ExperimentReport,
};
use hellsemble::hellsemble::{
    fit, fit_greedy, fit_sequential, AlphaPolicy, HellsembleConfig, Mode, StopReason,
};
use hellsemble::learners::{
    self, logistic_gradient, logistic_loss, FittedModel, LearnerParams, LearnerSpec, MlpParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("learner oracles", learner_oracles),
        ("sequential trace", sequential_trace),
        ("degenerate equivalences", degenerate_equivalences),
        ("monotonicity and rollback", monotonicity_and_rollback),
        ("pocket gain", pocket_gain),
        ("grid shape", grid_shape),
        ("metrics", metrics),
        ("determinism across jobs", determinism_across_jobs),
        ("inference economy", inference_economy),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({why}; {secs:.1}s)", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}

fn stump() -> LearnerSpec {
    LearnerSpec::new(LearnerParams::DecisionTree {
        max_depth: 1,
        min_leaf: 1,
    })
}

// ---------------------------------------------------------------------------
// 1

fn learner_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Gaussian naive Bayes against densities written out by hand
    let n = 60;
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { -1.0 } else { 1.0 };
            [
                s + rng.gen::<f64>(),
                2.0 * rng.gen::<f64>(),
                s * 0.5 + rng.gen::<f64>(),
            ]
        })
        .collect();
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let model = learners::fit(&LearnerSpec::gaussian_nb(), &x, &labels).unwrap();
    let FittedModel::GaussianNb(nb) = model.model() else {
        return Err("gaussian_nb did not fit a naive Bayes model".into());
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let q = [
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..3.0),
            rng.gen_range(-1.0..2.0),
        ];
        let mut direct = Vec::new();
        for c in 0..2u32 {
            let members: Vec<&[f64; 3]> = rows
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            let m = members.len() as f64;
            let mut lp = (m / n as f64).ln();
            for f in 0..3 {
                let mu = members.iter().map(|r| r[f]).sum::<f64>() / m;
                let var = members.iter().map(|r| (r[f] - mu).powi(2)).sum::<f64>() / m;
                let density = (-(q[f] - mu).powi(2) / (2.0 * var)).exp()
                    / (2.0 * std::f64::consts::PI * var).sqrt();
                lp += density.ln();
            }
            direct.push(lp);
        }
        let got = nb.log_joint(&q);
        for c in 0..2 {
            worst = worst.max((got[c] - direct[c]).abs());
        }
        let norm = |v: &[f64]| {
            let m = v[0].max(v[1]);
            let lse = m + ((v[0] - m).exp() + (v[1] - m).exp()).ln();
            [v[0] - lse, v[1] - lse]
        };
        let p = model
            .predict_proba(&Matrix::from_rows(&[q]).unwrap())
            .unwrap();
        let want = norm(&direct);
        for (got, w) in p.row(0).iter().zip(want) {
            worst = worst.max((got.ln() - w).abs());
        }
    }
    ensure(worst < 1e-9, || {
        format!("naive Bayes log-posterior off by {worst:e}")
    })?;

    // k-NN against a brute-force scan
    let train: Vec<[f64; 3]> = (0..150)
        .map(|_| {
            [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let train_labels: Vec<u32> = train
        .iter()
        .map(|r| u32::from(r[0] * r[2] + 0.1 * r[1] > 0.5))
        .collect();
    let k = 5;
    let model = learners::fit(
        &LearnerSpec::knn(k),
        &Matrix::from_rows(&train).unwrap(),
        &train_labels,
    )
    .unwrap();
    let FittedModel::Knn(knn) = model.model() else {
        return Err("knn did not fit a k-NN model".into());
    };
    let (mean, sd) = column_stats(&train);
    let queries: Vec<[f64; 3]> = (0..100)
        .map(|_| {
            [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let predicted = model
        .predict(&Matrix::from_rows(&queries).unwrap())
        .unwrap();
    for (qi, q) in queries.iter().enumerate() {
        let mut d: Vec<(f64, usize)> = train
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2 = (0..3).map(|f| ((r[f] - q[f]) / sd[f]).powi(2)).sum::<f64>();
                let _ = mean;
                (d2, i)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest: Vec<usize> = d[..k].iter().map(|&(_, i)| i).collect();
        ensure(knn.neighbors(q) == nearest, || {
            format!("k-NN neighbours differ at query {qi}")
        })?;
        let ones = nearest.iter().filter(|&&i| train_labels[i] == 1).count();
        let vote = u32::from(ones * 2 > k);
        ensure(predicted[qi] == vote, || {
            format!("k-NN vote differs at query {qi}")
        })?;
    }

    // root split against exhaustive Gini search
    let cases = 1500;
    for case in 0..cases {
        let n = rng.gen_range(2..=12);
        let d = rng.gen_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(0..5) as f64).collect())
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let model = learners::fit(&stump(), &Matrix::from_rows(&rows).unwrap(), &labels).unwrap();
        let got = match model.model() {
            FittedModel::DecisionTree(t) => t.root_split().map(|s| (s.feature, s.threshold)),
            _ => None,
        };
        let want = exhaustive_gini_split(&rows, &labels);
        ensure(got == want, || {
            format!("case {case}: root split {got:?}, exhaustive {want:?}")
        })?;
    }

    // logistic regression gradient against central differences
    let xs: Vec<[f64; 3]> = (0..40)
        .map(|_| {
            [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]
        })
        .collect();
    let x = Matrix::from_rows(&xs).unwrap();
    let targets: Vec<f64> = xs.iter().map(|r| f64::from(r[0] - r[1] > 0.3)).collect();
    let l2 = 0.01;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let g = logistic_gradient(&w, b, &x, &targets, l2);
        let mut analytic = g.weights.clone();
        analytic.push(g.bias);
        let mut numeric = Vec::new();
        for j in 0..4 {
            let at = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < 3 {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                logistic_loss(&w2, b2, &x, &targets, l2)
            };
            numeric.push((at(h) - at(-h)) / (2.0 * h));
        }
        worst = worst.max(vector_rel_err(&analytic, &numeric));
    }
    ensure(worst < 1e-4, || {
        format!("logistic gradient relative error {worst:e}")
    })?;

    // MLP gradient against central differences, away from ReLU kinks
    let xs: Vec<[f64; 2]> = (0..12)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let x = Matrix::from_rows(&xs).unwrap();
    let targets: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    while points < 10 {
        let mut p = MlpParams::random(2, 6, 3, &mut rng);
        p.values_mut().for_each(|v| *v *= 10.0);
        let near_kink = xs.iter().any(|r| {
            (0..6).any(|j| (p.w1[j * 2] * r[0] + p.w1[j * 2 + 1] * r[1] + p.b1[j]).abs() < 1e-3)
        });
        if near_kink {
            continue;
        }
        points += 1;
        let analytic: Vec<f64> = p.gradient(&x, &targets).values().copied().collect();
        let n_params = analytic.len();
        let mut numeric = Vec::with_capacity(n_params);
        for j in 0..n_params {
            let at = |delta: f64| {
                let mut q = p.clone();
                *q.values_mut().nth(j).unwrap() += delta;
                q.loss(&x, &targets)
            };
            numeric.push((at(h) - at(-h)) / (2.0 * h));
        }
        worst = worst.max(vector_rel_err(&analytic, &numeric));
    }
    ensure(worst < 1e-4, || {
        format!("MLP gradient relative error {worst:e}")
    })?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{cases} split cases, 100 k-NN queries, 20 gradient points"
    ))
}

fn column_stats(rows: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for f in 0..3 {
        mean[f] = rows.iter().map(|r| r[f]).sum::<f64>() / n;
        sd[f] = (rows.iter().map(|r| (r[f] - mean[f]).powi(2)).sum::<f64>() / n).sqrt();
    }
    (mean, sd)
}

fn vector_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn gini(labels: &[u32]) -> f64 {
    let n = labels.len() as f64;
    let ones = labels.iter().filter(|&&l| l == 1).count() as f64;
    1.0 - (ones / n).powi(2) - ((n - ones) / n).powi(2)
}

/// Every feature and every midpoint between distinct values; lowest
/// size-weighted child impurity, earlier feature then lower threshold on ties.
fn exhaustive_gini_split(rows: &[Vec<f64>], labels: &[u32]) -> Option<(usize, f64)> {
    if labels.iter().all(|&l| l == labels[0]) {
        return None;
    }
    let n = rows.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..rows[0].len() {
        let values: BTreeSet<i64> = rows.iter().map(|r| r[f] as i64).collect();
        let values: Vec<i64> = values.into_iter().collect();
        for pair in values.windows(2) {
            let t = (pair[0] + pair[1]) as f64 / 2.0;
            let (l, r): (Vec<u32>, Vec<u32>) = {
                let mut l = Vec::new();
                let mut r = Vec::new();
                for (row, &y) in rows.iter().zip(labels) {
                    if row[f] <= t {
                        l.push(y)
                    } else {
                        r.push(y)
                    }
                }
                (l, r)
            };
            let impurity = l.len() as f64 / n * gini(&l) + r.len() as f64 / n * gini(&r);
            if best.is_none_or(|(b, _, _)| impurity < b - 1e-12) {
                best = Some((impurity, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

// ---------------------------------------------------------------------------
// 2
//
// Eight training points x = 0..7 with labels 0 0 0 1 0 1 0 1, four
// validation points 4.3 5.3 6.3 7.3 labelled 0 0 0 1. Candidates in order:
// 3-NN, stump, stump; router 1-NN; accuracy; gap-clamped alpha.
//
// Iteration 1, circle {0..7}, 3-NN (each point votes with itself):
//   0 -> {0,1,2} 0 ok    4 -> {4,3,5} 1 wrong
//   1 -> {1,0,2} 0 ok    5 -> {5,4,6} 0 wrong
//   2 -> {2,1,3} 0 ok    6 -> {6,5,7} 1 wrong
//   3 -> {3,2,4} 0 wrong 7 -> {7,6,5} 1 ok
//   train accuracy 4/8. No router yet. Validation: 4.3 -> {4,5,3} 1 wrong,
//   5.3 -> {5,6,4} 0 ok, 6.3 -> {6,7,5} 1 wrong, 7.3 -> {7,6,5} 1 ok: 2/4.
//   alpha = clamp(0.5 - 0.5) = 0, so circle 2 = misclassified = {3,4,5,6}.
// Iteration 2, stump on 3:1 4:0 5:1 6:0. Thresholds 3.5 and 5.5 tie on Gini
//   (each leaves a pure singleton), the lower wins: x <= 3.5 -> 1, else 0.
//   Misclassified: 5. Router labels 1 for {0,1,2,7}, 2 for {3,4,5,6}.
//   Validation: 4.3, 5.3, 6.3 route to the stump and get 0 (all right);
//   7.3 routes to 3-NN and gets 1 (right): 4/4 > 2/4, accepted.
//   Train: everything right except 5, 7/8. alpha = clamp(0.875 - 1) = 0.
//   Circle 3 = {5}.
// Iteration 3, stump on the single point 5 (label 1): constant 1. Router
//   label of 5 becomes 3. Validation: 5.3 now routes to member 3 and gets 1,
//   wrong: 3/4 <= 4/4. Rolled back: two members, router labels as after
//   iteration 2, stop because the score did not improve.

fn trace_data() -> (IndexSubset, IndexSubset) {
    let xs: Vec<[f64; 1]> = (0..8).map(|i| [i as f64]).collect();
    let train = Dataset::from_rows(&xs, vec![0, 0, 0, 1, 0, 1, 0, 1]).unwrap();
    let val = Dataset::from_rows(&[[4.3], [5.3], [6.3], [7.3]], vec![0, 0, 0, 1]).unwrap();
    (
        IndexSubset::full(Arc::new(train)),
        IndexSubset::full(Arc::new(val)),
    )
}

fn trace_config() -> HellsembleConfig {
    let mut c = HellsembleConfig::new(
        vec![LearnerSpec::knn(3), stump(), stump()],
        LearnerSpec::knn(1),
        Mode::Sequential,
    );
    c.min_subset_size = 1;
    c
}

fn sequential_trace() -> Outcome {
    let (train, val) = trace_data();
    let val_x = val.feature_matrix();

    let model = fit_sequential(&trace_config(), &train, &val).map_err(|e| e.to_string())?;
    let h = model.history();
    ensure(h.len() == 3, || format!("{} iterations recorded", h.len()))?;
    let circles: Vec<Vec<u64>> = h.iter().map(|r| r.circle_ids.clone()).collect();
    ensure(
        circles == vec![vec![0, 1, 2, 3, 4, 5, 6, 7], vec![3, 4, 5, 6], vec![5]],
        || format!("circles {circles:?}"),
    )?;
    let got: Vec<(usize, usize, f64, Option<f64>, f64, bool)> = h
        .iter()
        .map(|r| {
            (
                r.candidate_index,
                r.misclassified_count,
                r.alpha_used,
                r.train_score,
                r.val_score,
                r.accepted,
            )
        })
        .collect();
    let want = vec![
        (0, 4, 0.0, Some(0.5), 0.5, true),
        (1, 1, 0.0, Some(0.875), 1.0, true),
        (2, 0, 0.0, None, 0.75, false),
    ];
    ensure(got == want, || format!("history {got:?}"))?;
    let labels: Vec<(u64, u32)> = model
        .router_labels()
        .iter()
        .map(|(&k, &v)| (k, v))
        .collect();
    ensure(
        labels
            == vec![
                (0, 1),
                (1, 1),
                (2, 1),
                (3, 2),
                (4, 2),
                (5, 2),
                (6, 2),
                (7, 1),
            ],
        || format!("router labels {labels:?}"),
    )?;
    ensure(model.members().len() == 2, || {
        "rejected member was kept".into()
    })?;
    ensure(model.stop_reason() == StopReason::NoImprovement, || {
        format!("{:?}", model.stop_reason())
    })?;
    ensure(model.predict(&val_x).unwrap() == vec![0, 0, 0, 1], || {
        "final validation predictions".into()
    })?;

    // without rollback the third member and its router label stay
    let mut strict = trace_config();
    strict.strict_algorithm1 = true;
    let kept = fit_sequential(&strict, &train, &val).map_err(|e| e.to_string())?;
    ensure(kept.members().len() == 3, || {
        "strict mode dropped the member".into()
    })?;
    ensure(kept.router_labels().get(&5) == Some(&3), || {
        "strict mode router label of 5".into()
    })?;
    ensure(kept.predict(&val_x).unwrap() == vec![0, 1, 0, 1], || {
        "strict validation predictions".into()
    })?;

    // a fixed alpha of 1/4 carries ceil(4 / 4) = 1 of the four correct points
    let mut carry = trace_config();
    carry.alpha_policy = AlphaPolicy::fixed(0.25);
    let m = fit_sequential(&carry, &train, &val).map_err(|e| e.to_string())?;
    let r1 = &m.history()[0];
    ensure(r1.alpha_used == 0.25, || format!("alpha {}", r1.alpha_used))?;
    let c2: BTreeSet<u64> = m.history()[1].circle_ids.iter().copied().collect();
    let extra: Vec<u64> = c2
        .difference(&BTreeSet::from([3, 4, 5, 6]))
        .copied()
        .collect();
    ensure(
        c2.is_superset(&BTreeSet::from([3, 4, 5, 6]))
            && extra.len() == 1
            && [0, 1, 2, 7].contains(&extra[0]),
        || format!("carried circle {c2:?}"),
    )?;
    Ok("circles, router labels, alphas and rollback as traced by hand".into())
}

// ---------------------------------------------------------------------------
// 3

fn degenerate_equivalences() -> Outcome {
    let specs = [
        LearnerSpec::knn(3),
        LearnerSpec::gaussian_nb(),
        LearnerSpec::decision_tree(),
        LearnerSpec::logistic_regression(),
        LearnerSpec::random_forest().with_seed(5),
        LearnerSpec::mlp().with_seed(9),
    ];
    let mut checked = 0;
    for (i, spec) in specs.iter().enumerate() {
        let parts = split_three(blobs(30 + i as u64, 300, 3, 0.8), i as u64);
        let test_x = parts.test.feature_matrix();
        let config = |mode| {
            let mut c = HellsembleConfig::new(vec![spec.clone()], LearnerSpec::knn(3), mode);
            c.seed = 3;
            c
        };
        let greedy = fit_greedy(&config(Mode::Greedy), &parts.train, &parts.val)
            .map_err(|e| e.to_string())?;
        let seq = fit_sequential(&config(Mode::Sequential), &parts.train, &parts.val)
            .map_err(|e| e.to_string())?;
        let gp = greedy.predict(&test_x).unwrap();
        ensure(gp == seq.predict(&test_x).unwrap(), || {
            format!("{}: greedy and sequential differ", spec.name())
        })?;

        ensure(greedy.members().len() == 1, || {
            format!("{}: {} members", spec.name(), greedy.members().len())
        })?;
        let alone = learners::fit_view(spec, &parts.train).unwrap();
        ensure(gp == alone.predict(&test_x).unwrap(), || {
            format!("{}: ensemble differs from member", spec.name())
        })?;
        ensure(
            greedy.predict_proba(&test_x).unwrap() == {
                let p0 = alone.proba_of(&test_x, 0).unwrap();
                let p1 = alone.proba_of(&test_x, 1).unwrap();
                Matrix::new(
                    p0.len(),
                    2,
                    p0.into_iter().zip(p1).flat_map(|(a, b)| [a, b]).collect(),
                )
                .unwrap()
            },
            || format!("{}: probabilities differ", spec.name()),
        )?;
        checked += 1;
    }
    Ok(format!("{checked} learner kinds"))
}

// ---------------------------------------------------------------------------
// 4

fn monotonicity_and_rollback() -> Outcome {
    let suites = [
        vec![
            LearnerSpec::knn(5),
            LearnerSpec::logistic_regression(),
            LearnerSpec::decision_tree(),
            LearnerSpec::gaussian_nb(),
        ],
        vec![
            LearnerSpec::knn(3),
            LearnerSpec::knn(5),
            LearnerSpec::decision_tree(),
            LearnerSpec::gaussian_nb(),
        ],
        vec![
            LearnerSpec::gaussian_nb(),
            LearnerSpec::knn(1),
            LearnerSpec::decision_tree(),
            LearnerSpec::knn(7),
        ],
    ];
    let mut fits = 0;
    let mut multi = 0;
    for seed in 0..4u64 {
        let data = if seed % 2 == 0 {
            pocket_dataset(seed, 400)
        } else {
            blobs(seed, 400, 2, 0.6)
        };
        let parts = split_three(data, seed);
        let truth = labels_u32(&parts.val);
        for (si, suite) in suites.iter().enumerate() {
            for mode in [Mode::Sequential, Mode::Greedy] {
                let mut c = HellsembleConfig::new(suite.clone(), LearnerSpec::knn(3), mode);
                c.seed = seed * 10 + si as u64;
                c.min_subset_size = 2;
                let m = fit(&c, &parts.train, &parts.val).map_err(|e| e.to_string())?;
                let accepted: Vec<f64> = m
                    .history()
                    .iter()
                    .filter(|r| r.accepted)
                    .map(|r| r.val_score)
                    .collect();
                ensure(accepted.windows(2).all(|w| w[1] > w[0]), || {
                    format!("accepted scores {accepted:?}")
                })?;
                let max = accepted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let predicted = m.predict(&parts.val.feature_matrix()).unwrap();
                let hits = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
                let routed = hits as f64 / truth.len() as f64;
                ensure(routed == max, || {
                    format!("final routed score {routed} vs best accepted {max}")
                })?;
                ensure(m.members().len() == accepted.len(), || {
                    "member count differs from accepted count".into()
                })?;
                fits += 1;
                multi += usize::from(m.members().len() > 1);
            }
        }
    }
    Ok(format!("{fits} fits, {multi} with several members"))
}

// ---------------------------------------------------------------------------
// 5

fn pocket_gain() -> Outcome {
    let start = Instant::now();
    let suite = vec![
        LearnerSpec::knn(3),
        LearnerSpec::knn(5),
        LearnerSpec::decision_tree(),
        LearnerSpec::gaussian_nb(),
    ];
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let parts = split_three(pocket_dataset(seed, 2000), seed);
        let test_x = parts.test.feature_matrix();
        let truth = labels_u32(&parts.test);
        let best = suite
            .iter()
            .map(|s| {
                accuracy(
                    &truth,
                    &learners::fit_view(s, &parts.train)
                        .unwrap()
                        .predict(&test_x)
                        .unwrap(),
                )
                .unwrap()
            })
            .fold(0.0, f64::max);
        let mut c = HellsembleConfig::new(suite.clone(), LearnerSpec::knn(3), Mode::Greedy);
        c.seed = seed;
        let m = fit_greedy(&c, &parts.train, &parts.val).map_err(|e| e.to_string())?;
        let score = accuracy(&truth, &m.predict(&test_x).unwrap()).unwrap();
        let ok = score >= best + 0.01 && m.members().len() >= 2;
        good += usize::from(ok);
        notes.push(format!(
            "{:+.1}pp/{}",
            100.0 * (score - best),
            m.members().len()
        ));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    let detail = format!("{good}/5 seeds: {}", notes.join(" "));
    ensure(good >= 4, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 6 and 8 share one pair of benchmark runs

fn toy_datasets() -> Vec<(String, Arc<Dataset>)> {
    vec![
        ("blobs".to_string(), Arc::new(blobs(7, 120, 2, 1.0))),
        ("pocket".to_string(), Arc::new(pocket_dataset(8, 120))),
    ]
}

fn benchmark(jobs: usize) -> ExperimentReport {
    use std::sync::OnceLock;
    static RUNS: OnceLock<std::sync::Mutex<BTreeMap<usize, ExperimentReport>>> = OnceLock::new();
    let runs = RUNS.get_or_init(Default::default);
    if let Some(r) = runs.lock().unwrap().get(&jobs) {
        return r.clone();
    }
    let report =
        run_experiment_with_jobs(&ExperimentConfig::default(), &toy_datasets(), jobs).unwrap();
    runs.lock().unwrap().insert(jobs, report.clone());
    report
}

fn grid_shape() -> Outcome {
    let report = benchmark(1);
    let mut per: BTreeMap<(String, Mode), BTreeSet<(String, String)>> = BTreeMap::new();
    for r in &report.rows {
        let fresh = per
            .entry((r.dataset.clone(), r.mode))
            .or_default()
            .insert((r.suite.clone(), r.router.clone()));
        ensure(fresh, || {
            format!("duplicate row {} {} {}", r.dataset, r.suite, r.router)
        })?;
    }
    ensure(per.len() == 4, || {
        format!("{} dataset/mode pairs", per.len())
    })?;
    for ((d, m), configs) in &per {
        ensure(configs.len() == 16, || {
            format!("{d} {}: {} configurations", m.as_str(), configs.len())
        })?;
    }
    let mut keys = 0;
    for agg in &report.aggregates {
        let rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| {
                r.suite == agg.key.suite && r.router == agg.key.router && r.mode == agg.key.mode
            })
            .filter(|r| r.test_score.is_some())
            .collect();
        let expected = if rows.is_empty() {
            None
        } else {
            Some(rows.iter().filter(|r| r.member_count >= 2).count() as f64 / rows.len() as f64)
        };
        ensure(agg.multi_model_ratio == expected, || {
            format!("{:?}: {:?} vs {expected:?}", agg.key, agg.multi_model_ratio)
        })?;
        let direct = multi_model_ratio(
            &report,
            &ConfigKey::new(&agg.key.suite, &agg.key.router, agg.key.mode),
        )
        .ok();
        ensure(direct == expected, || {
            format!("{:?}: recomputed {direct:?}", agg.key)
        })?;
        keys += 1;
    }
    ensure(keys == 32, || format!("{keys} aggregates"))?;
    Ok(format!(
        "2 datasets x 2 modes x 16 configurations, {keys} ratios"
    ))
}

fn determinism_across_jobs() -> Outcome {
    let one = benchmark(1);
    let many = benchmark(4);
    ensure(one.to_csv() == many.to_csv(), || "CSV differs".into())?;
    ensure(one.to_json() == many.to_json(), || "JSON differs".into())?;
    Ok(format!(
        "{} bytes of CSV, {} of JSON identical",
        one.to_csv().len(),
        one.to_json().len()
    ))
}

// ---------------------------------------------------------------------------
// 7

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut done = 0;
    while done < 1000 {
        let n = rng.gen_range(2..=200);
        let truth: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let levels = rng.gen_range(2..=50);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels) as f64 / levels as f64)
            .collect();
        let predicted: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();

        let acc = accuracy(&truth, &predicted).unwrap();
        let errors = truth.iter().zip(&predicted).filter(|(t, p)| t != p).count();
        ensure((acc + errors as f64 / n as f64 - 1.0).abs() < 1e-12, || {
            format!("accuracy {acc} with {errors}/{n} errors")
        })?;
        let flipped: Vec<u32> = predicted.iter().map(|p| 1 - p).collect();
        let acc_flipped = accuracy(&truth, &flipped).unwrap();
        ensure((acc + acc_flipped - 1.0).abs() < 1e-12, || {
            "accuracy of flipped predictions".into()
        })?;

        let pos: Vec<f64> = (0..n)
            .filter(|&i| truth[i] == 1)
            .map(|i| scores[i])
            .collect();
        let neg: Vec<f64> = (0..n)
            .filter(|&i| truth[i] == 0)
            .map(|i| scores[i])
            .collect();
        if pos.is_empty() || neg.is_empty() {
            ensure(roc_auc(&truth, &scores).is_err(), || {
                "single-class roc_auc accepted".into()
            })?;
            continue;
        }
        let mut twice = 0u64;
        for p in &pos {
            for q in &neg {
                twice += if p > q {
                    2
                } else if p == q {
                    1
                } else {
                    0
                };
            }
        }
        let want = twice as f64 / 2.0 / (pos.len() as f64 * neg.len() as f64);
        let got = roc_auc(&truth, &scores).unwrap();
        ensure(got == want, || {
            format!("roc_auc {got} vs pairwise {want} (n = {n})")
        })?;
        done += 1;
    }
    Ok("1000 instances".into())
}

// ---------------------------------------------------------------------------
// 9

fn inference_economy() -> Outcome {
    let parts = split_three(pocket_dataset(3, 2000), 3);
    let suite = vec![
        LearnerSpec::knn(3),
        LearnerSpec::knn(5),
        LearnerSpec::decision_tree(),
        LearnerSpec::gaussian_nb(),
    ];
    let mut c = HellsembleConfig::new(suite, LearnerSpec::knn(3), Mode::Greedy);
    c.max_iterations = 2;
    let m = fit_greedy(&c, &parts.train, &parts.val).map_err(|e| e.to_string())?;
    ensure(m.members().len() == 2, || {
        format!("{} members", m.members().len())
    })?;

    let x = parts.test.feature_matrix();
    let n = x.rows();
    let (predicted, trace) = m.predict_traced(&x).unwrap();
    ensure(trace.router_calls == 1 && trace.router_rows == n, || {
        format!("router {trace:?}")
    })?;
    ensure(trace.member_rows.iter().sum::<usize>() == n, || {
        format!("member rows {:?} for {n}", trace.member_rows)
    })?;
    ensure(trace.member_calls.iter().all(|&c| c <= 1), || {
        format!("member calls {:?}", trace.member_calls)
    })?;

    let routes = m.route(&x).unwrap();
    for j in 0..2 {
        let count = routes.iter().filter(|&&r| r == j).count();
        ensure(trace.member_rows[j] == count, || {
            format!("member {j}: {} rows, {count} routed", trace.member_rows[j])
        })?;
    }
    for (i, &r) in routes.iter().enumerate() {
        let own = m.members()[r]
            .predict(&Matrix::from_rows(&[x.row(i)]).unwrap())
            .unwrap()[0];
        ensure(predicted[i] == own, || {
            format!("row {i} not answered by its routed member")
        })?;
    }
    Ok(format!(
        "{n} rows: one router call, member rows {:?}",
        trace.member_rows
    ))
}
