//! Worked examples: the response-only encoding of a small trace and the
//! sepsis tree walkthrough with its two prefixes.

use std::collections::BTreeSet;

use ppm_core::declare::{Constraint, RvState, Template};
use ppm_core::dtree::LearnedValue;
use ppm_core::encoder::{encode_log, encode_prefix_log, ConstraintUniverse};
use ppm_core::log::{make_prefix_log, EventLog, Trace};
use ppm_core::recommend::{
    fitness, generate, positive_paths, score_paths, LambdaWeights, RecCondition, DEFAULT_MIN_PATH_SAMPLES,
};
use ppm_core::sample::{sepsis_tree, SIGMA_15, SIGMA_5};

const TRACE: [&str; 9] = ["a", "b", "c", "a", "b", "c", "c", "a", "b"];

fn response_universe() -> ConstraintUniverse {
    let pairs = [("a", "b"), ("b", "a"), ("a", "c"), ("c", "a"), ("b", "c"), ("c", "b")];
    let constraints = pairs.iter().map(|(a, b)| Constraint::binary(Template::Response, *a, *b)).collect();
    let alphabet: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    ConstraintUniverse::from_constraints(constraints, alphabet).unwrap()
}

#[test]
fn response_encoding_of_complete_trace() {
    let log = EventLog::new(vec![Trace::from_activities("s", &TRACE).with_label(1)]).unwrap();
    let enc = encode_log(&log, &response_universe(), true).unwrap();
    assert_eq!(enc.row(0), &[1, 0, 0, 1, 0, 1]);
}

#[test]
fn response_encoding_of_prefix() {
    let u = response_universe();
    assert_eq!(
        ppm_core::encoder::CompiledUniverse::new(&u).encode_trace(&TRACE, false),
        vec![3, 2, 2, 3, 2, 3]
    );
    // the same vector through the prefix log of a longer case
    let mut longer = TRACE.to_vec();
    longer.push("c");
    let log = EventLog::new(vec![Trace::from_activities("s", &longer).with_label(0)]).unwrap();
    let prefixes = make_prefix_log(&log, 40).unwrap();
    let enc = encode_prefix_log(&prefixes, &u);
    let row = enc.row_index.iter().position(|r| r.k == Some(9)).unwrap();
    assert_eq!(enc.row(row), &[3, 2, 2, 3, 2, 3]);
}

fn path_by_leaf(leaf: usize) -> ppm_core::dtree::DtPath {
    sepsis_tree().extract_paths().into_iter().find(|p| p.leaf_id == leaf).unwrap()
}

#[test]
fn sepsis_tree_summary() {
    let tree = sepsis_tree();
    assert_eq!(tree.n_leaves(), 5);
    // five nodes on the longest path, four edges
    assert_eq!(tree.depth(), 4);
    let pos = positive_paths(&tree, DEFAULT_MIN_PATH_SAMPLES);
    let leaves: Vec<usize> = pos.iter().map(|p| p.leaf_id).collect();
    assert_eq!(leaves, vec![5, 7, 8]);
    assert!((path_by_leaf(5).impurity - 0.874).abs() < 1e-3);
    assert_eq!(path_by_leaf(8).impurity, 0.0);
    assert_eq!(path_by_leaf(7).impurity, 0.0);
}

#[test]
fn walkthrough_states_on_long_prefix() {
    let p7 = path_by_leaf(7);
    let states: Vec<(RvState, LearnedValue)> =
        p7.steps.iter().map(|s| (s.constraint.evaluate(&SIGMA_15, false), s.value)).collect();
    assert_eq!(
        states,
        vec![
            (RvState::PossiblyViolated, LearnedValue::Violated),
            (RvState::Satisfied, LearnedValue::Satisfied),
            (RvState::PossiblySatisfied, LearnedValue::Satisfied),
        ]
    );
}

#[test]
fn walkthrough_fitness() {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-2;
    assert!(close(fitness(&SIGMA_15, &path_by_leaf(7), false), 1.0));
    assert!(close(fitness(&SIGMA_15, &path_by_leaf(8), false), 0.5));
    assert!(close(fitness(&SIGMA_15, &path_by_leaf(5), false), 0.875));
    assert!(close(fitness(&SIGMA_5, &path_by_leaf(8), false), 0.5));
    assert!(close(fitness(&SIGMA_5, &path_by_leaf(7), false), 0.67));
    assert!(close(fitness(&SIGMA_5, &path_by_leaf(5), false), 0.875));
}

#[test]
fn walkthrough_scores_rank_paths() {
    let tree = sepsis_tree();
    let pos = positive_paths(&tree, DEFAULT_MIN_PATH_SAMPLES);
    let lambda = LambdaWeights::default();
    // independent recomputation over the 533 positives of the positive leaves
    let expect = |f: f64, impurity: f64, n: f64| 0.4 * f + 0.4 * (1.0 - impurity) + 0.2 * n / 533.0;
    let scored = score_paths(&SIGMA_15, &pos, &lambda);
    let by_leaf = |leaf: usize| scored.iter().find(|s| s.path.leaf_id == leaf).unwrap().rho;
    assert!((by_leaf(7) - expect(1.0, 0.0, 37.0)).abs() < 1e-9);
    assert!((by_leaf(8) - expect(0.5, 0.0, 460.0)).abs() < 1e-9);
    assert!((by_leaf(7) - 0.814).abs() < 1e-3);
    assert!((by_leaf(8) - 0.773).abs() < 1e-3);
    assert!((by_leaf(5) - 0.41).abs() < 1e-2);
    assert!(by_leaf(7) > by_leaf(8) && by_leaf(8) > by_leaf(5));

    let scored5 = score_paths(&SIGMA_5, &pos, &lambda);
    let best = scored5.iter().max_by(|a, b| a.rho.total_cmp(&b.rho)).unwrap();
    assert_eq!(best.path.leaf_id, 8);
}

#[test]
fn walkthrough_recommendations() {
    let tree = sepsis_tree();
    let lambda = LambdaWeights::default();

    let r15 = generate(&SIGMA_15, &tree, &lambda, DEFAULT_MIN_PATH_SAMPLES).unwrap();
    assert_eq!(r15.chosen_path.node_ids(), vec![0, 1, 3, 7]);
    let got: Vec<(String, RecCondition, usize)> =
        r15.recommendations.iter().map(|r| (r.constraint.to_string(), r.condition, r.priority)).collect();
    assert_eq!(
        got,
        vec![
            ("existence(n=1, Release A)".to_string(), RecCondition::ShouldNotBeSatisfied, 1),
            ("exactly(n=1, Release B)".to_string(), RecCondition::ShouldNotBeViolated, 2),
        ]
    );
    assert_eq!(r15.rv_snapshot.len(), 3);

    let r5 = generate(&SIGMA_5, &tree, &lambda, DEFAULT_MIN_PATH_SAMPLES).unwrap();
    assert_eq!(r5.chosen_path.node_ids(), vec![0, 8]);
    assert_eq!(r5.recommendations.len(), 1);
    assert_eq!(r5.recommendations[0].constraint.to_string(), "existence(n=1, Release A)");
    assert_eq!(r5.recommendations[0].condition, RecCondition::ShouldBecomeSatisfied);
    assert_eq!(r5.recommendations[0].condition.as_str(), "SHOULD BECOME SATISFIED");
}

#[test]
fn model_round_trips_through_json() {
    let tree = sepsis_tree();
    let json = serde_json::to_string(&tree).unwrap();
    let back: ppm_core::DecisionTree = serde_json::from_str(&json).unwrap();
    assert_eq!(back, tree);
    let r = generate(&SIGMA_15, &back, &LambdaWeights::default(), 3).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["recommendations"][0]["condition"], "SHOULD NOT BE SATISFIED");
}
