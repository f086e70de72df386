//! Example data: a small sepsis-style tree with two ongoing cases, and a
//! seeded generator of sepsis-like labeled logs.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::declare::{Constraint, Template};
use crate::dtree::{ClassWeight, Criterion, DecisionTree, Hyperparameters, MinSplit, Split, TreeNode};
use crate::encoder::{ConstraintUniverse, TopH};
use crate::log::{Event, EventLog, Trace};

pub const SEPSIS_ACTIVITIES: [&str; 12] = [
    "ER Registration",
    "ER Triage",
    "ER Sepsis Triage",
    "CRP",
    "LacticAcid",
    "Leucocytes",
    "IV Liquid",
    "IV Antibiotics",
    "Admission NC",
    "Release A",
    "Return ER",
    "Release B",
];

pub const SIGMA_15: [&str; 15] = [
    "ER Sepsis Triage",
    "ER Registration",
    "ER Triage",
    "CRP",
    "LacticAcid",
    "Leucocytes",
    "IV Antibiotics",
    "IV Liquid",
    "Admission NC",
    "CRP",
    "Leucocytes",
    "Admission NC",
    "CRP",
    "Leucocytes",
    "Release B",
];

pub const SIGMA_5: [&str; 5] =
    ["IV Liquid", "ER Registration", "ER Triage", "ER Sepsis Triage", "IV Antibiotics"];

fn leaf(id: usize, pos: usize, neg: usize) -> TreeNode {
    TreeNode {
        id,
        polarity: (pos > neg) as u8,
        impurity: Criterion::Entropy.impurity(pos as f64, neg as f64),
        pos_samples: pos,
        neg_samples: neg,
        split: None,
    }
}

fn inner(id: usize, column: usize, constraint: &Constraint, vio: TreeNode, sat: TreeNode) -> TreeNode {
    let (pos, neg) = (sat.pos_samples + vio.pos_samples, sat.neg_samples + vio.neg_samples);
    TreeNode {
        id,
        polarity: (pos > neg) as u8,
        impurity: Criterion::Entropy.impurity(pos as f64, neg as f64),
        pos_samples: pos,
        neg_samples: neg,
        split: Some(Split {
            column,
            constraint: constraint.clone(),
            violated: Box::new(vio),
            satisfied: Box::new(sat),
        }),
    }
}

/// The constraints tested by [`sepsis_tree`], in column order.
pub fn sepsis_constraints() -> Vec<Constraint> {
    Vec::from([
        Constraint::unary(Template::Existence(1), "Release A"),
        Constraint::unary(Template::Existence(1), "Admission NC"),
        Constraint::unary(Template::Exactly(1), "Release B"),
        Constraint::unary(Template::Existence(1), "Return ER"),
    ])
}

/// A five-leaf entropy tree over existence-family features of the sepsis
/// activities. Three leaves are positive: node 8 (460 positives), node 7
/// (37 positives) and node 5 (36 positives, 15 negatives).
pub fn sepsis_tree() -> DecisionTree {
    let c = sepsis_constraints();
    let node4 = inner(4, 3, &c[3], leaf(5, 36, 15), leaf(6, 2, 10));
    let node3 = inner(3, 2, &c[2], node4, leaf(7, 37, 0));
    let node1 = inner(1, 1, &c[1], leaf(2, 5, 40), node3);
    let root = inner(0, 0, &c[0], node1, leaf(8, 460, 0));
    let alphabet: BTreeSet<String> = SEPSIS_ACTIVITIES.iter().map(|s| s.to_string()).collect();
    DecisionTree {
        root,
        column_index: ConstraintUniverse::from_constraints(c, alphabet).expect("distinct"),
        hyperparameters: Hyperparameters {
            criterion: Criterion::Entropy,
            max_depth: Some(6),
            class_weight: ClassWeight::None,
            min_samples_split: MinSplit::Count(2),
            min_samples_leaf: 1,
            top_h: TopH::Half,
        },
    }
}

/// Parameters of the synthetic sepsis-like log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub traces: usize,
    pub seed: u64,
    /// Probability of flipping a label.
    pub noise: f64,
    /// Milliseconds between case starts.
    pub case_gap_ms: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { traces: 400, seed: 7, noise: 0.03, case_gap_ms: 3_600_000 }
    }
}

/// Generates labeled sepsis-like cases. The trace attribute `label` holds
/// `1` for cases released with `Release A`, or admitted and released with a
/// single `Release B` without returning; `0` otherwise (with some noise).
pub fn synthetic_log(cfg: &SyntheticConfig) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut traces = Vec::with_capacity(cfg.traces);
    for i in 0..cfg.traces {
        let case_id = format!("case{i:05}");
        let mut acts: Vec<&str> = Vec::new();
        let mut front = ["ER Registration", "ER Triage", "ER Sepsis Triage"];
        if rng.gen_bool(0.3) {
            front.swap(0, rng.gen_range(1..3));
        }
        acts.extend(front);
        for _ in 0..rng.gen_range(1..4) {
            acts.push("CRP");
            if rng.gen_bool(0.6) {
                acts.push("LacticAcid");
            }
            acts.push("Leucocytes");
        }
        if rng.gen_bool(0.7) {
            acts.push("IV Liquid");
            acts.push("IV Antibiotics");
        }
        let admitted = rng.gen_bool(0.6);
        if admitted {
            for _ in 0..rng.gen_range(1..3) {
                acts.push("Admission NC");
                acts.push("CRP");
                acts.push("Leucocytes");
            }
        }
        let release = rng.gen_range(0.0..1.0);
        let mut release_b = 0;
        if release < 0.45 {
            acts.push("Release A");
        } else if release < 0.8 {
            release_b = if rng.gen_bool(0.85) { 1 } else { 2 };
            acts.extend(core::iter::repeat_n("Release B", release_b));
        }
        let returned = rng.gen_bool(0.15);
        if returned {
            acts.push("Return ER");
        }
        let has_a = acts.contains(&"Release A");
        let mut label = has_a || (admitted && release_b == 1 && !returned);
        if rng.gen_bool(cfg.noise) {
            label = !label;
        }
        let start = i as i64 * cfg.case_gap_ms;
        let mut t = start;
        let events: Vec<Event> = acts
            .iter()
            .map(|a| {
                t += rng.gen_range(60_000..600_000);
                Event::new(case_id.as_str(), *a, t)
            })
            .collect();
        let mut trace = Trace::new(case_id.as_str(), events);
        trace.attributes.insert("label".to_string(), (label as u8).to_string());
        traces.push(trace);
    }
    EventLog::new(traces).expect("unique case ids")
}
