//! Offline what-if evaluation: classifying each prefix's recommendations
//! against the completed trace, cumulative metrics per prefix length and
//! tuning of the score weights and the fitness threshold.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dtree::{f_score, DtPath};
use crate::log::{PrefixEntry, Trace};
use crate::recommend::{self, pick_best, LambdaWeights, ScoredPath};

/// Default fitness thresholds tried during tuning.
pub const TH_FIT_GRID: [f64; 4] = [0.55, 0.65, 0.75, 0.85];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    TP,
    FP,
    TN,
    FN,
}

/// Confusion-matrix cell for a completed trace: followed (fitness at or
/// above the threshold) versus label.
pub fn classify(full_fitness: f64, label: u8, th_fit: f64) -> Outcome {
    match (full_fitness >= th_fit, label != 0) {
        (true, true) => Outcome::TP,
        (true, false) => Outcome::FP,
        (false, true) => Outcome::FN,
        (false, false) => Outcome::TN,
    }
}

/// Classifies the completed trace against the path chosen on its prefix;
/// without a path the fitness is 0.
pub fn whatif_classify(full_trace: &Trace, chosen: Option<&DtPath>, th_fit: f64) -> Outcome {
    let f = chosen.map_or(0.0, |p| recommend::fitness(&full_trace.activities(), p, true));
    classify(f, full_trace.label.unwrap_or(0), th_fit)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TP => self.tp += 1,
            Outcome::FP => self.fp += 1,
            Outcome::TN => self.tn += 1,
            Outcome::FN => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Precision, recall and F-score; 0/0 is 0.
    pub fn metrics(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        (
            ratio(self.tp, self.tp + self.fp),
            ratio(self.tp, self.tp + self.fn_),
            f_score(self.tp, self.fp, self.fn_),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativePoint {
    pub k: usize,
    pub matrix: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Per-prefix-length and cumulative metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_k: BTreeMap<usize, ConfusionMatrix>,
    pub cumulative: Vec<CumulativePoint>,
    /// Mean of the cumulative F-scores over the evaluated lengths.
    pub average_f_score: f64,
    pub n_prefixes: usize,
    /// Wall-clock generation time per prefix as (k, milliseconds).
    #[serde(skip)]
    pub timings: Vec<(usize, f64)>,
}

/// Aggregates (k, outcome) pairs.
pub fn aggregate(outcomes: impl IntoIterator<Item = (usize, Outcome)>) -> MetricsReport {
    let mut per_k: BTreeMap<usize, ConfusionMatrix> = BTreeMap::new();
    let mut n = 0;
    for (k, o) in outcomes {
        per_k.entry(k).or_default().add(o);
        n += 1;
    }
    let mut running = ConfusionMatrix::default();
    let mut cumulative = Vec::with_capacity(per_k.len());
    for (&k, cm) in &per_k {
        running.merge(cm);
        let (precision, recall, f_score) = running.metrics();
        cumulative.push(CumulativePoint { k, matrix: running, precision, recall, f_score });
    }
    let average_f_score = if cumulative.is_empty() {
        0.0
    } else {
        cumulative.iter().map(|c| c.f_score).sum::<f64>() / cumulative.len() as f64
    };
    MetricsReport { per_k, cumulative, average_f_score, n_prefixes: n, timings: Vec::new() }
}

/// A prefix with the fitness of every candidate path on the prefix and on
/// its completed trace, so that many weight settings can be tried cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixCase {
    pub case_id: String,
    pub k: usize,
    pub label: u8,
    pub prefix_fitness: Vec<f64>,
    pub full_fitness: Vec<f64>,
}

/// Precomputes fitness values. Entries whose case is missing from `full`
/// are skipped.
pub fn prepare_cases(
    entries: &[PrefixEntry],
    full: &BTreeMap<&str, &Trace>,
    candidates: &[DtPath],
) -> Vec<PrefixCase> {
    let mut full_cache: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let Some(trace) = full.get(e.case_id.as_str()) else {
            log::warn!("prefix of unknown case {}", e.case_id);
            continue;
        };
        let full_fitness = full_cache
            .entry(e.case_id.as_str())
            .or_insert_with(|| {
                let acts = trace.activities();
                candidates.iter().map(|p| recommend::fitness(&acts, p, true)).collect()
            })
            .clone();
        let acts = e.prefix.activities();
        out.push(PrefixCase {
            case_id: e.case_id.clone(),
            k: e.k,
            label: e.label,
            prefix_fitness: candidates.iter().map(|p| recommend::fitness(&acts, p, false)).collect(),
            full_fitness,
        });
    }
    out
}

/// Index of the candidate chosen for a case under `lambda`.
pub fn choose(case: &PrefixCase, candidates: &[DtPath], lambda: &LambdaWeights) -> Option<usize> {
    let pos_total: usize = candidates.iter().map(|p| p.pos_samples).sum();
    let scored: Vec<ScoredPath> = candidates
        .iter()
        .zip(&case.prefix_fitness)
        .map(|(p, &f)| ScoredPath {
            path: p.clone(),
            fitness: f,
            rho: recommend::rho_from_fitness(f, p, lambda, pos_total),
        })
        .collect();
    pick_best(&scored)
}

/// Metrics of all cases for one weight setting and threshold.
pub fn evaluate_cases(
    cases: &[PrefixCase],
    candidates: &[DtPath],
    lambda: &LambdaWeights,
    th_fit: f64,
) -> MetricsReport {
    aggregate(cases.iter().map(|c| {
        let f = choose(c, candidates, lambda).map_or(0.0, |i| c.full_fitness[i]);
        (c.k, classify(f, c.label, th_fit))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub lambda: LambdaWeights,
    pub th_fit: f64,
    pub average_f_score: f64,
}

/// Joint grid search maximizing the average cumulative F-score. Ties go to
/// the lower threshold, then to the lexicographically smaller weights.
pub fn tune_thresholds(
    cases: &[PrefixCase],
    candidates: &[DtPath],
    lambda_grid: &[LambdaWeights],
    th_grid: &[f64],
) -> Option<Tuned> {
    let mut ths = th_grid.to_vec();
    ths.sort_by(f64::total_cmp);
    let mut lambdas = lambda_grid.to_vec();
    lambdas.sort_by(|a, b| a.l1.total_cmp(&b.l1).then(a.l2.total_cmp(&b.l2)).then(a.l3.total_cmp(&b.l3)));
    // the chosen path depends only on lambda
    let choices: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|l| cases.iter().map(|c| choose(c, candidates, l).map_or(0.0, |i| c.full_fitness[i])).collect())
        .collect();
    let mut best: Option<Tuned> = None;
    for &th in &ths {
        for (l, fits) in lambdas.iter().zip(&choices) {
            let report = aggregate(cases.iter().zip(fits).map(|(c, &f)| (c.k, classify(f, c.label, th))));
            if best.is_none_or(|b| report.average_f_score > b.average_f_score) {
                best = Some(Tuned { lambda: *l, th_fit: th, average_f_score: report.average_f_score });
            }
        }
    }
    best
}
