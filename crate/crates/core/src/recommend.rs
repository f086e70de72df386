//! Choosing the best positive tree path for an ongoing case and turning it
//! into prioritized temporal-relation recommendations.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::declare::{Constraint, RvState};
use crate::dtree::{DecisionTree, DtPath, LearnedValue};

/// Paths with fewer training samples are not considered.
pub const DEFAULT_MIN_PATH_SAMPLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecError {
    #[error("no positive path with at least {0} training samples")]
    NoPositivePath(usize),
    #[error("lambda weights must be non-negative and sum to 1")]
    InvalidLambda,
}

/// Weights of fitness, purity and positive-sample mass in the score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LambdaWeights {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self, RecError> {
        let w = LambdaWeights { l1, l2, l3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RecError> {
        let all = [self.l1, self.l2, self.l3];
        if all.iter().any(|x| x.is_nan() || *x < 0.0) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(RecError::InvalidLambda);
        }
        Ok(())
    }

    /// Simplex points with the given number of steps per unit
    /// (10 gives 0, 0.1, ..., 1), in lexicographic order.
    pub fn simplex_grid(steps: u32) -> Vec<LambdaWeights> {
        let s = steps.max(1);
        let mut out = Vec::new();
        for i in 0..=s {
            for j in 0..=(s - i) {
                let k = s - i - j;
                out.push(LambdaWeights {
                    l1: i as f64 / s as f64,
                    l2: j as f64 / s as f64,
                    l3: k as f64 / s as f64,
                });
            }
        }
        out
    }
}

impl Default for LambdaWeights {
    fn default() -> Self {
        LambdaWeights { l1: 0.4, l2: 0.4, l3: 0.2 }
    }
}

/// Agreement between a learned branch value and the current state.
pub fn compliance(learned: LearnedValue, rv: RvState) -> f64 {
    use LearnedValue as L;
    use RvState as S;
    match (learned, rv) {
        (L::Satisfied, S::Satisfied | S::PossiblySatisfied)
        | (L::Violated, S::Violated | S::PossiblyViolated) => 1.0,
        (L::Satisfied, S::PossiblyViolated) | (L::Violated, S::PossiblySatisfied) => 0.5,
        _ => 0.0,
    }
}

/// Mean compliance of the path's steps on `prefix`; a path without steps
/// has fitness 1.
pub fn fitness<S: AsRef<str>>(prefix: &[S], path: &DtPath, done: bool) -> f64 {
    if path.steps.is_empty() {
        return 1.0;
    }
    let total: f64 =
        path.steps.iter().map(|s| compliance(s.value, s.constraint.evaluate(prefix, done))).sum();
    total / path.steps.len() as f64
}

/// The recommendation score of a path with a known fitness. Impurity is
/// clamped to one (gini and binary entropy in bits already are).
pub fn rho_from_fitness(fitness: f64, path: &DtPath, lambda: &LambdaWeights, pos_total: usize) -> f64 {
    let purity = 1.0 - path.impurity.clamp(0.0, 1.0);
    let mass = if pos_total == 0 { 0.0 } else { path.pos_samples as f64 / pos_total as f64 };
    lambda.l1 * fitness + lambda.l2 * purity + lambda.l3 * mass
}

pub fn rho<S: AsRef<str>>(prefix: &[S], path: &DtPath, lambda: &LambdaWeights, pos_total: usize) -> f64 {
    rho_from_fitness(fitness(prefix, path, false), path, lambda, pos_total)
}

/// Positive paths with at least `min_samples` training samples, in
/// depth-first order.
pub fn positive_paths(tree: &DecisionTree, min_samples: usize) -> Vec<DtPath> {
    tree.extract_paths().into_iter().filter(|p| p.polarity == 1 && p.samples() >= min_samples).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPath {
    pub path: DtPath,
    pub fitness: f64,
    pub rho: f64,
}

/// Scores every candidate path on the prefix.
pub fn score_paths<S: AsRef<str>>(
    prefix: &[S],
    candidates: &[DtPath],
    lambda: &LambdaWeights,
) -> Vec<ScoredPath> {
    let pos_total: usize = candidates.iter().map(|p| p.pos_samples).sum();
    candidates
        .iter()
        .map(|p| {
            let f = fitness(prefix, p, false);
            ScoredPath { path: p.clone(), fitness: f, rho: rho_from_fitness(f, p, lambda, pos_total) }
        })
        .collect()
}

/// Highest score; ties go to the shorter path, then to the earlier one.
pub fn pick_best(scored: &[ScoredPath]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scored.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &scored[b];
                s.rho > cur.rho + 1e-12
                    || ((s.rho - cur.rho).abs() <= 1e-12 && s.path.steps.len() < cur.path.steps.len())
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

pub fn best_positive_path<S: AsRef<str>>(
    prefix: &[S],
    tree: &DecisionTree,
    lambda: &LambdaWeights,
    min_path_samples: usize,
) -> Result<ScoredPath, RecError> {
    let candidates = positive_paths(tree, min_path_samples);
    let scored = score_paths(prefix, &candidates, lambda);
    let best = pick_best(&scored).ok_or(RecError::NoPositivePath(min_path_samples))?;
    Ok(scored[best].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecCondition {
    #[serde(rename = "SHOULD BECOME SATISFIED")]
    ShouldBecomeSatisfied,
    #[serde(rename = "SHOULD NOT BE VIOLATED")]
    ShouldNotBeViolated,
    #[serde(rename = "SHOULD NOT BE SATISFIED")]
    ShouldNotBeSatisfied,
    #[serde(rename = "SHOULD BECOME VIOLATED")]
    ShouldBecomeViolated,
}

impl RecCondition {
    /// The condition for a (learned value, current state) pair; resolved
    /// states need no action or can no longer be recovered.
    pub fn for_state(learned: LearnedValue, rv: RvState) -> Option<RecCondition> {
        use LearnedValue as L;
        use RvState as S;
        match (learned, rv) {
            (L::Satisfied, S::PossiblyViolated) => Some(RecCondition::ShouldBecomeSatisfied),
            (L::Satisfied, S::PossiblySatisfied) => Some(RecCondition::ShouldNotBeViolated),
            (L::Violated, S::PossiblyViolated) => Some(RecCondition::ShouldNotBeSatisfied),
            (L::Violated, S::PossiblySatisfied) => Some(RecCondition::ShouldBecomeViolated),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecCondition::ShouldBecomeSatisfied => "SHOULD BECOME SATISFIED",
            RecCondition::ShouldNotBeViolated => "SHOULD NOT BE VIOLATED",
            RecCondition::ShouldNotBeSatisfied => "SHOULD NOT BE SATISFIED",
            RecCondition::ShouldBecomeViolated => "SHOULD BECOME VIOLATED",
        }
    }
}

impl fmt::Display for RecCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub constraint: Constraint,
    pub condition: RecCondition,
    /// 1 is the most important.
    pub priority: usize,
    /// 1-based position of the constraint on the chosen path.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub recommendations: Vec<Recommendation>,
    pub chosen_path: DtPath,
    pub rho: f64,
    pub fitness: f64,
    pub rv_snapshot: BTreeMap<String, RvState>,
}

/// Recommendations for the steps of `path` on an ongoing prefix.
pub fn recommendations_for<S: AsRef<str>>(
    prefix: &[S],
    path: &DtPath,
) -> (Vec<Recommendation>, BTreeMap<String, RvState>) {
    let mut recs = Vec::new();
    let mut snapshot = BTreeMap::new();
    for (i, step) in path.steps.iter().enumerate() {
        let rv = step.constraint.evaluate(prefix, false);
        snapshot.insert(step.constraint.to_string(), rv);
        if let Some(condition) = RecCondition::for_state(step.value, rv) {
            recs.push(Recommendation {
                constraint: step.constraint.clone(),
                condition,
                priority: recs.len() + 1,
                step: i + 1,
            });
        }
    }
    (recs, snapshot)
}

/// Picks the best positive path for the prefix and derives its
/// recommendations.
pub fn generate<S: AsRef<str>>(
    prefix: &[S],
    tree: &DecisionTree,
    lambda: &LambdaWeights,
    min_path_samples: usize,
) -> Result<RecommendationResult, RecError> {
    let best = best_positive_path(prefix, tree, lambda, min_path_samples)?;
    let (recommendations, rv_snapshot) = recommendations_for(prefix, &best.path);
    Ok(RecommendationResult {
        recommendations,
        chosen_path: best.path,
        rho: best.rho,
        fitness: best.fitness,
        rv_snapshot,
    })
}
