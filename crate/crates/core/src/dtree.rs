//! Binary decision trees over DECLARE features, cross-validated grid search
//! and root-to-leaf path extraction.
//!
//! Every internal node tests whether a feature is satisfied. The violated
//! branch is the left one and is visited first; node ids are assigned in
//! pre-order.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::declare::{Constraint, RvState};
use crate::encoder::{mutual_info_columns, ConstraintUniverse, EncodedDataset, TopH};
use crate::math;

const SATISFIED: u8 = RvState::Satisfied as u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    /// Impurity of a two-class distribution given (possibly weighted) counts.
    /// Entropy is measured in bits.
    pub fn impurity(self, pos: f64, neg: f64) -> f64 {
        let total = pos + neg;
        if total <= 0.0 {
            return 0.0;
        }
        let (p, q) = (pos / total, neg / total);
        match self {
            Criterion::Gini => 1.0 - p * p - q * q,
            Criterion::Entropy => {
                let h = |x: f64| if x > 0.0 { -x * math::log2(x) } else { 0.0 };
                h(p) + h(q)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    None,
    Balanced,
}

/// Minimum node size for a split: a fraction of the training rows or an
/// absolute count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MinSplit {
    Count(usize),
    Fraction(f64),
}

impl MinSplit {
    pub fn resolve(self, n_train: usize) -> usize {
        match self {
            MinSplit::Count(c) => c.max(2),
            MinSplit::Fraction(f) => (math::ceil(f * n_train as f64 - 1e-9) as usize).max(2),
        }
    }
}

impl fmt::Display for MinSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MinSplit::Count(c) => write!(f, "{c}"),
            MinSplit::Fraction(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub criterion: Criterion,
    /// `None` is unbounded.
    pub max_depth: Option<usize>,
    pub class_weight: ClassWeight,
    pub min_samples_split: MinSplit,
    pub min_samples_leaf: usize,
    pub top_h: TopH,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            criterion: Criterion::Gini,
            max_depth: None,
            class_weight: ClassWeight::None,
            min_samples_split: MinSplit::Count(2),
            min_samples_leaf: 1,
            top_h: TopH::All,
        }
    }
}

impl Hyperparameters {
    /// The full tuning grid, feature-selection rule outermost.
    pub fn default_grid() -> Vec<Hyperparameters> {
        let mut out = Vec::new();
        for top_h in [TopH::Half, TopH::ThirtyPercent, TopH::Sqrt] {
            for criterion in [Criterion::Gini, Criterion::Entropy] {
                for max_depth in [Some(4), Some(6), Some(8), Some(10), None] {
                    for class_weight in [ClassWeight::None, ClassWeight::Balanced] {
                        for min_samples_split in [
                            MinSplit::Fraction(0.1),
                            MinSplit::Fraction(0.2),
                            MinSplit::Fraction(0.3),
                            MinSplit::Count(2),
                        ] {
                            for min_samples_leaf in [1, 10, 16] {
                                out.push(Hyperparameters {
                                    criterion,
                                    max_depth,
                                    class_weight,
                                    min_samples_split,
                                    min_samples_leaf,
                                    top_h,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// The branch value a path step requires of its constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnedValue {
    Satisfied,
    Violated,
}

impl fmt::Display for LearnedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnedValue::Satisfied => "satisfied",
            LearnedValue::Violated => "violated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    pub constraint: Constraint,
    pub violated: Box<TreeNode>,
    pub satisfied: Box<TreeNode>,
}

/// A tree node. Counts are raw training samples; `impurity` is computed
/// from them with the tree's criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub polarity: u8,
    pub impurity: f64,
    pub pos_samples: usize,
    pub neg_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn samples(&self) -> usize {
        self.pos_samples + self.neg_samples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub column_index: ConstraintUniverse,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub constraint: Constraint,
    pub value: LearnedValue,
    pub column: usize,
    pub node_id: usize,
}

/// A root-to-leaf path read as a classification rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtPath {
    pub steps: Vec<PathStep>,
    pub polarity: u8,
    pub impurity: f64,
    pub pos_samples: usize,
    pub neg_samples: usize,
    pub leaf_id: usize,
}

impl DtPath {
    pub fn samples(&self) -> usize {
        self.pos_samples + self.neg_samples
    }

    /// Node ids from the root to the leaf.
    pub fn node_ids(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.node_id).chain(core::iter::once(self.leaf_id)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("row has {got} features, the tree expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("empty training set")]
    EmptyData,
    #[error("empty hyperparameter grid")]
    EmptyGrid,
}

impl DecisionTree {
    /// Class of the leaf reached by an encoded row.
    pub fn predict(&self, row: &[u8]) -> Result<u8, TreeError> {
        Ok(self.leaf_for(row)?.polarity)
    }

    pub fn leaf_for(&self, row: &[u8]) -> Result<&TreeNode, TreeError> {
        let expected = self.column_index.len();
        if row.len() != expected {
            return Err(TreeError::WidthMismatch { expected, got: row.len() });
        }
        let mut node = &self.root;
        while let Some(split) = &node.split {
            node = if row[split.column] == SATISFIED { &split.satisfied } else { &split.violated };
        }
        Ok(node)
    }

    /// One path per leaf, depth first, violated branch first.
    pub fn extract_paths(&self) -> Vec<DtPath> {
        let mut out = Vec::new();
        let mut steps = Vec::new();
        collect_paths(&self.root, &mut steps, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        fn d(n: &TreeNode) -> usize {
            n.split.as_ref().map_or(0, |s| 1 + d(&s.satisfied).max(d(&s.violated)))
        }
        d(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        fn c(n: &TreeNode) -> usize {
            n.split.as_ref().map_or(1, |s| c(&s.satisfied) + c(&s.violated))
        }
        c(&self.root)
    }
}

fn collect_paths(node: &TreeNode, steps: &mut Vec<PathStep>, out: &mut Vec<DtPath>) {
    match &node.split {
        None => out.push(DtPath {
            steps: steps.clone(),
            polarity: node.polarity,
            impurity: node.impurity,
            pos_samples: node.pos_samples,
            neg_samples: node.neg_samples,
            leaf_id: node.id,
        }),
        Some(split) => {
            for (value, child) in
                [(LearnedValue::Violated, &split.violated), (LearnedValue::Satisfied, &split.satisfied)]
            {
                steps.push(PathStep {
                    constraint: split.constraint.clone(),
                    value,
                    column: split.column,
                    node_id: node.id,
                });
                collect_paths(child, steps, out);
                steps.pop();
            }
        }
    }
}

/// Column-major bitsets of "feature == satisfied" plus class masks.
#[derive(Debug, Clone)]
pub struct BitData {
    n_rows: usize,
    words: usize,
    columns: Vec<Vec<u64>>,
    positive: Vec<u64>,
    negative: Vec<u64>,
}

impl BitData {
    pub fn new(data: &EncodedDataset) -> Self {
        let words = data.n_rows.div_ceil(64);
        let mut columns = vec![vec![0u64; words]; data.n_cols];
        let mut positive = vec![0u64; words];
        let mut negative = vec![0u64; words];
        for i in 0..data.n_rows {
            let (w, b) = (i / 64, 1u64 << (i % 64));
            if data.labels[i] != 0 {
                positive[w] |= b;
            } else {
                negative[w] |= b;
            }
            for (j, col) in columns.iter_mut().enumerate() {
                if data.get(i, j) == SATISFIED {
                    col[w] |= b;
                }
            }
        }
        BitData { n_rows: data.n_rows, words, columns, positive, negative }
    }

    pub fn all_rows(&self) -> Vec<u64> {
        self.mask_of(0..self.n_rows)
    }

    pub fn mask_of(&self, rows: impl IntoIterator<Item = usize>) -> Vec<u64> {
        let mut m = vec![0u64; self.words];
        for i in rows {
            m[i / 64] |= 1u64 << (i % 64);
        }
        m
    }

    fn counts(&self, set: &[u64]) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for ((s, p), n) in set.iter().zip(&self.positive).zip(&self.negative).take(self.words) {
            pos += (s & p).count_ones() as usize;
            neg += (s & n).count_ones() as usize;
        }
        (pos, neg)
    }

    fn counts_in_column(&self, set: &[u64], column: &[u64]) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for w in 0..self.words {
            let s = set[w] & column[w];
            pos += (s & self.positive[w]).count_ones() as usize;
            neg += (s & self.negative[w]).count_ones() as usize;
        }
        (pos, neg)
    }
}

struct Builder<'a> {
    data: &'a BitData,
    universe: &'a ConstraintUniverse,
    columns: &'a [usize],
    hp: Hyperparameters,
    w_pos: f64,
    w_neg: f64,
    min_split: usize,
    next_id: usize,
}

impl Builder<'_> {
    fn node(&mut self, set: Vec<u64>, depth: usize) -> TreeNode {
        let (pos, neg) = self.data.counts(&set);
        let id = self.next_id;
        self.next_id += 1;
        let crit = self.hp.criterion;
        let polarity = (pos as f64 * self.w_pos > neg as f64 * self.w_neg) as u8;
        let mut node = TreeNode {
            id,
            polarity,
            impurity: crit.impurity(pos as f64, neg as f64),
            pos_samples: pos,
            neg_samples: neg,
            split: None,
        };
        let n = pos + neg;
        let depth_ok = self.hp.max_depth.is_none_or(|d| depth < d);
        if pos == 0 || neg == 0 || n < self.min_split || !depth_ok {
            return node;
        }
        let Some(local) = self.best_split(&set, pos, neg) else {
            return node;
        };
        let column = &self.data.columns[self.columns[local]];
        let sat: Vec<u64> = set.iter().zip(column).map(|(s, c)| s & c).collect();
        let vio: Vec<u64> = set.iter().zip(column).map(|(s, c)| s & !c).collect();
        let violated = Box::new(self.node(vio, depth + 1));
        let satisfied = Box::new(self.node(sat, depth + 1));
        node.split = Some(Split {
            column: local,
            constraint: self.universe.constraints[self.columns[local]].clone(),
            violated,
            satisfied,
        });
        node
    }

    fn best_split(&self, set: &[u64], pos: usize, neg: usize) -> Option<usize> {
        let crit = self.hp.criterion;
        let (wp, wn) = (pos as f64 * self.w_pos, neg as f64 * self.w_neg);
        let total = wp + wn;
        let parent = crit.impurity(wp, wn);
        let min_leaf = self.hp.min_samples_leaf.max(1);
        let mut best: Option<(usize, f64)> = None;
        for (local, &j) in self.columns.iter().enumerate() {
            let (lp, ln) = self.data.counts_in_column(set, &self.data.columns[j]);
            let (rp, rn) = (pos - lp, neg - ln);
            if lp + ln < min_leaf || rp + rn < min_leaf {
                continue;
            }
            let (lwp, lwn) = (lp as f64 * self.w_pos, ln as f64 * self.w_neg);
            let (rwp, rwn) = (rp as f64 * self.w_pos, rn as f64 * self.w_neg);
            let child =
                ((lwp + lwn) * crit.impurity(lwp, lwn) + (rwp + rwn) * crit.impurity(rwp, rwn)) / total;
            let gain = parent - child;
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g + 1e-12) {
                best = Some((local, gain));
            }
        }
        best.map(|(local, _)| local)
    }
}

/// Grows a tree on the rows in `rows` using the columns `columns` of
/// `universe` (the tree's column `i` is `columns[i]`).
pub fn induce_on(
    data: &BitData,
    universe: &ConstraintUniverse,
    columns: &[usize],
    rows: &[u64],
    hp: &Hyperparameters,
) -> DecisionTree {
    let (pos, neg) = data.counts(rows);
    let n = pos + neg;
    let (w_pos, w_neg) = match hp.class_weight {
        ClassWeight::Balanced if pos > 0 && neg > 0 => {
            (n as f64 / (2.0 * pos as f64), n as f64 / (2.0 * neg as f64))
        }
        _ => (1.0, 1.0),
    };
    if pos == 0 || neg == 0 {
        log::warn!("training data holds a single class; the tree is a single leaf");
    }
    let mut b = Builder {
        data,
        universe,
        columns,
        hp: *hp,
        w_pos,
        w_neg,
        min_split: hp.min_samples_split.resolve(n),
        next_id: 0,
    };
    let root = b.node(rows.to_vec(), 0);
    DecisionTree { root, column_index: universe.select(columns), hyperparameters: *hp }
}

/// Grows a tree on all rows and columns of `data`.
pub fn induce(data: &EncodedDataset, hp: &Hyperparameters) -> Result<DecisionTree, TreeError> {
    if data.n_rows == 0 {
        return Err(TreeError::EmptyData);
    }
    let bits = BitData::new(data);
    let columns: Vec<usize> = (0..data.n_cols).collect();
    Ok(induce_on(&bits, &data.column_index, &columns, &bits.all_rows(), hp))
}

/// Positive-class F-score with 0/0 taken as 0.
pub fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Stratified fold assignment: each class is shuffled with a fixed seed and
/// dealt round-robin over the folds.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| (labels[i] != 0) as u8 == class).collect();
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            assignment[i] = r % folds.max(1);
        }
    }
    assignment
}

/// Training data prepared once for many grid points.
pub struct GridData<'a> {
    pub data: &'a EncodedDataset,
    pub bits: BitData,
    pub folds: Vec<usize>,
    pub n_folds: usize,
    selections: Vec<(TopH, Vec<usize>)>,
}

impl<'a> GridData<'a> {
    /// Fixes the fold assignment and the feature ranking of every top-h rule
    /// appearing in `grid`. With fewer than two samples in some class, no
    /// cross-validation is possible and `n_folds` is 0.
    pub fn new(data: &'a EncodedDataset, grid: &[Hyperparameters], folds: usize, seed: u64) -> Self {
        let pos = data.labels.iter().filter(|&&y| y != 0).count();
        let minority = pos.min(data.n_rows - pos);
        let n_folds = if minority < 2 { 0 } else { folds.min(minority) };
        if n_folds > 0 && n_folds < folds {
            log::warn!("only {minority} samples in the minority class: using {n_folds} folds");
        }
        let mut selections: Vec<(TopH, Vec<usize>)> = Vec::new();
        for hp in grid {
            if !selections.iter().any(|(r, _)| *r == hp.top_h) {
                selections.push((hp.top_h, mutual_info_columns(data, hp.top_h)));
            }
        }
        GridData {
            data,
            bits: BitData::new(data),
            folds: stratified_folds(&data.labels, n_folds.max(1), seed),
            n_folds,
            selections,
        }
    }

    pub fn columns_for(&self, rule: TopH) -> Vec<usize> {
        self.selections
            .iter()
            .find(|(r, _)| *r == rule)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| mutual_info_columns(self.data, rule))
    }

    /// Mean positive-class F-score over the folds.
    pub fn cv_score(&self, hp: &Hyperparameters) -> f64 {
        if self.n_folds == 0 {
            return 0.0;
        }
        let columns = self.columns_for(hp.top_h);
        let mut total = 0.0;
        for fold in 0..self.n_folds {
            let train = self.bits.mask_of((0..self.data.n_rows).filter(|&i| self.folds[i] != fold));
            let tree = induce_on(&self.bits, &self.data.column_index, &columns, &train, hp);
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for i in (0..self.data.n_rows).filter(|&i| self.folds[i] == fold) {
                let row = self.data.row(i);
                let projected: Vec<u8> = columns.iter().map(|&j| row[j]).collect();
                let predicted = tree.predict(&projected).expect("projected width");
                match (predicted, self.data.labels[i] != 0) {
                    (1, true) => tp += 1,
                    (1, false) => fp += 1,
                    (_, true) => fn_ += 1,
                    _ => {}
                }
            }
            total += f_score(tp, fp, fn_);
        }
        total / self.n_folds as f64
    }

    /// Retrains `hp` on all rows.
    pub fn fit(&self, hp: &Hyperparameters) -> DecisionTree {
        let columns = self.columns_for(hp.top_h);
        induce_on(&self.bits, &self.data.column_index, &columns, &self.bits.all_rows(), hp)
    }
}

/// Index of the best score; the first one wins ties.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub hyperparameters: Hyperparameters,
    pub cv_f_score: f64,
}

/// Selects the grid point with the best mean cross-validated F-score and
/// retrains it on the whole training set.
pub fn grid_search_cv(
    train: &EncodedDataset,
    grid: &[Hyperparameters],
    folds: usize,
    seed: u64,
) -> Result<(GridResult, DecisionTree), TreeError> {
    if grid.is_empty() {
        return Err(TreeError::EmptyGrid);
    }
    if train.n_rows == 0 {
        return Err(TreeError::EmptyData);
    }
    let prepared = GridData::new(train, grid, folds, seed);
    let scores: Vec<f64> = grid.iter().map(|hp| prepared.cv_score(hp)).collect();
    let best = argmax_first(&scores).unwrap_or(0);
    let tree = prepared.fit(&grid[best]);
    Ok((GridResult { hyperparameters: grid[best], cv_f_score: scores[best] }, tree))
}
