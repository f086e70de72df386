//! Constraint universe construction, feature filtering and the DECLARE
//! encoding of (prefix) logs into RV-code matrices.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::declare::{count_stats, rv_state, Constraint, Family, Template};
use crate::log::{EventLog, PrefixLog, Trace};
use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("no constraint survives the support threshold")]
    EmptyUniverse,
    #[error("support must lie in (0, 1], got {0}")]
    InvalidSupport(String),
    #[error("constraint {0} appears twice")]
    DuplicateConstraint(String),
    #[error("row {0} is unlabeled")]
    Unlabeled(String),
    #[error("column {0} out of range")]
    ColumnOutOfRange(usize),
}

/// The ordered set of constraints defining the feature columns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintUniverse {
    pub constraints: Vec<Constraint>,
    pub families_used: BTreeSet<Family>,
    pub source_alphabet: BTreeSet<String>,
}

impl ConstraintUniverse {
    pub fn from_constraints(
        constraints: Vec<Constraint>,
        source_alphabet: BTreeSet<String>,
    ) -> Result<Self, EncodeError> {
        let mut seen = BTreeSet::new();
        for c in &constraints {
            if !seen.insert(c) {
                return Err(EncodeError::DuplicateConstraint(c.to_string()));
            }
        }
        let families_used = constraints.iter().map(|c| c.template.family()).collect();
        Ok(ConstraintUniverse { constraints, families_used, source_alphabet })
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn index_of(&self, c: &Constraint) -> Option<usize> {
        self.constraints.iter().position(|x| x == c)
    }

    /// Keeps the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> ConstraintUniverse {
        let constraints: Vec<Constraint> = columns.iter().map(|&j| self.constraints[j].clone()).collect();
        ConstraintUniverse {
            families_used: constraints.iter().map(|c| c.template.family()).collect(),
            constraints,
            source_alphabet: self.source_alphabet.clone(),
        }
    }
}

/// Instantiates every template of `families` over the alphabet: unary
/// templates per activity and per `n`, binary templates per ordered pair of
/// distinct activities. Order: template order, then activities.
pub fn build_universe(
    alphabet: &BTreeSet<String>,
    families: &BTreeSet<Family>,
    existence_ns: &[u32],
) -> ConstraintUniverse {
    let mut ns: Vec<u32> = existence_ns.iter().copied().filter(|n| *n > 0).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut constraints = Vec::new();
    for family in Family::ALL.iter().filter(|f| families.contains(f)) {
        for template in Template::of_family(*family, &ns) {
            if template.arity() == 1 {
                for a in alphabet {
                    constraints.push(Constraint::unary(template, a.clone()));
                }
            } else {
                for a in alphabet {
                    for b in alphabet.iter().filter(|b| *b != a) {
                        constraints.push(Constraint::binary(template, a.clone(), b.clone()));
                    }
                }
            }
        }
    }
    ConstraintUniverse { constraints, families_used: families.clone(), source_alphabet: alphabet.clone() }
}

fn check_support(support: f64) -> Result<(), EncodeError> {
    if support > 0.0 && support <= 1.0 {
        Ok(())
    } else {
        Err(EncodeError::InvalidSupport(support.to_string()))
    }
}

/// Keeps unary constraints over activities present in at least
/// `support * |log|` traces and binary constraints whose two activities are
/// both present in at least that many traces.
pub fn apriori_filter(
    universe: &ConstraintUniverse,
    log: &EventLog,
    support: f64,
) -> Result<ConstraintUniverse, EncodeError> {
    check_support(support)?;
    let min_count = support * log.len() as f64 - 1e-9;
    let mut single: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for t in &log.traces {
        let present: BTreeSet<&str> = t.events.iter().map(|e| e.activity.as_str()).collect();
        for a in &present {
            *single.entry(a).or_default() += 1;
            for b in present.range::<&str, _>((core::ops::Bound::Excluded(a), core::ops::Bound::Unbounded)) {
                *pairs.entry((a, b)).or_default() += 1;
            }
        }
    }
    let frequent = |count: Option<&usize>| count.is_some_and(|c| *c as f64 >= min_count);
    let kept: Vec<Constraint> = universe
        .constraints
        .iter()
        .filter(|c| match &c.target {
            None => frequent(single.get(c.activation.as_str())),
            Some(b) => {
                let (x, y) = if c.activation.as_str() < b.as_str() {
                    (c.activation.as_str(), b.as_str())
                } else {
                    (b.as_str(), c.activation.as_str())
                };
                frequent(pairs.get(&(x, y)))
            }
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(EncodeError::EmptyUniverse);
    }
    Ok(ConstraintUniverse {
        families_used: universe.families_used.clone(),
        source_alphabet: universe.source_alphabet.clone(),
        constraints: kept,
    })
}

/// Identifies a matrix row: the case and, for prefixes, the prefix length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowId {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            Some(k) => write!(f, "{}#{k}", self.case_id),
            None => f.write_str(&self.case_id),
        }
    }
}

/// Row-major matrix of RV codes with labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub n_rows: usize,
    pub n_cols: usize,
    pub matrix: Vec<u8>,
    pub labels: Vec<u8>,
    pub column_index: ConstraintUniverse,
    pub row_index: Vec<RowId>,
}

impl EncodedDataset {
    pub fn row(&self, i: usize) -> &[u8] {
        &self.matrix[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.matrix[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<u8> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Projection onto the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<EncodedDataset, EncodeError> {
        if let Some(&bad) = columns.iter().find(|&&j| j >= self.n_cols) {
            return Err(EncodeError::ColumnOutOfRange(bad));
        }
        let mut matrix = Vec::with_capacity(self.n_rows * columns.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            matrix.extend(columns.iter().map(|&j| row[j]));
        }
        Ok(EncodedDataset {
            n_rows: self.n_rows,
            n_cols: columns.len(),
            matrix,
            labels: self.labels.clone(),
            column_index: self.column_index.select(columns),
            row_index: self.row_index.clone(),
        })
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> EncodedDataset {
        let mut matrix = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            matrix.extend_from_slice(self.row(i));
        }
        EncodedDataset {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            matrix,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            column_index: self.column_index.clone(),
            row_index: rows.iter().map(|&i| self.row_index[i].clone()).collect(),
        }
    }
}

const UNKNOWN_IN_TRACE: u32 = u32::MAX;
const UNKNOWN_IN_CONSTRAINT: u32 = u32::MAX - 1;

/// A universe compiled to integer activity ids for fast evaluation.
#[derive(Debug, Clone)]
pub struct CompiledUniverse {
    ids: BTreeMap<String, u32>,
    columns: Vec<(Template, u32, Option<u32>)>,
}

impl CompiledUniverse {
    pub fn new(universe: &ConstraintUniverse) -> Self {
        let mut ids = BTreeMap::new();
        for c in &universe.constraints {
            for a in core::iter::once(&c.activation).chain(c.target.iter()) {
                let next = ids.len() as u32;
                ids.entry(a.clone()).or_insert(next);
            }
        }
        let columns = universe
            .constraints
            .iter()
            .map(|c| {
                let id = |a: &String| ids.get(a).copied().unwrap_or(UNKNOWN_IN_CONSTRAINT);
                (c.template, id(&c.activation), c.target.as_ref().map(id))
            })
            .collect();
        CompiledUniverse { ids, columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Maps activities to ids; activities outside the universe never match.
    pub fn ids_of<S: AsRef<str>>(&self, activities: &[S]) -> Vec<u32> {
        activities.iter().map(|a| self.ids.get(a.as_ref()).copied().unwrap_or(UNKNOWN_IN_TRACE)).collect()
    }

    /// RV codes of every column on one trace.
    pub fn encode_ids(&self, trace: &[u32], done: bool, out: &mut Vec<u8>) {
        for (template, a, b) in &self.columns {
            let stats = count_stats(*template, a, b.as_ref(), trace, done);
            let state = rv_state(*template, &stats).expect("counting covers every criteria row");
            out.push(state.code());
        }
    }

    pub fn encode_trace<S: AsRef<str>>(&self, activities: &[S], done: bool) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width());
        self.encode_ids(&self.ids_of(activities), done, &mut out);
        out
    }
}

/// Encodes rows given as (row id, trace, label) triples.
pub fn encode_rows<'a, I>(rows: I, universe: &ConstraintUniverse, done: bool) -> EncodedDataset
where
    I: IntoIterator<Item = (RowId, &'a Trace, u8)>,
{
    let compiled = CompiledUniverse::new(universe);
    let mut matrix = Vec::new();
    let mut labels = Vec::new();
    let mut row_index = Vec::new();
    for (id, trace, label) in rows {
        let acts = compiled.ids_of(&trace.activities());
        compiled.encode_ids(&acts, done, &mut matrix);
        labels.push(label);
        row_index.push(id);
    }
    EncodedDataset {
        n_rows: labels.len(),
        n_cols: universe.len(),
        matrix,
        labels,
        column_index: universe.clone(),
        row_index,
    }
}

/// Encodes complete labeled traces (`done = true` for training logs).
pub fn encode_log(
    log: &EventLog,
    universe: &ConstraintUniverse,
    done: bool,
) -> Result<EncodedDataset, EncodeError> {
    let mut rows = Vec::with_capacity(log.len());
    for t in &log.traces {
        let label = t.label.ok_or_else(|| EncodeError::Unlabeled(t.case_id.clone()))?;
        rows.push((RowId { case_id: t.case_id.clone(), k: None }, t, label));
    }
    Ok(encode_rows(rows, universe, done))
}

/// Encodes a prefix log; prefixes are ongoing, so `done = false`.
pub fn encode_prefix_log(prefixes: &PrefixLog, universe: &ConstraintUniverse) -> EncodedDataset {
    let rows = prefixes
        .entries
        .iter()
        .map(|e| (RowId { case_id: e.case_id.clone(), k: Some(e.k) }, &e.prefix, e.label));
    encode_rows(rows, universe, false)
}

/// Plug-in mutual information (natural log) between a discrete feature with
/// codes 0..=3 and a binary label.
pub fn mutual_information(feature: &[u8], labels: &[u8]) -> f64 {
    let n = feature.len().min(labels.len());
    if n == 0 {
        return 0.0;
    }
    let mut joint = [[0usize; 2]; 4];
    for i in 0..n {
        joint[(feature[i] & 3) as usize][(labels[i] != 0) as usize] += 1;
    }
    let nf = n as f64;
    let px: Vec<f64> = joint.iter().map(|r| (r[0] + r[1]) as f64 / nf).collect();
    let py = [0, 1].map(|y| joint.iter().map(|r| r[y]).sum::<usize>() as f64 / nf);
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / nf;
                mi += pxy * math::ln(pxy / (px[x] * py[y]));
            }
        }
    }
    mi.max(0.0)
}

/// How many of the ranked features to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopH {
    #[serde(rename = "50%")]
    Half,
    #[serde(rename = "30%")]
    ThirtyPercent,
    #[serde(rename = "sqrt")]
    Sqrt,
    #[serde(rename = "all")]
    All,
}

impl TopH {
    /// Number kept out of `p` features (rounded up, at least one).
    pub fn count(self, p: usize) -> usize {
        if p == 0 {
            return 0;
        }
        let h = match self {
            TopH::Half => math::ceil(p as f64 * 0.5),
            TopH::ThirtyPercent => math::ceil(p as f64 * 0.3 - 1e-9),
            TopH::Sqrt => math::ceil(math::sqrt(p as f64) - 1e-9),
            TopH::All => p as f64,
        };
        (h as usize).clamp(1, p)
    }
}

impl fmt::Display for TopH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopH::Half => "50%",
            TopH::ThirtyPercent => "30%",
            TopH::Sqrt => "sqrt",
            TopH::All => "all",
        })
    }
}

/// Column indices ranked by decreasing mutual information with the label
/// (ties keep column order), truncated by `rule`.
pub fn mutual_info_columns(train: &EncodedDataset, rule: TopH) -> Vec<usize> {
    let scores: Vec<f64> =
        (0..train.n_cols).map(|j| mutual_information(&train.column(j), &train.labels)).collect();
    let mut order: Vec<usize> = (0..train.n_cols).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
    order.truncate(rule.count(train.n_cols));
    order
}

/// The selected constraints, most informative first.
pub fn mutual_info_rank(train: &EncodedDataset, rule: TopH) -> ConstraintUniverse {
    train.column_index.select(&mutual_info_columns(train, rule))
}

/// Number of cells holding each code.
pub fn code_histogram(data: &EncodedDataset) -> [usize; 4] {
    let mut h = [0usize; 4];
    for &c in &data.matrix {
        h[(c & 3) as usize] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::Trace;
    use alloc::borrow::ToOwned;

    fn alphabet(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| (*s).to_owned()).collect()
    }

    fn families(fs: &[Family]) -> BTreeSet<Family> {
        fs.iter().copied().collect()
    }

    #[test]
    fn universe_sizes() {
        let ten: Vec<String> = (0..10).map(|i| alloc::format!("a{i}")).collect();
        let sigma: BTreeSet<String> = ten.into_iter().collect();
        let all = families(&Family::ALL);
        assert_eq!(build_universe(&sigma, &all, &[1]).len(), 4 * 10 + 14 * 10 * 9);
        assert_eq!(build_universe(&alphabet(&["a", "b"]), &families(&[Family::E]), &[1]).len(), 8);
        assert!(build_universe(&sigma, &BTreeSet::new(), &[1]).is_empty());
    }

    #[test]
    fn universe_order() {
        let u = build_universe(&alphabet(&["b", "a"]), &families(&[Family::E, Family::C]), &[1]);
        let names: Vec<String> = u.constraints.iter().map(|c| c.to_string()).collect();
        assert_eq!(names[0], "existence(n=1, a)");
        assert_eq!(names[1], "existence(n=1, b)");
        assert_eq!(names[2], "absence(n=2, a)");
        assert_eq!(names[8], "choice(a, b)");
        assert_eq!(names[9], "choice(b, a)");
    }

    #[test]
    fn apriori_support() {
        let traces = vec![
            Trace::from_activities("1", &["a", "b"]),
            Trace::from_activities("2", &["a", "c"]),
            Trace::from_activities("3", &["a", "b"]),
            Trace::from_activities("4", &["a"]),
        ];
        let log = EventLog::new(traces).unwrap();
        let u = build_universe(&log.alphabet, &families(&[Family::E, Family::PR]), &[1]);
        let kept = apriori_filter(&u, &log, 0.5).unwrap();
        assert!(kept.constraints.iter().all(|c| c.activation != "c" && c.target.as_deref() != Some("c")));
        assert!(kept.index_of(&Constraint::binary(Template::Response, "b", "a")).is_some());
        // b and c never share a trace, so only their pairs go
        let tiny = apriori_filter(&u, &log, 1e-9).unwrap();
        let pair_bc = |c: &Constraint| {
            let mut v = [c.activation.as_str(), c.target.as_deref().unwrap_or("")];
            v.sort_unstable();
            v == ["b", "c"]
        };
        let expected: Vec<Constraint> = u.constraints.iter().filter(|c| !pair_bc(c)).cloned().collect();
        assert_eq!(tiny.constraints, expected);
        assert!(apriori_filter(&u, &log, 0.0).is_err());
    }

    #[test]
    fn unknown_activities_are_vacuous() {
        let u = ConstraintUniverse::from_constraints(
            vec![Constraint::binary(Template::Response, "zz", "a")],
            BTreeSet::new(),
        )
        .unwrap();
        let c = CompiledUniverse::new(&u);
        assert_eq!(c.encode_trace(&["q", "r"], true), vec![1]);
    }

    #[test]
    fn mutual_information_extremes() {
        let labels = [0, 1, 0, 1, 1, 0];
        let h = math::ln(2.0);
        assert!((mutual_information(&labels, &labels) - h).abs() < 1e-12);
        assert_eq!(mutual_information(&[1; 6], &labels), 0.0);
    }

    #[test]
    fn top_h_counts() {
        assert_eq!(TopH::Half.count(48), 24);
        assert_eq!(TopH::ThirtyPercent.count(10), 3);
        assert_eq!(TopH::Sqrt.count(49), 7);
        assert_eq!(TopH::Sqrt.count(1), 1);
    }
}
