//! Events, traces, logs and prefix logs, plus the dataset preprocessing
//! rules: labeling, cutting, chronological splitting and prefix caps.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltlf::{self, Formula, SyntaxError};

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub activity: String,
    pub case_id: String,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: Timestamp) -> Self {
        Event { activity: activity.into(), case_id: case_id.into(), timestamp, attributes: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
    /// Trace-level attributes (the outcome attribute lives here).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub label: Option<u8>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>, events: Vec<Event>) -> Self {
        Trace { case_id: case_id.into(), events, attributes: BTreeMap::new(), label: None }
    }

    /// A trace with one event per activity, one millisecond apart.
    pub fn from_activities<S: AsRef<str>>(case_id: &str, activities: &[S]) -> Self {
        let events = activities
            .iter()
            .enumerate()
            .map(|(i, a)| Event::new(case_id, a.as_ref(), i as Timestamp))
            .collect();
        Trace::new(case_id, events)
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.activity.as_str()).collect()
    }

    pub fn start(&self) -> Option<Timestamp> {
        self.events.first().map(|e| e.timestamp)
    }

    /// The first `k` events, keeping case id, attributes and label.
    pub fn prefix(&self, k: usize) -> Trace {
        Trace {
            case_id: self.case_id.clone(),
            events: self.events[..k.min(self.events.len())].to_vec(),
            attributes: self.attributes.clone(),
            label: self.label,
        }
    }

    /// Stable sort of the events by timestamp; ties keep their order.
    pub fn sort_events(&mut self) {
        self.events.sort_by_key(|e| e.timestamp);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("case id {0:?} appears in more than one trace")]
    DuplicateCaseId(String),
    #[error("trace {0:?} has no label attribute")]
    MissingLabelAttribute(String),
    #[error("trace {case_id:?}: label value {value:?} is not binary")]
    InvalidLabelValue { case_id: String, value: String },
    #[error("trace {0:?} is unlabeled")]
    Unlabeled(String),
    #[error("trace {0:?} has no events")]
    EmptyTrace(String),
    #[error("invalid label spec: {0}")]
    InvalidLabelSpec(String),
    #[error("invalid labeling formula: {0}")]
    Formula(#[from] SyntaxError),
    #[error("split fractions must be positive and sum to 1")]
    InvalidSplit,
    #[error("split produced an empty {0} partition")]
    EmptySplit(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub alphabet: BTreeSet<String>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Result<Self, LogError> {
        let mut ids = BTreeSet::new();
        for t in &traces {
            if !ids.insert(t.case_id.as_str()) {
                return Err(LogError::DuplicateCaseId(t.case_id.clone()));
            }
        }
        let alphabet = alphabet_of(&traces);
        Ok(EventLog { traces, alphabet })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.traces.iter().map(Trace::len).collect()
    }

    /// Drops zero-length traces, logging how many were removed.
    pub fn drop_empty(mut self) -> Self {
        let before = self.traces.len();
        self.traces.retain(|t| !t.is_empty());
        if self.traces.len() < before {
            log::warn!("dropped {} empty traces", before - self.traces.len());
        }
        self
    }

    pub fn labels(&self) -> Result<Vec<u8>, LogError> {
        self.traces.iter().map(|t| t.label.ok_or_else(|| LogError::Unlabeled(t.case_id.clone()))).collect()
    }

    fn rebuilt(traces: Vec<Trace>) -> Self {
        let alphabet = alphabet_of(&traces);
        EventLog { traces, alphabet }
    }
}

fn alphabet_of(traces: &[Trace]) -> BTreeSet<String> {
    traces.iter().flat_map(|t| t.events.iter().map(|e| e.activity.clone())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixEntry {
    pub case_id: String,
    pub k: usize,
    pub prefix: Trace,
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixLog {
    pub entries: Vec<PrefixEntry>,
}

impl PrefixLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Attribute,
    LtlfViolation,
    LtlfSatisfaction,
}

/// How complete traces get their binary outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub kind: LabelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_name: Option<String>,
    /// Attribute value meaning label 1. Without it the attribute must
    /// already hold `0`/`1`/`true`/`false`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_activities: Option<Vec<String>>,
}

impl LabelSpec {
    pub fn attribute(name: &str) -> Self {
        LabelSpec {
            kind: LabelKind::Attribute,
            attribute_name: Some(name.to_owned()),
            positive_value: None,
            formula: None,
            cut_activities: None,
        }
    }

    pub fn ltlf(kind: LabelKind, formula: &str) -> Self {
        LabelSpec {
            kind,
            attribute_name: None,
            positive_value: None,
            formula: Some(formula.to_owned()),
            cut_activities: None,
        }
    }

    pub fn validate(&self) -> Result<(), LogError> {
        let bad = |m: &str| Err(LogError::InvalidLabelSpec(m.to_owned()));
        match self.kind {
            LabelKind::Attribute => {
                if self.attribute_name.is_none() {
                    return bad("attribute labeling needs attribute_name");
                }
                if self.formula.is_some() {
                    return bad("attribute labeling takes no formula");
                }
            }
            LabelKind::LtlfViolation | LabelKind::LtlfSatisfaction => {
                if self.formula.is_none() {
                    return bad("LTLf labeling needs a formula");
                }
                if self.attribute_name.is_some() || self.positive_value.is_some() {
                    return bad("LTLf labeling takes no attribute");
                }
                if let Some(f) = &self.formula {
                    ltlf::parse_formula(f)?;
                }
            }
        }
        Ok(())
    }

    /// Labels the complete traces, then applies the optional cut.
    pub fn apply(&self, log: &EventLog) -> Result<EventLog, LogError> {
        let labeled = label_traces(log, self)?;
        Ok(match &self.cut_activities {
            Some(cut) => {
                let set: BTreeSet<String> = cut.iter().cloned().collect();
                cut_traces_before(&labeled, &set)
            }
            None => labeled,
        })
    }
}

/// Assigns a binary label to every trace.
pub fn label_traces(log: &EventLog, spec: &LabelSpec) -> Result<EventLog, LogError> {
    spec.validate()?;
    let mut traces = log.traces.clone();
    match spec.kind {
        LabelKind::Attribute => {
            let name = spec.attribute_name.as_deref().unwrap_or_default();
            for t in &mut traces {
                let value = t
                    .attributes
                    .get(name)
                    .or_else(|| t.events.first().and_then(|e| e.attributes.get(name)))
                    .ok_or_else(|| LogError::MissingLabelAttribute(t.case_id.clone()))?;
                t.label = Some(attribute_label(&t.case_id, value, spec.positive_value.as_deref())?);
            }
        }
        LabelKind::LtlfViolation | LabelKind::LtlfSatisfaction => {
            let text = spec.formula.as_deref().unwrap_or_default();
            let parsed = ltlf::parse_ltlf(text, &log.alphabet)?;
            let formula: &Formula = &parsed.formula;
            for t in &mut traces {
                let holds = formula.holds(&t.activities());
                let violated = !holds;
                let positive = match spec.kind {
                    LabelKind::LtlfViolation => violated,
                    _ => holds,
                };
                t.label = Some(positive as u8);
            }
        }
    }
    Ok(EventLog::rebuilt(traces))
}

fn attribute_label(case_id: &str, value: &str, positive: Option<&str>) -> Result<u8, LogError> {
    if let Some(p) = positive {
        return Ok((value == p) as u8);
    }
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(1),
        "0" | "false" => Ok(0),
        _ => Err(LogError::InvalidLabelValue { case_id: case_id.to_owned(), value: value.to_owned() }),
    }
}

/// Truncates each trace right before its first event whose activity is in
/// `activities`. Traces left empty are dropped with a warning.
pub fn cut_traces_before(log: &EventLog, activities: &BTreeSet<String>) -> EventLog {
    if activities.is_empty() {
        return log.clone();
    }
    let traces = log
        .traces
        .iter()
        .map(|t| {
            let cut =
                t.events.iter().position(|e| activities.contains(&e.activity)).unwrap_or(t.events.len());
            t.prefix(cut)
        })
        .collect();
    EventLog::rebuilt(traces).drop_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.70, val_fraction: 0.10, test_fraction: 0.20 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), LogError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        let sum: f64 = fr.iter().sum();
        if fr.iter().any(|f| f.is_nan() || *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(LogError::InvalidSplit);
        }
        Ok(())
    }
}

/// Orders traces by start time and splits them into train, validation and
/// test. Events of train/validation traces at or after the earliest test
/// start are removed.
pub fn chronological_split(
    log: &EventLog,
    cfg: &SplitConfig,
) -> Result<(EventLog, EventLog, EventLog), LogError> {
    cfg.validate()?;
    let mut ordered: Vec<&Trace> = Vec::with_capacity(log.traces.len());
    for t in &log.traces {
        if t.is_empty() {
            return Err(LogError::EmptyTrace(t.case_id.clone()));
        }
        ordered.push(t);
    }
    ordered.sort_by_key(|t| t.start());

    let n = ordered.len() as f64;
    let train_end = crate::math::floor(cfg.train_fraction * n + 1e-9) as usize;
    let val_end = crate::math::floor((cfg.train_fraction + cfg.val_fraction) * n + 1e-9) as usize;
    let val_end = val_end.max(train_end).min(ordered.len());

    let test: Vec<Trace> = ordered[val_end..].iter().map(|t| (*t).clone()).collect();
    let test_start = test.iter().filter_map(Trace::start).min();
    let clip = |slice: &[&Trace]| -> Vec<Trace> {
        slice
            .iter()
            .map(|t| {
                let mut t = (*t).clone();
                if let Some(cut) = test_start {
                    t.events.retain(|e| e.timestamp < cut);
                }
                t
            })
            .collect()
    };
    let train = EventLog::rebuilt(clip(&ordered[..train_end])).drop_empty();
    let val = EventLog::rebuilt(clip(&ordered[train_end..val_end])).drop_empty();
    let test = EventLog::rebuilt(test);
    for (name, part) in [("train", &train), ("validation", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(LogError::EmptySplit(name));
        }
    }
    Ok((train, val, test))
}

/// All prefixes of length `1..=min(max_k, |trace| - 1)` of every trace.
pub fn make_prefix_log(log: &EventLog, max_k: usize) -> Result<PrefixLog, LogError> {
    let mut entries = Vec::new();
    for t in &log.traces {
        let label = t.label.ok_or_else(|| LogError::Unlabeled(t.case_id.clone()))?;
        let upper = max_k.min(t.len().saturating_sub(1));
        for k in 1..=upper {
            entries.push(PrefixEntry { case_id: t.case_id.clone(), k, prefix: t.prefix(k), label });
        }
    }
    Ok(PrefixLog { entries })
}

/// Nearest-rank percentile (`p` in percent) of unsorted values.
pub fn nearest_rank_percentile(values: &[usize], p: usize) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = (p * n).div_ceil(100).max(1);
    Some(sorted[rank.min(n) - 1])
}

/// Maximum prefix length evaluated for a dataset.
pub fn prefix_cap_for(dataset_name: &str, case_lengths: &[usize]) -> usize {
    let name = dataset_name.to_ascii_lowercase();
    if name.starts_with("traffic_fines") {
        return 9;
    }
    let p90 = nearest_rank_percentile(case_lengths, 90).unwrap_or(1).max(1);
    if name.starts_with("bpic2017") {
        p90.min(20)
    } else {
        p90.min(40)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn trace(id: &str, acts: &str, start: i64) -> Trace {
        let events = acts.split(',').enumerate().map(|(i, a)| Event::new(id, a, start + i as i64)).collect();
        Trace::new(id, events)
    }

    fn log(traces: Vec<Trace>) -> EventLog {
        EventLog::new(traces).unwrap()
    }

    #[test]
    fn alphabet_and_duplicates() {
        let l = log(vec![trace("1", "a,b", 0), trace("2", "c", 5)]);
        assert_eq!(l.alphabet.len(), 3);
        assert!(matches!(
            EventLog::new(vec![trace("1", "a", 0), trace("1", "b", 0)]),
            Err(LogError::DuplicateCaseId(_))
        ));
    }

    #[test]
    fn ltlf_labels_are_complementary() {
        let l = log(vec![trace("1", "b,c", 0), trace("2", "a,c", 0)]);
        let v = label_traces(&l, &LabelSpec::ltlf(LabelKind::LtlfViolation, "F(a)")).unwrap();
        let s = label_traces(&l, &LabelSpec::ltlf(LabelKind::LtlfSatisfaction, "F(a)")).unwrap();
        assert_eq!(v.labels().unwrap(), vec![1, 0]);
        assert_eq!(s.labels().unwrap(), vec![0, 1]);
        let all = label_traces(&l, &LabelSpec::ltlf(LabelKind::LtlfSatisfaction, "true")).unwrap();
        assert_eq!(all.labels().unwrap(), vec![1, 1]);
    }

    #[test]
    fn attribute_labels() {
        let mut t1 = trace("1", "a", 0);
        t1.attributes.insert("label".into(), "deviant".into());
        let mut t2 = trace("2", "a", 0);
        t2.attributes.insert("label".into(), "regular".into());
        let l = log(vec![t1, t2]);
        let mut spec = LabelSpec::attribute("label");
        assert!(matches!(label_traces(&l, &spec), Err(LogError::InvalidLabelValue { .. })));
        spec.positive_value = Some("deviant".into());
        assert_eq!(label_traces(&l, &spec).unwrap().labels().unwrap(), vec![1, 0]);
        let missing = LabelSpec::attribute("outcome");
        assert!(matches!(label_traces(&l, &missing), Err(LogError::MissingLabelAttribute(_))));
    }

    #[test]
    fn spec_field_validation() {
        let mut s = LabelSpec::attribute("x");
        s.formula = Some("F(a)".into());
        assert!(s.validate().is_err());
        let mut f = LabelSpec::ltlf(LabelKind::LtlfViolation, "F(a)");
        f.formula = None;
        assert!(f.validate().is_err());
    }

    #[test]
    fn cutting() {
        let cut: BTreeSet<String> = ["x".to_owned()].into_iter().collect();
        let l = log(vec![trace("1", "a,b,x,c", 0), trace("2", "a,b", 0), trace("3", "x,a", 0)]);
        let out = cut_traces_before(&l, &cut);
        assert_eq!(out.len(), 2);
        assert_eq!(out.traces[0].activities(), vec!["a", "b"]);
        assert_eq!(out.traces[1].activities(), vec!["a", "b"]);
        assert!(!out.alphabet.contains("x"));
    }

    #[test]
    fn split_sizes_and_overlap() {
        let traces: Vec<Trace> = (0..10).map(|i| trace(&alloc::format!("c{i}"), "a,b", i * 100)).collect();
        let (tr, va, te) = chronological_split(&log(traces), &SplitConfig::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (7, 1, 2));

        // the last training trace runs into the test period
        let mut traces: Vec<Trace> =
            (0..10).map(|i| trace(&alloc::format!("c{i}"), "a,b", i * 100)).collect();
        traces[6].events.push(Event::new("c6", "late", 900));
        let (tr, _, _) = chronological_split(&log(traces), &SplitConfig::default()).unwrap();
        let c6 = tr.traces.iter().find(|t| t.case_id == "c6").unwrap();
        assert_eq!(c6.activities(), vec!["a", "b"]);

        let two = log(vec![trace("1", "a", 0), trace("2", "a", 1)]);
        assert!(matches!(chronological_split(&two, &SplitConfig::default()), Err(LogError::EmptySplit(_))));
        let bad = SplitConfig { train_fraction: 0.5, val_fraction: 0.1, test_fraction: 0.1 };
        assert!(matches!(chronological_split(&two, &bad), Err(LogError::InvalidSplit)));
    }

    #[test]
    fn prefixes() {
        let l = log(vec![trace("1", "a,b,c,d", 0).with_label(1)]);
        let p = make_prefix_log(&l, 40).unwrap();
        assert_eq!(p.entries.iter().map(|e| e.k).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(p.entries[1].prefix.activities(), vec!["a", "b"]);
        let l2 = log(vec![trace("1", "a,b", 0).with_label(0)]);
        assert_eq!(make_prefix_log(&l2, 1).unwrap().len(), 1);
        let unl = log(vec![trace("1", "a,b", 0)]);
        assert!(make_prefix_log(&unl, 3).is_err());
    }

    #[test]
    fn caps() {
        assert_eq!(prefix_cap_for("traffic_fines_1", &[50, 60]), 9);
        let lengths: Vec<usize> = (1..=100).collect();
        // nearest rank: ceil(0.9 * 100) = 90th smallest
        assert_eq!(nearest_rank_percentile(&lengths, 90), Some(90));
        assert_eq!(prefix_cap_for("bpic2017_accepted", &lengths), 20);
        assert_eq!(prefix_cap_for("sepsis_cases_2", &lengths), 40);
        let short: Vec<usize> = (1..=30).collect();
        assert_eq!(prefix_cap_for("sepsis_cases_2", &short), 27);
    }
}
