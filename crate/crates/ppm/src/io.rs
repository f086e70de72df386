//! Reading and writing event logs: CSV with a configurable column map and
//! XES.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use ppm_core::log::{Event, EventLog, LogError, Timestamp, Trace};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("column {0:?} not found in the header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp {value:?}")]
    UnparseableTimestamp { row: usize, value: String },
    #[error("row {row}: empty activity")]
    EmptyActivity { row: usize },
    #[error("the log has no events")]
    EmptyLog,
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed XES: {0}")]
    MalformedXml(String),
    #[error("XES {0} without concept:name")]
    MissingConceptName(String),
    #[error("XES event of trace {0:?} has no usable time:timestamp")]
    MissingTimestamp(String),
    #[error("unknown log format for {0} (expected .csv or .xes)")]
    UnknownFormat(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Which CSV columns hold the case id, activity, timestamp and (optionally)
/// the trace label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
    pub label: Option<String>,
    /// `None` picks `;` or `,` from the header line.
    pub delimiter: Option<char>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            case_id: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            label: Some("label".into()),
            delimiter: None,
        }
    }
}

/// Parses ISO-8601 / RFC 3339 date-times (naive ones are taken as UTC),
/// plain dates and numeric epochs. Epoch numbers above 1e11 are
/// milliseconds, smaller ones seconds.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(x) = s.parse::<f64>() {
        if !x.is_finite() {
            return None;
        }
        return Some(if x.abs() >= 1e11 { x.round() as i64 } else { (x * 1000.0).round() as i64 });
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%dT%H:%M:%S%.f%z", "%Y-%m-%d %H:%M:%S%.f%z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some(dt.timestamp_millis());
        }
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y/%m/%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y/%m/%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    for fmt in ["%Y-%m-%d", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp_millis());
        }
    }
    None
}

pub fn format_timestamp(ms: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_else(|| ms.to_string())
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })
}

/// Groups events into traces (first-appearance order of case ids), sorts
/// each trace stably by timestamp and computes the alphabet.
fn assemble(cases: Vec<(String, Vec<Event>, BTreeMap<String, String>)>) -> Result<EventLog, IoError> {
    let traces = cases
        .into_iter()
        .map(|(id, events, attributes)| {
            let mut t = Trace::new(id, events);
            t.attributes = attributes;
            t.sort_events();
            t
        })
        .collect();
    Ok(EventLog::new(traces)?)
}

pub fn parse_csv(path: &Path, columns: &ColumnMap) -> Result<EventLog, IoError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    parse_csv_str(&text, columns)
}

pub fn parse_csv_str(text: &str, columns: &ColumnMap) -> Result<EventLog, IoError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let delimiter = columns.delimiter.unwrap_or_else(|| {
        let header = text.lines().next().unwrap_or_default();
        if header.matches(';').count() > header.matches(',').count() {
            ';'
        } else {
            ','
        }
    });
    let mut reader =
        csv::ReaderBuilder::new().delimiter(delimiter as u8).flexible(false).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let (ci, ai, ti) = (find(&columns.case_id)?, find(&columns.activity)?, find(&columns.timestamp)?);
    let li = match &columns.label {
        Some(l) => header.iter().position(|h| h == l),
        None => None,
    };

    let mut order: Vec<String> = Vec::new();
    let mut cases: BTreeMap<String, (Vec<Event>, BTreeMap<String, String>)> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row, header excluded
        let row = i + 1;
        let case_id = record.get(ci).unwrap_or_default().to_string();
        let activity = record.get(ai).unwrap_or_default().trim().to_string();
        if activity.is_empty() {
            return Err(IoError::EmptyActivity { row });
        }
        let raw_ts = record.get(ti).unwrap_or_default();
        let timestamp = parse_timestamp(raw_ts)
            .ok_or_else(|| IoError::UnparseableTimestamp { row, value: raw_ts.to_string() })?;
        let mut event = Event::new(case_id.clone(), activity, timestamp);
        for (j, value) in record.iter().enumerate() {
            if j != ci && j != ai && j != ti && Some(j) != li {
                event.attributes.insert(header[j].clone(), value.to_string());
            }
        }
        let entry = cases.entry(case_id.clone()).or_insert_with(|| {
            order.push(case_id.clone());
            (Vec::new(), BTreeMap::new())
        });
        if let Some(j) = li {
            let name = columns.label.clone().unwrap_or_default();
            entry.1.entry(name).or_insert_with(|| record.get(j).unwrap_or_default().to_string());
        }
        entry.0.push(event);
    }
    if order.is_empty() {
        return Err(IoError::EmptyLog);
    }
    let grouped = order
        .into_iter()
        .map(|id| {
            let (events, attrs) = cases.remove(&id).unwrap_or_default();
            (id, events, attrs)
        })
        .collect();
    assemble(grouped)
}

/// Writes one row per event with columns `case_id, activity, timestamp,
/// label`. The label column holds the trace label when set, otherwise the
/// trace attribute `label`, otherwise nothing.
pub fn write_csv<W: Write>(log: &EventLog, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case_id", "activity", "timestamp", "label"])?;
    for t in &log.traces {
        let label =
            t.label.map(|l| l.to_string()).or_else(|| t.attributes.get("label").cloned()).unwrap_or_default();
        for e in &t.events {
            w.write_record([&t.case_id, &e.activity, &format_timestamp(e.timestamp), &label])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn parse_xes(path: &Path) -> Result<EventLog, IoError> {
    parse_xes_reader(BufReader::new(open(path)?))
}

fn attr_key_value(e: &BytesStart<'_>) -> Result<(Option<String>, Option<String>), IoError> {
    let mut key = None;
    let mut value = None;
    for a in e.attributes() {
        let a = a.map_err(|err| IoError::MalformedXml(err.to_string()))?;
        let v = a.unescape_value().map_err(|err| IoError::MalformedXml(err.to_string()))?.into_owned();
        match a.key.as_ref() {
            b"key" => key = Some(v),
            b"value" => value = Some(v),
            _ => {}
        }
    }
    Ok((key, value))
}

#[derive(Default)]
struct XesTrace {
    attributes: BTreeMap<String, String>,
    events: Vec<BTreeMap<String, String>>,
}

/// Reads `concept:name` (trace: case id, event: activity) and
/// `time:timestamp`; every other top-level attribute is kept as an opaque
/// string. Nested attributes, globals and classifiers are skipped. Traces
/// without events are kept.
pub fn parse_xes_reader<R: BufRead>(input: R) -> Result<EventLog, IoError> {
    let mut reader = Reader::from_reader(input);
    let mut buf = Vec::new();
    let mut traces: Vec<XesTrace> = Vec::new();
    // element names from the root down
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut current: Option<XesTrace> = None;
    let mut event: Option<BTreeMap<String, String>> = None;
    let mut saw_log = false;

    loop {
        let ev = reader
            .read_event_into(&mut buf)
            .map_err(|e| IoError::MalformedXml(format!("at byte {}: {e}", reader.buffer_position())))?;
        match ev {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let name = e.local_name().as_ref().to_vec();
                let is_empty = matches!(ev, XmlEvent::Empty(_));
                match name.as_slice() {
                    b"log" if stack.is_empty() => saw_log = true,
                    b"trace" if stack.len() == 1 => current = Some(XesTrace::default()),
                    b"event" if stack.len() == 2 && current.is_some() => event = Some(BTreeMap::new()),
                    _ => {
                        // attributes directly under a trace or an event
                        let parent = stack.last().map(Vec::as_slice);
                        if let (Some(b"trace" | b"event"), (Some(k), Some(v))) = (parent, attr_key_value(e)?)
                        {
                            if parent == Some(b"event") {
                                if let Some(ev) = event.as_mut() {
                                    ev.insert(k, v);
                                }
                            } else if let Some(t) = current.as_mut() {
                                t.attributes.insert(k, v);
                            }
                        }
                    }
                }
                if is_empty {
                    match name.as_slice() {
                        b"trace" if stack.len() == 1 => traces.extend(current.take()),
                        b"event" if stack.len() == 2 => {
                            if let (Some(t), Some(ev)) = (current.as_mut(), event.take()) {
                                t.events.push(ev);
                            }
                        }
                        _ => {}
                    }
                } else {
                    stack.push(name);
                }
            }
            XmlEvent::End(e) => {
                let name = e.local_name().as_ref().to_vec();
                if stack.pop().as_deref() != Some(name.as_slice()) {
                    return Err(IoError::MalformedXml(format!(
                        "unexpected </{}>",
                        String::from_utf8_lossy(&name)
                    )));
                }
                match (name.as_slice(), stack.len()) {
                    (b"trace", 1) => traces.extend(current.take()),
                    (b"event", 2) => {
                        if let (Some(t), Some(ev)) = (current.as_mut(), event.take()) {
                            t.events.push(ev);
                        }
                    }
                    _ => {}
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(IoError::MalformedXml("unexpected end of input".into()));
    }
    if !saw_log {
        return Err(IoError::MalformedXml("no <log> root element".into()));
    }

    let mut cases = Vec::with_capacity(traces.len());
    for (i, mut t) in traces.into_iter().enumerate() {
        let case_id = t
            .attributes
            .remove("concept:name")
            .ok_or_else(|| IoError::MissingConceptName(format!("trace #{}", i + 1)))?;
        let mut events = Vec::with_capacity(t.events.len());
        for (j, mut attrs) in t.events.into_iter().enumerate() {
            let activity = attrs.remove("concept:name").ok_or_else(|| {
                IoError::MissingConceptName(format!("event #{} of trace {case_id:?}", j + 1))
            })?;
            let ts = attrs
                .remove("time:timestamp")
                .and_then(|s| parse_timestamp(&s))
                .ok_or_else(|| IoError::MissingTimestamp(case_id.clone()))?;
            let mut e = Event::new(case_id.clone(), activity, ts);
            e.attributes = attrs;
            events.push(e);
        }
        if events.is_empty() {
            log::warn!("trace {case_id:?} has no events");
        }
        cases.push((case_id, events, t.attributes));
    }
    assemble(cases)
}

/// Reads a `.csv` or `.xes` log.
pub fn read_log(path: &Path, columns: &ColumnMap) -> Result<EventLog, IoError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
    match ext.as_str() {
        "csv" => parse_csv(path, columns),
        "xes" => parse_xes(path),
        _ => Err(IoError::UnknownFormat(path.display().to_string())),
    }
}
