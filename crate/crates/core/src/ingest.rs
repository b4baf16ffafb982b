//! Parsing, validation, and canonical ordering of the two raw streams
//! (interaction logs and dialogue transcripts) plus session metadata and
//! optional external grade files.
//!
//! All inputs are CSV or JSONL. Timestamps are integer epoch seconds;
//! sub-second values in the input are truncated, never rounded. Within a
//! session, records are totally ordered by `(ts, file order)`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One timestamped system interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: String,
    pub pair_id: String,
    pub ts: i64,
    pub event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<BTreeMap<String, String>>,
}

/// One timestamped dialogue turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub session_id: String,
    pub pair_id: String,
    pub start_ts: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub text: String,
}

/// Session metadata row. `session_index` orders a pair's sessions in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub pair_id: String,
    pub session_index: u32,
}

/// External expert grades for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub pair_id: String,
    pub overall_score: f64,
    pub phrase_score: f64,
    pub satisfaction_score: f64,
}

/// Input stream format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("input contains no records")]
    EmptyInput,
    #[error("record references unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {session_id:?} maps to pair {meta_pair:?} in metadata but a record carries pair {record_pair:?}")]
    PairMismatch {
        session_id: String,
        meta_pair: String,
        record_pair: String,
    },
    #[error("duplicate session id {0:?} in metadata")]
    DuplicateSession(String),
    #[error("duplicate pair id {0:?} in grades")]
    DuplicatePair(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// Parse an epoch-seconds field. Fractional seconds are truncated toward
/// zero; negative timestamps are rejected.
fn parse_ts(raw: &str, line: usize, field: &str) -> Result<i64, IngestError> {
    let raw = raw.trim();
    let v = if let Ok(i) = raw.parse::<i64>() {
        i
    } else if let Ok(f) = raw.parse::<f64>() {
        if !f.is_finite() {
            return Err(malformed(line, format!("non-finite {field} {raw:?}")));
        }
        f.trunc() as i64
    } else {
        return Err(malformed(line, format!("unparseable {field} {raw:?}")));
    };
    if v < 0 {
        return Err(malformed(line, format!("negative {field} {v}")));
    }
    Ok(v)
}

fn json_ts(value: &serde_json::Value, line: usize, field: &str) -> Result<i64, IngestError> {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                if i < 0 {
                    return Err(malformed(line, format!("negative {field} {i}")));
                }
                Ok(i)
            } else if let Some(f) = n.as_f64() {
                if !f.is_finite() || f < 0.0 {
                    return Err(malformed(line, format!("bad {field} {f}")));
                }
                Ok(f.trunc() as i64)
            } else {
                Err(malformed(line, format!("unparseable {field}")))
            }
        }
        serde_json::Value::String(s) => parse_ts(s, line, field),
        _ => Err(malformed(line, format!("missing or non-numeric {field}"))),
    }
}

fn parse_payload_str(raw: &str, line: usize) -> Result<BTreeMap<String, String>, IngestError> {
    let value: serde_json::Value = serde_json::from_str(raw)
        .map_err(|e| malformed(line, format!("payload is not valid JSON: {e}")))?;
    json_payload(&value, line)
}

fn json_payload(value: &serde_json::Value, line: usize) -> Result<BTreeMap<String, String>, IngestError> {
    match value {
        serde_json::Value::Object(map) => {
            let mut out = BTreeMap::new();
            for (k, v) in map {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out.insert(k.clone(), s);
            }
            Ok(out)
        }
        serde_json::Value::String(s) => parse_payload_str(s, line),
        _ => Err(malformed(line, "payload must be a JSON object")),
    }
}

fn require_token(raw: &str, line: usize, field: &str) -> Result<String, IngestError> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(malformed(line, format!("missing {field}")));
    }
    Ok(t.to_string())
}

fn opt_string(raw: &str) -> Option<String> {
    let t = raw.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.to_string())
    }
}

/// Parse an event-log stream. Rows keep file order; unknown columns are
/// ignored.
pub fn parse_event_log<R: Read>(reader: R, format: Format) -> Result<Vec<EventRecord>, IngestError> {
    let records = match format {
        Format::Csv => parse_events_csv(reader)?,
        Format::Jsonl => parse_events_jsonl(reader)?,
    };
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(records)
}

fn parse_events_csv<R: Read>(reader: R) -> Result<Vec<EventRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, format!("bad header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let get = |rec: &csv::StringRecord, idx: Option<usize>| -> String {
        idx.and_then(|i| rec.get(i)).unwrap_or("").to_string()
    };
    let (c_sess, c_pair, c_ts, c_type) = (
        col("session_id"),
        col("pair_id"),
        col("ts"),
        col("event_type"),
    );
    let (c_intent, c_payload) = (col("intent_id"), col("payload"));
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| malformed(line, format!("unreadable row: {e}")))?;
        let event_type = require_token(&get(&row, c_type), line, "event_type")?;
        if event_type.chars().any(char::is_whitespace) {
            return Err(malformed(line, format!("event_type {event_type:?} contains whitespace")));
        }
        let payload = match opt_string(&get(&row, c_payload)) {
            Some(s) => Some(parse_payload_str(&s, line)?),
            None => None,
        };
        out.push(EventRecord {
            session_id: require_token(&get(&row, c_sess), line, "session_id")?,
            pair_id: require_token(&get(&row, c_pair), line, "pair_id")?,
            ts: parse_ts(&get(&row, c_ts), line, "ts")?,
            event_type,
            intent_id: opt_string(&get(&row, c_intent)),
            payload,
        });
    }
    Ok(out)
}

fn parse_events_jsonl<R: Read>(reader: R) -> Result<Vec<EventRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line_res) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line_res?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| malformed(line_no, format!("invalid JSON: {e}")))?;
        let s = |key: &str| -> String {
            v.get(key)
                .and_then(|x| x.as_str())
                .unwrap_or("")
                .to_string()
        };
        let event_type = require_token(&s("event_type"), line_no, "event_type")?;
        if event_type.chars().any(char::is_whitespace) {
            return Err(malformed(line_no, format!("event_type {event_type:?} contains whitespace")));
        }
        let payload = match v.get("payload") {
            None | Some(serde_json::Value::Null) => None,
            Some(p) => Some(json_payload(p, line_no)?),
        };
        out.push(EventRecord {
            session_id: require_token(&s("session_id"), line_no, "session_id")?,
            pair_id: require_token(&s("pair_id"), line_no, "pair_id")?,
            ts: json_ts(v.get("ts").unwrap_or(&serde_json::Value::Null), line_no, "ts")?,
            event_type,
            intent_id: v.get("intent_id").and_then(|x| x.as_str()).and_then(opt_string),
            payload,
        });
    }
    if out.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(out)
}

/// Parse a transcript stream. Text is trimmed; empty-text rows are rejected.
pub fn parse_transcript<R: Read>(reader: R, format: Format) -> Result<Vec<Utterance>, IngestError> {
    let records = match format {
        Format::Csv => parse_transcript_csv(reader)?,
        Format::Jsonl => parse_transcript_jsonl(reader)?,
    };
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(records)
}

fn parse_transcript_csv<R: Read>(reader: R) -> Result<Vec<Utterance>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, format!("bad header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let get = |rec: &csv::StringRecord, idx: Option<usize>| -> String {
        idx.and_then(|i| rec.get(i)).unwrap_or("").to_string()
    };
    let (c_sess, c_pair, c_ts, c_speaker, c_text) = (
        col("session_id"),
        col("pair_id"),
        col("start_ts"),
        col("speaker"),
        col("text"),
    );
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, format!("unreadable row: {e}")))?;
        let text = get(&row, c_text).trim().to_string();
        if text.is_empty() {
            return Err(malformed(line, "empty text"));
        }
        out.push(Utterance {
            session_id: require_token(&get(&row, c_sess), line, "session_id")?,
            pair_id: require_token(&get(&row, c_pair), line, "pair_id")?,
            start_ts: parse_ts(&get(&row, c_ts), line, "start_ts")?,
            speaker: opt_string(&get(&row, c_speaker)),
            text,
        });
    }
    Ok(out)
}

fn parse_transcript_jsonl<R: Read>(reader: R) -> Result<Vec<Utterance>, IngestError> {
    let mut out = Vec::new();
    for (i, line_res) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line_res?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| malformed(line_no, format!("invalid JSON: {e}")))?;
        let s = |key: &str| -> String {
            v.get(key)
                .and_then(|x| x.as_str())
                .unwrap_or("")
                .to_string()
        };
        let text = s("text").trim().to_string();
        if text.is_empty() {
            return Err(malformed(line_no, "empty text"));
        }
        out.push(Utterance {
            session_id: require_token(&s("session_id"), line_no, "session_id")?,
            pair_id: require_token(&s("pair_id"), line_no, "pair_id")?,
            start_ts: json_ts(
                v.get("start_ts").unwrap_or(&serde_json::Value::Null),
                line_no,
                "start_ts",
            )?,
            speaker: v.get("speaker").and_then(|x| x.as_str()).and_then(opt_string),
            text,
        });
    }
    Ok(out)
}

/// Parse `sessions.csv` (session_id, pair_id, session_index).
pub fn parse_sessions<R: Read>(reader: R) -> Result<Vec<SessionMeta>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SessionMeta>().enumerate() {
        let line = i + 2;
        let meta = row.map_err(|e| malformed(line, format!("bad session row: {e}")))?;
        if meta.session_index < 1 {
            return Err(malformed(line, "session_index must be >= 1"));
        }
        out.push(meta);
    }
    if out.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(out)
}

/// Parse `grades.csv` (pair_id, overall_score, phrase_score, satisfaction_score).
pub fn parse_grades<R: Read>(reader: R) -> Result<Vec<GradeRecord>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<GradeRecord>().enumerate() {
        let line = i + 2;
        let rec = row.map_err(|e| malformed(line, format!("bad grade row: {e}")))?;
        if seen.insert(rec.pair_id.clone(), line).is_some() {
            return Err(IngestError::DuplicatePair(rec.pair_id));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(out)
}

/// Per-session canonical data: streams stably sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub meta: SessionMeta,
    pub events: Vec<EventRecord>,
    pub utterances: Vec<Utterance>,
}

impl SessionData {
    /// Events with `ts` in the closed interval `[lo, hi]`.
    pub fn events_in(&self, lo: i64, hi: i64) -> &[EventRecord] {
        let a = self.events.partition_point(|e| e.ts < lo);
        let b = self.events.partition_point(|e| e.ts <= hi);
        &self.events[a..b]
    }

    /// Utterances with `start_ts` in the closed interval `[lo, hi]`.
    pub fn utterances_in(&self, lo: i64, hi: i64) -> &[Utterance] {
        let a = self.utterances.partition_point(|u| u.start_ts < lo);
        let b = self.utterances.partition_point(|u| u.start_ts <= hi);
        &self.utterances[a..b]
    }
}

/// Read-only store of canonicalized sessions, queryable by session and pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionStore {
    sessions: BTreeMap<String, SessionData>,
}

impl SessionStore {
    pub fn session(&self, session_id: &str) -> Option<&SessionData> {
        self.sessions.get(session_id)
    }

    /// Sessions in deterministic (session_id) order.
    pub fn sessions(&self) -> impl Iterator<Item = &SessionData> {
        self.sessions.values()
    }

    /// Session ids of a pair ordered by `(session_index, session_id)`.
    pub fn pair_sessions(&self, pair_id: &str) -> Vec<&SessionData> {
        let mut v: Vec<&SessionData> = self
            .sessions
            .values()
            .filter(|s| s.meta.pair_id == pair_id)
            .collect();
        v.sort_by(|a, b| {
            (a.meta.session_index, &a.meta.session_id).cmp(&(b.meta.session_index, &b.meta.session_id))
        });
        v
    }

    /// Distinct pair ids in deterministic order.
    pub fn pair_ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .sessions
            .values()
            .map(|s| s.meta.pair_id.clone())
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn event_count(&self) -> usize {
        self.sessions.values().map(|s| s.events.len()).sum()
    }

    pub fn utterance_count(&self) -> usize {
        self.sessions.values().map(|s| s.utterances.len()).sum()
    }

    /// Decompose back into flat record lists (in canonical order).
    pub fn into_parts(self) -> (Vec<EventRecord>, Vec<Utterance>, Vec<SessionMeta>) {
        let mut events = Vec::new();
        let mut utterances = Vec::new();
        let mut meta = Vec::new();
        for (_, s) in self.sessions {
            meta.push(s.meta);
            events.extend(s.events);
            utterances.extend(s.utterances);
        }
        (events, utterances, meta)
    }

    pub(crate) fn replace_utterances(&mut self, session_id: &str, utterances: Vec<Utterance>) {
        if let Some(s) = self.sessions.get_mut(session_id) {
            s.utterances = utterances;
        }
    }
}

/// Group records by session and stably sort each stream by timestamp.
/// Every record must resolve to exactly one metadata row.
pub fn canonicalize(
    events: Vec<EventRecord>,
    utterances: Vec<Utterance>,
    meta: Vec<SessionMeta>,
) -> Result<SessionStore, IngestError> {
    let mut sessions: BTreeMap<String, SessionData> = BTreeMap::new();
    for m in meta {
        if sessions.contains_key(&m.session_id) {
            return Err(IngestError::DuplicateSession(m.session_id));
        }
        sessions.insert(
            m.session_id.clone(),
            SessionData {
                meta: m,
                events: Vec::new(),
                utterances: Vec::new(),
            },
        );
    }
    for e in events {
        let s = sessions
            .get_mut(&e.session_id)
            .ok_or_else(|| IngestError::UnknownSession(e.session_id.clone()))?;
        if s.meta.pair_id != e.pair_id {
            return Err(IngestError::PairMismatch {
                session_id: e.session_id,
                meta_pair: s.meta.pair_id.clone(),
                record_pair: e.pair_id,
            });
        }
        s.events.push(e);
    }
    for u in utterances {
        let s = sessions
            .get_mut(&u.session_id)
            .ok_or_else(|| IngestError::UnknownSession(u.session_id.clone()))?;
        if s.meta.pair_id != u.pair_id {
            return Err(IngestError::PairMismatch {
                session_id: u.session_id,
                meta_pair: s.meta.pair_id.clone(),
                record_pair: u.pair_id,
            });
        }
        s.utterances.push(u);
    }
    for s in sessions.values_mut() {
        s.events.sort_by_key(|e| e.ts); // stable: equal ts keeps file order
        s.utterances.sort_by_key(|u| u.start_ts);
    }
    Ok(SessionStore { sessions })
}

// ---- serialization (round-trip partners of the parsers) ----

pub fn write_events_jsonl<W: Write>(w: &mut W, events: &[EventRecord]) -> Result<(), IngestError> {
    for e in events {
        serde_json::to_writer(&mut *w, e).map_err(io_err)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_events_csv<W: Write>(w: W, events: &[EventRecord]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["session_id", "pair_id", "ts", "event_type", "intent_id", "payload"])
        .map_err(csv_err)?;
    for e in events {
        let payload = match &e.payload {
            Some(p) => serde_json::to_string(p).map_err(io_err)?,
            None => String::new(),
        };
        wtr.write_record([
            e.session_id.as_str(),
            e.pair_id.as_str(),
            &e.ts.to_string(),
            e.event_type.as_str(),
            e.intent_id.as_deref().unwrap_or(""),
            &payload,
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_transcript_jsonl<W: Write>(w: &mut W, utterances: &[Utterance]) -> Result<(), IngestError> {
    for u in utterances {
        serde_json::to_writer(&mut *w, u).map_err(io_err)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_transcript_csv<W: Write>(w: W, utterances: &[Utterance]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["session_id", "pair_id", "start_ts", "speaker", "text"])
        .map_err(csv_err)?;
    for u in utterances {
        wtr.write_record([
            u.session_id.as_str(),
            u.pair_id.as_str(),
            &u.start_ts.to_string(),
            u.speaker.as_deref().unwrap_or(""),
            u.text.as_str(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sessions_csv<W: Write>(w: W, meta: &[SessionMeta]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    for m in meta {
        wtr.serialize(m).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_grades_csv<W: Write>(w: W, grades: &[GradeRecord]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    for g in grades {
        wtr.serialize(g).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}

fn csv_err(e: csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(session: &str, pair: &str, idx: u32) -> SessionMeta {
        SessionMeta {
            session_id: session.into(),
            pair_id: pair.into(),
            session_index: idx,
        }
    }

    #[test]
    fn parses_jsonl_event() {
        let line = r#"{"session_id":"s1","pair_id":"p1","ts":100,"event_type":"add-phrase","intent_id":"i1"}"#;
        let evs = parse_event_log(line.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(evs.len(), 1);
        let e = &evs[0];
        assert_eq!(
            (e.session_id.as_str(), e.pair_id.as_str(), e.ts, e.event_type.as_str()),
            ("s1", "p1", 100, "add-phrase")
        );
        assert_eq!(e.intent_id.as_deref(), Some("i1"));
        assert!(e.payload.is_none());
    }

    #[test]
    fn csv_bad_timestamp_is_malformed() {
        let data = "session_id,pair_id,ts,event_type\ns1,p1,abc,add-phrase\n";
        match parse_event_log(data.as_bytes(), Format::Csv) {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn fractional_ts_truncates() {
        let data = "session_id,pair_id,ts,event_type\ns1,p1,100.9,add-phrase\n";
        let evs = parse_event_log(data.as_bytes(), Format::Csv).unwrap();
        assert_eq!(evs[0].ts, 100);
    }

    #[test]
    fn equal_ts_rows_keep_file_order() {
        let data = "session_id,pair_id,ts,event_type,intent_id\n\
                    s1,p1,5,first,\ns1,p1,5,second,\n";
        let evs = parse_event_log(data.as_bytes(), Format::Csv).unwrap();
        let store = canonicalize(evs, vec![], vec![meta("s1", "p1", 1)]).unwrap();
        let types: Vec<_> = store.session("s1").unwrap().events.iter().map(|e| e.event_type.as_str()).collect();
        assert_eq!(types, ["first", "second"]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            parse_event_log("session_id,pair_id,ts,event_type\n".as_bytes(), Format::Csv),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn transcript_blank_text_rejected_speaker_optional() {
        let data = "session_id,pair_id,start_ts,speaker,text\ns1,p1,120,Student A,let's add more phrases\n";
        let us = parse_transcript(data.as_bytes(), Format::Csv).unwrap();
        assert_eq!(us[0].speaker.as_deref(), Some("Student A"));

        let data = "session_id,pair_id,start_ts,speaker,text\ns1,p1,120,,hello there\n";
        let us = parse_transcript(data.as_bytes(), Format::Csv).unwrap();
        assert!(us[0].speaker.is_none());

        let data = "session_id,pair_id,start_ts,speaker,text\ns1,p1,120,A,   \n";
        assert!(matches!(
            parse_transcript(data.as_bytes(), Format::Csv),
            Err(IngestError::MalformedRow { .. })
        ));
    }

    #[test]
    fn canonicalize_sorts_and_rejects_unknown_sessions() {
        let mk = |ts| EventRecord {
            session_id: "s1".into(),
            pair_id: "p1".into(),
            ts,
            event_type: "x".into(),
            intent_id: None,
            payload: None,
        };
        let store = canonicalize(vec![mk(5), mk(3), mk(4)], vec![], vec![meta("s1", "p1", 1)]).unwrap();
        let ts: Vec<_> = store.session("s1").unwrap().events.iter().map(|e| e.ts).collect();
        assert_eq!(ts, [3, 4, 5]);

        let mut bad = mk(1);
        bad.session_id = "zzz".into();
        assert!(matches!(
            canonicalize(vec![bad], vec![], vec![meta("s1", "p1", 1)]),
            Err(IngestError::UnknownSession(_))
        ));
    }

    #[test]
    fn canonicalize_is_idempotent_and_preserves_counts() {
        let data = "session_id,pair_id,ts,event_type\ns1,p1,9,b\ns1,p1,2,a\ns2,p1,4,c\n";
        let evs = parse_event_log(data.as_bytes(), Format::Csv).unwrap();
        let n = evs.len();
        let store = canonicalize(evs, vec![], vec![meta("s1", "p1", 1), meta("s2", "p1", 2)]).unwrap();
        assert_eq!(store.event_count(), n);
        let (e, u, m) = store.clone().into_parts();
        let again = canonicalize(e, u, m).unwrap();
        assert_eq!(store, again);
    }

    #[test]
    fn payload_round_trips_in_both_formats() {
        let mut payload = BTreeMap::new();
        payload.insert("phrases".to_string(), r#"["a","b"]"#.to_string());
        let ev = EventRecord {
            session_id: "s1".into(),
            pair_id: "p1".into(),
            ts: 10,
            event_type: "train-submit".into(),
            intent_id: Some("i1".into()),
            payload: Some(payload),
        };

        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, std::slice::from_ref(&ev)).unwrap();
        let back = parse_event_log(buf.as_slice(), Format::Jsonl).unwrap();
        assert_eq!(back, vec![ev.clone()]);

        let mut buf = Vec::new();
        write_events_csv(&mut buf, std::slice::from_ref(&ev)).unwrap();
        let back = parse_event_log(buf.as_slice(), Format::Csv).unwrap();
        assert_eq!(back, vec![ev]);
    }

    #[test]
    fn empty_utterance_list_is_a_valid_store() {
        let store = canonicalize(
            vec![EventRecord {
                session_id: "s1".into(),
                pair_id: "p1".into(),
                ts: 0,
                event_type: "x".into(),
                intent_id: None,
                payload: None,
            }],
            vec![],
            vec![meta("s1", "p1", 1)],
        )
        .unwrap();
        assert_eq!(store.utterance_count(), 0);
    }
}
