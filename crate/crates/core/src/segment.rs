//! Stream alignment and intent-working segmentation.
//!
//! A segment is the unit of analysis: the window from the first log activity
//! on an intent (since that intent's previous submission) up to and including
//! the submission event, carrying the submitted phrase list.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EventRecord, SessionStore, Utterance};

/// Event type that closes a segment and carries the submitted phrases.
pub const TRAIN_SUBMIT_TYPE: &str = "train-submit";
/// Event type that adds one training phrase (payload key [`PAYLOAD_PHRASE_KEY`]).
pub const ADD_PHRASE_TYPE: &str = "add-phrase";
/// Event type that deletes one training phrase by text.
pub const DELETE_PHRASE_TYPE: &str = "delete-phrase";
/// Payload key holding a single phrase on add/delete events.
pub const PAYLOAD_PHRASE_KEY: &str = "phrase";
/// Payload key holding the full submitted list (JSON array string) on submits.
pub const PAYLOAD_PHRASES_KEY: &str = "phrases";

/// Default duration cutoff in seconds (12.5 minutes).
pub const DEFAULT_MAX_DURATION: i64 = 750;

/// One intent-working segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSegment {
    pub segment_id: String,
    pub session_id: String,
    pub pair_id: String,
    pub intent_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub submitted_phrases: Vec<String>,
    /// Ordinal among the pair's submissions across sessions in time order (1-based).
    pub submission_index: u32,
}

impl IntentSegment {
    pub fn duration(&self) -> i64 {
        self.end_ts - self.start_ts
    }
}

/// The dialogue turns falling inside one segment's window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDialogue {
    pub segment_id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("train-submission at ts {ts} in session {session_id:?} lacks intent_id")]
    MissingIntentId { session_id: String, ts: i64 },
    #[error("train-submission at ts {ts} in session {session_id:?} carries an unparseable phrase payload")]
    InvalidPhrasePayload { session_id: String, ts: i64 },
}

/// Shift utterance timestamps by a per-session offset (seconds); event
/// timestamps are untouched. Missing offsets default to 0. Shifts that would
/// go negative are clamped to 0; the clamp count is returned and logged.
pub fn align_streams(
    store: &SessionStore,
    offset_by_session: &BTreeMap<String, i64>,
) -> (SessionStore, usize) {
    let mut aligned = store.clone();
    let mut clamped = 0usize;
    for session in store.sessions() {
        let offset = offset_by_session
            .get(&session.meta.session_id)
            .copied()
            .unwrap_or(0);
        if offset == 0 {
            continue;
        }
        let mut shifted: Vec<Utterance> = session
            .utterances
            .iter()
            .map(|u| {
                let mut u = u.clone();
                let ts = u.start_ts + offset;
                if ts < 0 {
                    clamped += 1;
                    u.start_ts = 0;
                } else {
                    u.start_ts = ts;
                }
                u
            })
            .collect();
        shifted.sort_by_key(|u| u.start_ts);
        aligned.replace_utterances(&session.meta.session_id, shifted);
    }
    if clamped > 0 {
        log::warn!("align_streams clamped {clamped} utterance timestamp(s) to 0");
    }
    (aligned, clamped)
}

/// Cut every session into intent-working segments, one per train-submission.
///
/// For a submission of intent `i`, the window starts at the earliest
/// `i`-attributed event after `i`'s previous submission in that session (the
/// submission itself when no earlier event exists, giving a zero-length
/// window) and ends at the submission. Submitted phrases come from the
/// submission payload, falling back to event replay when absent.
pub fn extract_segments(store: &SessionStore) -> Result<Vec<IntentSegment>, SegmentError> {
    let mut segments = Vec::new();
    for session in store.sessions() {
        let events = &session.events;
        let mut last_submit: HashMap<&str, usize> = HashMap::new();
        let mut ordinal = 0u32;
        for (j, e) in events.iter().enumerate() {
            if e.event_type != TRAIN_SUBMIT_TYPE {
                continue;
            }
            let intent = e.intent_id.as_deref().ok_or(SegmentError::MissingIntentId {
                session_id: session.meta.session_id.clone(),
                ts: e.ts,
            })?;
            let from = last_submit.get(intent).map_or(0, |&i| i + 1);
            let start_ts = events[from..=j]
                .iter()
                .find(|ev| ev.intent_id.as_deref() == Some(intent))
                .map(|ev| ev.ts)
                .unwrap_or(e.ts);
            let submitted_phrases = match submitted_phrases_from_payload(e) {
                Some(Ok(phrases)) => phrases,
                Some(Err(())) => {
                    return Err(SegmentError::InvalidPhrasePayload {
                        session_id: session.meta.session_id.clone(),
                        ts: e.ts,
                    })
                }
                None => {
                    log::debug!(
                        "submission at ts {} in {} has no phrase payload; reconstructing from replay",
                        e.ts,
                        session.meta.session_id
                    );
                    reconstruct_phrases(store, &session.meta.session_id, intent, e.ts)
                }
            };
            ordinal += 1;
            segments.push(IntentSegment {
                segment_id: format!("{}-{:03}", session.meta.session_id, ordinal),
                session_id: session.meta.session_id.clone(),
                pair_id: session.meta.pair_id.clone(),
                intent_id: intent.to_string(),
                start_ts,
                end_ts: e.ts,
                submitted_phrases,
                submission_index: 0, // assigned below
            });
            last_submit.insert(intent, j);
        }
    }
    number_submissions(store, &mut segments);
    segments.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    Ok(segments)
}

/// Assign per-pair submission ordinals in time order across sessions.
fn number_submissions(store: &SessionStore, segments: &mut [IntentSegment]) {
    let session_index: HashMap<String, u32> = store
        .sessions()
        .map(|s| (s.meta.session_id.clone(), s.meta.session_index))
        .collect();
    let mut by_pair: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        by_pair.entry(s.pair_id.clone()).or_default().push(i);
    }
    let keyed: Vec<(u32, i64, String)> = segments
        .iter()
        .map(|s| {
            (
                session_index.get(&s.session_id).copied().unwrap_or(0),
                s.end_ts,
                s.segment_id.clone(),
            )
        })
        .collect();
    for (_, idxs) in by_pair {
        let mut ordered = idxs;
        ordered.sort_by(|&a, &b| keyed[a].cmp(&keyed[b]));
        for (k, idx) in ordered.into_iter().enumerate() {
            segments[idx].submission_index = (k + 1) as u32;
        }
    }
}

fn submitted_phrases_from_payload(e: &EventRecord) -> Option<Result<Vec<String>, ()>> {
    let raw = e.payload.as_ref()?.get(PAYLOAD_PHRASES_KEY)?;
    match serde_json::from_str::<Vec<String>>(raw) {
        Ok(v) => Some(Ok(v)),
        Err(_) => Some(Err(())),
    }
}

/// Drop segments strictly longer than `max_duration` seconds. Returns the
/// kept segments and the removal count.
pub fn filter_segments(
    segments: Vec<IntentSegment>,
    max_duration: i64,
) -> (Vec<IntentSegment>, usize) {
    assert!(max_duration > 0, "max_duration must be positive");
    let before = segments.len();
    let kept: Vec<IntentSegment> = segments
        .into_iter()
        .filter(|s| s.duration() <= max_duration)
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Utterances whose `start_ts` lies in the segment's closed window, in time
/// order. Empty dialogue is permitted.
pub fn collect_segment_dialogue(segment: &IntentSegment, store: &SessionStore) -> SegmentDialogue {
    let utterances = store
        .session(&segment.session_id)
        .map(|s| s.utterances_in(segment.start_ts, segment.end_ts).to_vec())
        .unwrap_or_default();
    SegmentDialogue {
        segment_id: segment.segment_id.clone(),
        utterances,
    }
}

/// Events with `ts` in the segment's closed window, in canonical order.
pub fn collect_segment_events<'a>(
    segment: &IntentSegment,
    store: &'a SessionStore,
) -> &'a [EventRecord] {
    store
        .session(&segment.session_id)
        .map(|s| s.events_in(segment.start_ts, segment.end_ts))
        .unwrap_or(&[])
}

/// Replay add/delete phrase events for one intent within a session, up to
/// and including `until_ts`, returning surviving phrases in insertion order.
///
/// Deleting removes the most recently added matching occurrence; deleting a
/// phrase that is not present is logged and ignored. Duplicate adds are
/// retained.
pub fn reconstruct_phrases(
    store: &SessionStore,
    session_id: &str,
    intent_id: &str,
    until_ts: i64,
) -> Vec<String> {
    let Some(session) = store.session(session_id) else {
        return Vec::new();
    };
    let mut phrases: Vec<String> = Vec::new();
    for e in session.events.iter().take_while(|e| e.ts <= until_ts) {
        if e.intent_id.as_deref() != Some(intent_id) {
            continue;
        }
        match e.event_type.as_str() {
            ADD_PHRASE_TYPE => {
                if let Some(text) = e.payload.as_ref().and_then(|p| p.get(PAYLOAD_PHRASE_KEY)) {
                    phrases.push(text.clone());
                } else {
                    log::warn!("add-phrase at ts {} lacks a phrase payload; skipped", e.ts);
                }
            }
            DELETE_PHRASE_TYPE => {
                if let Some(text) = e.payload.as_ref().and_then(|p| p.get(PAYLOAD_PHRASE_KEY)) {
                    if let Some(pos) = phrases.iter().rposition(|p| p == text) {
                        phrases.remove(pos);
                    } else {
                        log::warn!(
                            "delete of unknown phrase {text:?} at ts {} in {session_id}; ignored",
                            e.ts
                        );
                    }
                }
            }
            _ => {}
        }
    }
    phrases
}

// ---- serialization ----

pub fn write_segments_jsonl<W: std::io::Write>(
    w: &mut W,
    segments: &[IntentSegment],
) -> std::io::Result<()> {
    for s in segments {
        serde_json::to_writer(&mut *w, s)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_segments_jsonl<R: std::io::Read>(r: R) -> std::io::Result<Vec<IntentSegment>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_dialogue_jsonl<W: std::io::Write>(
    w: &mut W,
    dialogues: &[SegmentDialogue],
) -> std::io::Result<()> {
    for d in dialogues {
        serde_json::to_writer(&mut *w, d)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_dialogue_jsonl<R: std::io::Read>(r: R) -> std::io::Result<Vec<SegmentDialogue>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
