//! Stage orchestration shared by the CLI and tests: canonical store ->
//! aligned streams -> segments -> outcomes -> raw features, producing the
//! dataset rows the evaluation protocol consumes.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::eval::SegmentRow;
use crate::features::{compute_raw_features, FeatureError, TextSource};
use crate::ingest::SessionStore;
use crate::outcomes::{compute_outcomes, learning_curve, ContentLexicon, OutcomeKind, OutcomeError};
use crate::segment::{
    align_streams, collect_segment_dialogue, collect_segment_events, extract_segments,
    filter_segments, IntentSegment, SegmentDialogue, SegmentError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Outcome(#[from] OutcomeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Knobs for dataset preparation.
pub struct PrepareConfig {
    pub max_duration: i64,
    pub offsets: BTreeMap<String, i64>,
    pub lexicon: ContentLexicon,
    pub text: TextSource,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            max_duration: crate::segment::DEFAULT_MAX_DURATION,
            offsets: BTreeMap::new(),
            lexicon: ContentLexicon::builtin(),
            text: TextSource::hashed_default(),
        }
    }
}

/// Counters from dataset preparation, for run logs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareStats {
    pub segments_extracted: usize,
    pub segments_removed_by_duration: usize,
    pub clamped_utterances: usize,
}

/// Segments plus their dialogue, before featurization.
pub struct PreparedSegments {
    pub segments: Vec<IntentSegment>,
    pub dialogues: Vec<SegmentDialogue>,
    pub stats: PrepareStats,
    pub store: SessionStore,
}

/// Align, extract, and duration-filter; collect each segment's dialogue.
pub fn prepare_segments(
    store: &SessionStore,
    config: &PrepareConfig,
) -> Result<PreparedSegments, PipelineError> {
    let (aligned, clamped) = align_streams(store, &config.offsets);
    let extracted = extract_segments(&aligned)?;
    let extracted_count = extracted.len();
    let (segments, removed) = filter_segments(extracted, config.max_duration);
    let dialogues: Vec<SegmentDialogue> = segments
        .iter()
        .map(|s| collect_segment_dialogue(s, &aligned))
        .collect();
    Ok(PreparedSegments {
        segments,
        dialogues,
        stats: PrepareStats {
            segments_extracted: extracted_count,
            segments_removed_by_duration: removed,
            clamped_utterances: clamped,
        },
        store: aligned,
    })
}

/// Compute outcomes and raw features for prepared segments.
pub fn build_rows(
    prepared: &PreparedSegments,
    config: &PrepareConfig,
) -> Result<Vec<SegmentRow>, PipelineError> {
    let mut rows = Vec::with_capacity(prepared.segments.len());
    for (segment, dialogue) in prepared.segments.iter().zip(&prepared.dialogues) {
        let events = collect_segment_events(segment, &prepared.store);
        let raw = compute_raw_features(&segment.segment_id, events, dialogue, &config.text)?;
        let outcomes = compute_outcomes(&segment.submitted_phrases, &config.lexicon);
        rows.push(SegmentRow {
            segment: segment.clone(),
            raw,
            outcomes,
        });
    }
    Ok(rows)
}

/// Full preparation: store -> rows.
pub fn rows_from_store(
    store: &SessionStore,
    config: &PrepareConfig,
) -> Result<(Vec<SegmentRow>, PrepareStats), PipelineError> {
    let prepared = prepare_segments(store, config)?;
    let rows = build_rows(&prepared, config)?;
    Ok((rows, prepared.stats))
}

/// Rebuild rows from staged segment/dialogue files instead of recomputing
/// the segmentation; featurization still needs the aligned store for the
/// in-window events.
pub fn rows_from_staged(
    store: &SessionStore,
    segments: Vec<IntentSegment>,
    dialogues: Vec<SegmentDialogue>,
    config: &PrepareConfig,
) -> Result<Vec<SegmentRow>, PipelineError> {
    let (aligned, _) = align_streams(store, &config.offsets);
    let dialogue_by_id: BTreeMap<&str, &SegmentDialogue> = dialogues
        .iter()
        .map(|d| (d.segment_id.as_str(), d))
        .collect();
    let empty = |id: &str| SegmentDialogue {
        segment_id: id.to_string(),
        utterances: Vec::new(),
    };
    let mut rows = Vec::with_capacity(segments.len());
    for segment in segments {
        let events = collect_segment_events(&segment, &aligned);
        let dialogue = dialogue_by_id
            .get(segment.segment_id.as_str())
            .copied()
            .cloned()
            .unwrap_or_else(|| empty(&segment.segment_id));
        let raw = compute_raw_features(&segment.segment_id, events, &dialogue, &config.text)?;
        let outcomes = compute_outcomes(&segment.submitted_phrases, &config.lexicon);
        rows.push(SegmentRow {
            segment,
            raw,
            outcomes,
        });
    }
    Ok(rows)
}

/// Write `outcomes.csv`.
pub fn write_outcomes_csv<W: Write>(
    w: &mut W,
    items: &[(&IntentSegment, crate::outcomes::OutcomeVector)],
) -> std::io::Result<()> {
    writeln!(
        w,
        "segment_id,pair_id,submission_index,phrase_count,lexical_density,lexical_variation,degenerate"
    )?;
    for (segment, outcomes) in items {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            segment.segment_id,
            segment.pair_id,
            segment.submission_index,
            outcomes.phrase_count,
            outcomes.lexical_density,
            outcomes.lexical_variation,
            outcomes.degenerate
        )?;
    }
    Ok(())
}

/// One curve point: (submission_index, contributing segments, raw mean,
/// smoothed mean).
pub type CurvePoint = (u32, usize, f64, f64);

/// Plot-ready learning-curve series: for each outcome, the mean across
/// segments at each submission index, then a trailing moving average.
pub fn curves(
    items: &[(&IntentSegment, crate::outcomes::OutcomeVector)],
    window: usize,
) -> Result<Vec<(OutcomeKind, Vec<CurvePoint>)>, PipelineError> {
    let mut out = Vec::new();
    for outcome in OutcomeKind::ALL {
        let mut by_index: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for (segment, outcomes) in items {
            by_index
                .entry(segment.submission_index)
                .or_default()
                .push(outcome.value(outcomes));
        }
        if by_index.is_empty() {
            return Err(OutcomeError::EmptySeries.into());
        }
        let series: Vec<(u32, f64)> = by_index
            .iter()
            .map(|(&k, vs)| (k, vs.iter().sum::<f64>() / vs.len() as f64))
            .collect();
        let smoothed = learning_curve(&series, window)?;
        let rows_out: Vec<CurvePoint> = series
            .iter()
            .zip(&smoothed)
            .map(|(&(k, raw), &(_, sm))| (k, by_index[&k].len(), raw, sm))
            .collect();
        out.push((outcome, rows_out));
    }
    Ok(out)
}

/// Write `curves.csv`.
pub fn write_curves_csv<W: Write>(
    w: &mut W,
    curves: &[(OutcomeKind, Vec<CurvePoint>)],
) -> std::io::Result<()> {
    writeln!(w, "outcome,submission_index,n,raw_mean,smoothed")?;
    for (outcome, series) in curves {
        for (k, n, raw, smoothed) in series {
            writeln!(w, "{outcome},{k},{n},{raw},{smoothed}")?;
        }
    }
    Ok(())
}
