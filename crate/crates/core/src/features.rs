//! Featurization of segments for the three modality configurations:
//! log-only (timing statistics + event n-gram counts), dialogue-only
//! (hashed or externally supplied text vectors), and their early fusion.
//!
//! Feature spaces — the ordered name list plus standardization statistics —
//! are always built from training data only and are deterministic for a
//! given training set regardless of input order.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{fnv1a_64, fnv1a_64_extend};
use crate::ingest::EventRecord;
use crate::segment::SegmentDialogue;
use crate::stats::{mean, quantile_sorted, sample_sd};

/// Default width of the hashed text vector, matching the width of common
/// sentence-embedding models so modality comparisons are dimensionally fair.
pub const DEFAULT_TEXT_DIMS: usize = 768;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("embedding rows disagree on dimension ({expected} vs {found} at line {line})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("vectors belong to different segments ({0:?} vs {1:?})")]
    SegmentMismatch(String, String),
    #[error("no embedding supplied for segment {0:?}")]
    MissingEmbedding(String),
    #[error("malformed embedding row at line {line}: {reason}")]
    MalformedEmbedding { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Feature source configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Log,
    Dialogue,
    Combined,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Log, Modality::Dialogue, Modality::Combined];

    pub fn name(&self) -> &'static str {
        match self {
            Modality::Log => "log",
            Modality::Dialogue => "dialogue",
            Modality::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s {
            "log" => Some(Modality::Log),
            "dialogue" => Some(Modality::Dialogue),
            "combined" => Some(Modality::Combined),
            _ => None,
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The six timing statistics over consecutive inter-event deltas.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingFeatures {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub iqr: f64,
}

pub const TIMING_NAMES: [&str; 6] = ["mean", "sd", "min", "max", "median", "iqr"];

impl TimingFeatures {
    pub fn as_array(&self) -> [f64; 6] {
        [self.mean, self.sd, self.min, self.max, self.median, self.iqr]
    }
}

/// Timing statistics over the deltas between consecutive events. Segments
/// with fewer than two events yield all zeros. Quartiles use linear
/// interpolation at `h = (n - 1) * p`; sd is the sample standard deviation.
pub fn timing_features(events: &[EventRecord]) -> TimingFeatures {
    if events.len() < 2 {
        return TimingFeatures::default();
    }
    let deltas: Vec<f64> = events.windows(2).map(|w| (w[1].ts - w[0].ts) as f64).collect();
    let mut sorted = deltas.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    TimingFeatures {
        mean: mean(&deltas),
        sd: sample_sd(&deltas),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        median: quantile_sorted(&sorted, 0.5),
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
    }
}

/// A feature identity. Rendered names are `tim:<stat>`, `evt<n>:<t>|<t>...`,
/// and `txt:<i>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureName {
    Timing(usize),
    EventNgram(Vec<String>),
    TextDim(usize),
}

impl FeatureName {
    pub fn render(&self) -> String {
        match self {
            FeatureName::Timing(i) => format!("tim:{}", TIMING_NAMES[*i]),
            FeatureName::EventNgram(parts) => format!("evt{}:{}", parts.len(), parts.join("|")),
            FeatureName::TextDim(i) => format!("txt:{i}"),
        }
    }
}

/// Raw per-segment features, independent of any train/test split: the six
/// timing statistics, n-gram occurrence counts, and the text vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSegmentFeatures {
    pub segment_id: String,
    pub timing: TimingFeatures,
    pub ngrams: HashMap<Vec<String>, f64>,
    pub text: Vec<f64>,
}

/// Count event-type unigrams, consecutive bigrams, and consecutive trigrams
/// over a time-ordered event sequence.
pub fn count_ngrams(events: &[EventRecord]) -> HashMap<Vec<String>, f64> {
    let types: Vec<&str> = events.iter().map(|e| e.event_type.as_str()).collect();
    let mut counts: HashMap<Vec<String>, f64> = HashMap::new();
    for n in 1..=3usize {
        if types.len() < n {
            break;
        }
        for window in types.windows(n) {
            let key: Vec<String> = window.iter().map(|s| s.to_string()).collect();
            *counts.entry(key).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// N-gram counts projected onto a feature space's vocabulary; n-grams absent
/// from the space contribute nothing.
pub fn event_ngram_features(
    events: &[EventRecord],
    space: &FeatureSpace,
) -> HashMap<FeatureName, f64> {
    let counts = count_ngrams(events);
    let mut out = HashMap::new();
    for (parts, c) in counts {
        let name = FeatureName::EventNgram(parts);
        if space.index.contains_key(&name) {
            out.insert(name, c);
        }
    }
    out
}

/// Deterministic bag-of-words text vector: each token is bucketed by
/// FNV-1a-64 mod `dims`, counts accumulated, then L2-normalized. Segments
/// with no tokens map to the zero vector.
pub fn hashed_text_features(dialogue: &SegmentDialogue, dims: usize) -> Vec<f64> {
    assert!(dims >= 1, "dims must be >= 1");
    let mut v = vec![0.0f64; dims];
    for utterance in &dialogue.utterances {
        for token in crate::outcomes::tokenize(&utterance.text) {
            let idx = (fnv1a_64(token.as_bytes()) % dims as u64) as usize;
            v[idx] += 1.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Load precomputed text vectors: CSV rows `segment_id,v0,...,v{D-1}`.
/// All rows must share one dimension. Rows for unknown segments are skipped
/// with a warning.
pub fn load_external_embeddings<R: Read>(
    reader: R,
    known_segments: &HashSet<String>,
) -> Result<HashMap<String, Vec<f64>>, FeatureError> {
    let mut out = HashMap::new();
    let mut dims: Option<usize> = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 1 && trimmed.starts_with("segment_id") {
            continue; // optional header
        }
        let mut parts = trimmed.split(',');
        let id = parts
            .next()
            .ok_or_else(|| FeatureError::MalformedEmbedding {
                line: line_no,
                reason: "missing segment id".into(),
            })?
            .trim()
            .to_string();
        let values: Result<Vec<f64>, _> = parts.map(|p| p.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| FeatureError::MalformedEmbedding {
            line: line_no,
            reason: format!("bad value: {e}"),
        })?;
        if values.is_empty() {
            return Err(FeatureError::MalformedEmbedding {
                line: line_no,
                reason: "row has no vector components".into(),
            });
        }
        match dims {
            None => dims = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(FeatureError::DimensionMismatch {
                    expected: d,
                    found: values.len(),
                    line: line_no,
                })
            }
            _ => {}
        }
        if !known_segments.contains(&id) {
            log::warn!("embedding row for unknown segment {id:?} skipped");
            continue;
        }
        out.insert(id, values);
    }
    Ok(out)
}

/// Where segment text vectors come from.
#[derive(Debug, Clone)]
pub enum TextSource {
    /// Hashed bag-of-words of the given width.
    Hashed { dims: usize },
    /// Precomputed vectors keyed by segment id.
    External(HashMap<String, Vec<f64>>),
}

impl TextSource {
    pub fn hashed_default() -> Self {
        TextSource::Hashed {
            dims: DEFAULT_TEXT_DIMS,
        }
    }
}

/// Compute the split-independent raw features for one segment.
pub fn compute_raw_features(
    segment_id: &str,
    events: &[EventRecord],
    dialogue: &SegmentDialogue,
    text: &TextSource,
) -> Result<RawSegmentFeatures, FeatureError> {
    let text_vec = match text {
        TextSource::Hashed { dims } => hashed_text_features(dialogue, *dims),
        TextSource::External(map) => map
            .get(segment_id)
            .cloned()
            .ok_or_else(|| FeatureError::MissingEmbedding(segment_id.to_string()))?,
    };
    Ok(RawSegmentFeatures {
        segment_id: segment_id.to_string(),
        timing: timing_features(events),
        ngrams: count_ngrams(events),
        text: text_vec,
    })
}

/// Vocabulary/statistics configuration for feature-space construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Minimum total occurrence count for an n-gram to enter the vocabulary.
    pub min_count: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { min_count: 1 }
    }
}

/// Ordered feature names plus per-feature training mean/sd. Constant
/// features are excluded at build time, so every retained sd is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub modality: Modality,
    names: Vec<FeatureName>,
    means: Vec<f64>,
    sds: Vec<f64>,
    #[serde(skip)]
    index: HashMap<FeatureName, usize>,
}

impl FeatureSpace {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[FeatureName] {
        &self.names
    }

    pub fn rendered_names(&self) -> Vec<String> {
        self.names.iter().map(FeatureName::render).collect()
    }

    pub fn stats(&self, i: usize) -> (f64, f64) {
        (self.means[i], self.sds[i])
    }

    /// FNV-1a fingerprint of the rendered name list, recorded in model
    /// checkpoints so a checkpoint can refuse mismatched inputs.
    pub fn name_hash(&self) -> u64 {
        let mut h = fnv1a_64(b"feature-space");
        for name in &self.names {
            h = fnv1a_64_extend(h, name.render().as_bytes());
            h = fnv1a_64_extend(h, b"\n");
        }
        h
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }

    /// Assemble a segment's raw dense vector in this space's order (no
    /// standardization).
    pub fn assemble_raw(&self, raw: &RawSegmentFeatures) -> Vec<f64> {
        let timing = raw.timing.as_array();
        self.names
            .iter()
            .map(|name| match name {
                FeatureName::Timing(i) => timing[*i],
                FeatureName::EventNgram(parts) => raw.ngrams.get(parts).copied().unwrap_or(0.0),
                FeatureName::TextDim(i) => raw.text.get(*i).copied().unwrap_or(0.0),
            })
            .collect()
    }

    /// Assemble and z-score with the training statistics.
    pub fn transform(&self, raw: &RawSegmentFeatures) -> Vec<f64> {
        let mut v = self.assemble_raw(raw);
        for (i, x) in v.iter_mut().enumerate() {
            *x = (*x - self.means[i]) / self.sds[i];
        }
        v
    }
}

fn candidate_names(
    rows: &[&RawSegmentFeatures],
    modality: Modality,
    config: &FeatureConfig,
) -> Vec<FeatureName> {
    let mut names = Vec::new();
    if matches!(modality, Modality::Log | Modality::Combined) {
        for i in 0..TIMING_NAMES.len() {
            names.push(FeatureName::Timing(i));
        }
        let mut totals: HashMap<&Vec<String>, f64> = HashMap::new();
        for row in rows {
            for (k, c) in &row.ngrams {
                *totals.entry(k).or_insert(0.0) += c;
            }
        }
        let mut ngram_names: Vec<FeatureName> = totals
            .into_iter()
            .filter(|(_, c)| *c >= config.min_count as f64)
            .map(|(k, _)| FeatureName::EventNgram(k.clone()))
            .collect();
        ngram_names.sort_by_key(FeatureName::render);
        names.extend(ngram_names);
    }
    if matches!(modality, Modality::Dialogue | Modality::Combined) {
        let dims = rows.iter().map(|r| r.text.len()).max().unwrap_or(0);
        names.extend((0..dims).map(FeatureName::TextDim));
    }
    names
}

/// Build a feature space from training rows: vocabulary from observed
/// n-grams (total count >= `min_count`), names in deterministic order,
/// standardization statistics captured, constant features excluded.
pub fn build_feature_space(
    training: &[&RawSegmentFeatures],
    modality: Modality,
    config: &FeatureConfig,
) -> Result<FeatureSpace, FeatureError> {
    if training.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let candidates = candidate_names(training, modality, config);
    let mut base = FeatureSpace {
        modality,
        names: candidates,
        means: Vec::new(),
        sds: Vec::new(),
        index: HashMap::new(),
    };
    // Column stats over the candidate layout, then drop constants.
    let columns: Vec<Vec<f64>> = {
        let mut cols = vec![Vec::with_capacity(training.len()); base.names.len()];
        for row in training {
            for (i, v) in base.assemble_raw(row).into_iter().enumerate() {
                cols[i].push(v);
            }
        }
        cols
    };
    let mut names = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for (name, col) in base.names.drain(..).zip(columns) {
        let m = mean(&col);
        let sd = sample_sd(&col);
        if sd > 0.0 {
            names.push(name);
            means.push(m);
            sds.push(sd);
        }
    }
    let mut space = FeatureSpace {
        modality,
        names,
        means,
        sds,
        index: HashMap::new(),
    };
    space.rebuild_index();
    Ok(space)
}

/// Z-score a batch of raw rows with a space's training statistics.
pub fn standardize(space: &FeatureSpace, rows: &[&RawSegmentFeatures]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| space.transform(r)).collect()
}

/// Remove every n-gram feature that mentions any excluded event type.
/// Timing and text features are untouched.
pub fn ablation_filter(space: &FeatureSpace, excluded: &HashSet<String>) -> FeatureSpace {
    if excluded.is_empty() {
        return space.clone();
    }
    let mut names = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for (i, name) in space.names.iter().enumerate() {
        let drop = match name {
            FeatureName::EventNgram(parts) => parts.iter().any(|p| excluded.contains(p)),
            _ => false,
        };
        if !drop {
            names.push(name.clone());
            means.push(space.means[i]);
            sds.push(space.sds[i]);
        }
    }
    let mut out = FeatureSpace {
        modality: space.modality,
        names,
        means,
        sds,
        index: HashMap::new(),
    };
    out.rebuild_index();
    out
}

/// A dense vector tied to its segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub segment_id: String,
    pub values: Vec<f64>,
}

/// Early fusion: concatenate log features then text features for the same
/// segment.
pub fn fuse(log_vec: &FeatureVector, text_vec: &FeatureVector) -> Result<FeatureVector, FeatureError> {
    if log_vec.segment_id != text_vec.segment_id {
        return Err(FeatureError::SegmentMismatch(
            log_vec.segment_id.clone(),
            text_vec.segment_id.clone(),
        ));
    }
    let mut values = Vec::with_capacity(log_vec.values.len() + text_vec.values.len());
    values.extend_from_slice(&log_vec.values);
    values.extend_from_slice(&text_vec.values);
    Ok(FeatureVector {
        segment_id: log_vec.segment_id.clone(),
        values,
    })
}

/// Write `features_<modality>.csv`: segment_id plus one column per feature.
pub fn write_features_csv<W: Write>(
    w: &mut W,
    space: &FeatureSpace,
    rows: &[(&str, Vec<f64>)],
) -> std::io::Result<()> {
    let mut header = vec!["segment_id".to_string()];
    header.extend(space.rendered_names());
    writeln!(w, "{}", header.join(","))?;
    for (id, values) in rows {
        let mut line = String::with_capacity(values.len() * 8);
        line.push_str(id);
        for v in values {
            line.push(',');
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}
