//! Input file loading shared by the subcommands: raw streams, staged stage
//! outputs, offsets, lexicons, and embeddings.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use phraseq_core::features::TextSource;
use phraseq_core::ingest::{
    canonicalize, parse_event_log, parse_grades, parse_sessions, parse_transcript, EventRecord,
    Format, GradeRecord, SessionMeta, SessionStore, Utterance,
};
use phraseq_core::outcomes::ContentLexicon;
use phraseq_core::segment::{read_dialogue_jsonl, read_segments_jsonl, IntentSegment, SegmentDialogue};

pub fn detect_format(path: &Path, flag: Option<&str>) -> Result<Format> {
    if let Some(f) = flag {
        return match f {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => bail!("unknown format {other:?} (expected csv or jsonl)"),
        };
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(Format::Csv),
        Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
        _ => bail!(
            "cannot infer format of {} (use --format csv|jsonl)",
            path.display()
        ),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn load_events(path: &Path, format: Option<&str>) -> Result<Vec<EventRecord>> {
    let fmt = detect_format(path, format)?;
    parse_event_log(open(path)?, fmt).with_context(|| format!("parsing events {}", path.display()))
}

pub fn load_transcript(path: &Path, format: Option<&str>) -> Result<Vec<Utterance>> {
    let fmt = detect_format(path, format)?;
    parse_transcript(open(path)?, fmt)
        .with_context(|| format!("parsing transcript {}", path.display()))
}

pub fn load_sessions(path: &Path) -> Result<Vec<SessionMeta>> {
    parse_sessions(open(path)?).with_context(|| format!("parsing sessions {}", path.display()))
}

pub fn load_grades(path: &Path) -> Result<Vec<GradeRecord>> {
    parse_grades(open(path)?).with_context(|| format!("parsing grades {}", path.display()))
}

pub fn load_store(
    events: &Path,
    transcript: &Path,
    sessions: &Path,
    format: Option<&str>,
) -> Result<SessionStore> {
    let events = load_events(events, format)?;
    let utterances = load_transcript(transcript, format)?;
    let meta = load_sessions(sessions)?;
    Ok(canonicalize(events, utterances, meta)?)
}

/// offsets.csv: session_id,offset_seconds
pub fn load_offsets(path: Option<&PathBuf>) -> Result<BTreeMap<String, i64>> {
    let mut out = BTreeMap::new();
    let Some(path) = path else {
        return Ok(out);
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(open(path)?);
    for (i, row) in rdr.records().enumerate() {
        let row = row.with_context(|| format!("offsets row {}", i + 2))?;
        let session = row.get(0).unwrap_or("").trim().to_string();
        let offset: i64 = row
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .with_context(|| format!("offsets row {}: bad offset", i + 2))?;
        if session.is_empty() {
            bail!("offsets row {}: missing session_id", i + 2);
        }
        out.insert(session, offset);
    }
    Ok(out)
}

pub fn load_lexicon(path: Option<&PathBuf>) -> Result<ContentLexicon> {
    match path {
        Some(p) => Ok(ContentLexicon::from_reader(open(p)?)
            .with_context(|| format!("parsing lexicon {}", p.display()))?),
        None => Ok(ContentLexicon::builtin()),
    }
}

pub fn load_segments(path: &Path) -> Result<Vec<IntentSegment>> {
    read_segments_jsonl(open(path)?).with_context(|| format!("parsing segments {}", path.display()))
}

pub fn load_dialogue(path: &Path) -> Result<Vec<SegmentDialogue>> {
    read_dialogue_jsonl(open(path)?).with_context(|| format!("parsing dialogue {}", path.display()))
}

pub fn text_source(
    source: &str,
    dims: usize,
    embeddings: Option<&PathBuf>,
    known_segments: &HashSet<String>,
) -> Result<TextSource> {
    match source {
        "hashed" => Ok(TextSource::Hashed { dims }),
        "external" => {
            let Some(path) = embeddings else {
                bail!("--text-source external requires --embeddings");
            };
            let map = phraseq_core::features::load_external_embeddings(open(path)?, known_segments)
                .with_context(|| format!("loading embeddings {}", path.display()))?;
            Ok(TextSource::External(map))
        }
        other => bail!("unknown text source {other:?} (expected hashed or external)"),
    }
}
