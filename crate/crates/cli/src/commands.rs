//! Subcommand implementations.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use phraseq_core::eval::{
    run_experiment_matrix, write_cv_table_csv, write_report_csv, EvalError, ExperimentConfig,
    GridPoint, SegmentRow,
};
use phraseq_core::features::{
    build_feature_space, write_features_csv, FeatureConfig, FeatureError, Modality,
};
use phraseq_core::ingest::{
    write_events_jsonl, write_grades_csv, write_sessions_csv, write_transcript_jsonl, IngestError,
    SessionStore,
};
use phraseq_core::model::{train, Mlp, MlpConfig, ModelError};
use phraseq_core::outcomes::{compute_outcomes, pearson_r, OutcomeError, OutcomeKind};
use phraseq_core::pipeline::{
    build_rows, curves, prepare_segments, write_curves_csv, write_outcomes_csv, PipelineError,
    PrepareConfig, PreparedSegments, PrepareStats,
};
use phraseq_core::rng::{derive_seed, rng_from_seed};
use phraseq_core::segment::{
    align_streams, collect_segment_dialogue, write_dialogue_jsonl, write_segments_jsonl,
    SegmentError,
};
use phraseq_core::stats::mean;
use phraseq_core::synth::{generate_corpus, SynthConfig};

use crate::config::ConfigMap;
use crate::guard::OutputGuard;
use crate::inputs;
use crate::manifest::Manifest;
use crate::{Command, RawInputs, SegmentKnobs, TextKnobs};

/// Usage-level failure: maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

/// Machine-readable error code for a runtime failure.
pub fn error_code(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.downcast_ref::<IngestError>().is_some() {
            return "E_INGEST";
        }
        if cause.downcast_ref::<SegmentError>().is_some() {
            return "E_SEGMENT";
        }
        if cause.downcast_ref::<OutcomeError>().is_some() {
            return "E_OUTCOMES";
        }
        if cause.downcast_ref::<FeatureError>().is_some() {
            return "E_FEATURES";
        }
        if cause.downcast_ref::<ModelError>().is_some() {
            return "E_MODEL";
        }
        if cause.downcast_ref::<EvalError>().is_some() {
            return "E_EVAL";
        }
        if cause.downcast_ref::<PipelineError>().is_some() {
            return "E_PIPELINE";
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "E_IO";
        }
    }
    "E_RUNTIME"
}

pub fn run(command: Command, cfg: &ConfigMap, jobs: usize) -> Result<()> {
    match command {
        Command::Synth {
            seed,
            pairs,
            sessions_per_pair,
            mean_submissions,
            signal_log,
            signal_dialogue,
            out,
        } => cmd_synth(
            cfg, jobs, seed, pairs, sessions_per_pair, mean_submissions, signal_log,
            signal_dialogue, out,
        ),
        Command::Ingest { raw, out } => cmd_ingest(cfg, raw, out),
        Command::Segment { raw, knobs, out } => cmd_segment(cfg, raw, knobs, out),
        Command::Outcomes {
            segments,
            lexicon,
            window,
            out,
        } => cmd_outcomes(cfg, segments, lexicon, window, out),
        Command::Featurize {
            raw,
            knobs,
            text,
            modality,
            segments,
            dialogue,
            min_count,
            out,
        } => cmd_featurize(cfg, raw, knobs, text, modality, segments, dialogue, min_count, out),
        Command::Train {
            raw,
            knobs,
            text,
            modality,
            outcome,
            layers,
            dropout,
            lr,
            batch_size,
            max_epochs,
            patience,
            seed,
            out,
        } => cmd_train(
            cfg, raw, knobs, text, modality, outcome, layers, dropout, lr, batch_size, max_epochs,
            patience, seed, out,
        ),
        Command::Evaluate {
            raw,
            knobs,
            text,
            segments,
            dialogue,
            seed,
            holdout_frac,
            k,
            bootstrap,
            grid_layers,
            grid_dropout,
            lr,
            batch_size,
            max_epochs,
            patience,
            modalities,
            outcomes,
            exclude_event_types,
            min_count,
            out,
        } => cmd_evaluate(EvaluateArgs {
            cfg,
            jobs,
            raw,
            knobs,
            text,
            segments,
            dialogue,
            seed,
            holdout_frac,
            k,
            bootstrap,
            grid_layers,
            grid_dropout,
            lr,
            batch_size,
            max_epochs,
            patience,
            modalities,
            outcomes,
            exclude_event_types,
            min_count,
            out,
        }),
        Command::Validate {
            outcomes,
            grades,
            out,
        } => cmd_validate(cfg, outcomes, grades, out),
    }
}

fn out_dir(cfg: &ConfigMap, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = cfg
        .path_or(out, "out")
        .ok_or_else(|| usage("--out <dir> is required"))?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn required_path(
    cfg: &ConfigMap,
    flag: Option<PathBuf>,
    key: &str,
    flag_name: &str,
) -> Result<PathBuf> {
    cfg.path_or(flag, key)
        .ok_or_else(|| usage(format!("--{flag_name} <file> is required")))
}

fn create(guard: &mut OutputGuard, path: &Path) -> Result<BufWriter<File>> {
    guard.track(path);
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating {}", path.display())
    })?))
}

// ---- synth ----

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    cfg: &ConfigMap,
    jobs: usize,
    seed: Option<u64>,
    pairs: Option<usize>,
    sessions_per_pair: Option<usize>,
    mean_submissions: Option<usize>,
    signal_log: Option<f64>,
    signal_dialogue: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let _ = jobs;
    let seed = cfg
        .u64_or(seed, "seed")
        .ok_or_else(|| usage("synth requires --seed"))?;
    let dir = out_dir(cfg, out)?;
    let mut synth_cfg = SynthConfig::new(derive_seed(seed, "synth"));
    synth_cfg.n_pairs = cfg.usize_or(pairs, "pairs", synth_cfg.n_pairs);
    synth_cfg.sessions_per_pair =
        cfg.usize_or(sessions_per_pair, "sessions_per_pair", synth_cfg.sessions_per_pair);
    synth_cfg.mean_submissions_per_session = cfg.usize_or(
        mean_submissions,
        "mean_submissions",
        synth_cfg.mean_submissions_per_session,
    );
    synth_cfg.signal_log = cfg.f64_or(signal_log, "signal_log", synth_cfg.signal_log);
    synth_cfg.signal_dialogue =
        cfg.f64_or(signal_dialogue, "signal_dialogue", synth_cfg.signal_dialogue);

    let corpus = generate_corpus(&synth_cfg);

    let mut guard = OutputGuard::new();
    let mut manifest = Manifest::new(
        "synth",
        json!({
            "seed": seed,
            "pairs": synth_cfg.n_pairs,
            "sessions_per_pair": synth_cfg.sessions_per_pair,
            "mean_submissions": synth_cfg.mean_submissions_per_session,
            "signal_log": synth_cfg.signal_log,
            "signal_dialogue": synth_cfg.signal_dialogue,
        }),
    );

    let mut w = create(&mut guard, &dir.join("events.jsonl"))?;
    write_events_jsonl(&mut w, &corpus.events)?;
    w.flush()?;
    let mut w = create(&mut guard, &dir.join("transcript.jsonl"))?;
    write_transcript_jsonl(&mut w, &corpus.utterances)?;
    w.flush()?;
    let w = create(&mut guard, &dir.join("sessions.csv"))?;
    write_sessions_csv(w, &corpus.meta)?;
    let w = create(&mut guard, &dir.join("grades.csv"))?;
    write_grades_csv(w, &corpus.grades)?;
    let mut w = create(&mut guard, &dir.join("ground_truth.jsonl"))?;
    for g in &corpus.ground_truth {
        serde_json::to_writer(&mut w, g)?;
        writeln!(w)?;
    }
    w.flush()?;

    for name in [
        "events.jsonl",
        "transcript.jsonl",
        "sessions.csv",
        "grades.csv",
        "ground_truth.jsonl",
    ] {
        manifest.output(name);
    }
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!(
        "synth: {} events, {} utterances, {} sessions, {} segments -> {}",
        corpus.events.len(),
        corpus.utterances.len(),
        corpus.meta.len(),
        corpus.ground_truth.len(),
        dir.display()
    );
    Ok(())
}

// ---- ingest ----

fn raw_paths(cfg: &ConfigMap, raw: &RawInputs) -> Result<(PathBuf, PathBuf, PathBuf, Option<String>)> {
    let events = required_path(cfg, raw.events.clone(), "events", "events")?;
    let transcript = required_path(cfg, raw.transcript.clone(), "transcript", "transcript")?;
    let sessions = required_path(cfg, raw.sessions.clone(), "sessions", "sessions")?;
    let format = cfg.str_or(raw.format.clone(), "format");
    Ok((events, transcript, sessions, format))
}

fn cmd_ingest(cfg: &ConfigMap, raw: RawInputs, out: Option<PathBuf>) -> Result<()> {
    let (events_path, transcript_path, sessions_path, format) = raw_paths(cfg, &raw)?;
    let dir = out_dir(cfg, out)?;
    let store = inputs::load_store(&events_path, &transcript_path, &sessions_path, format.as_deref())?;

    let mut guard = OutputGuard::new();
    let mut config = serde_json::Map::new();
    config.insert("events".into(), json!(events_path.display().to_string()));
    config.insert("transcript".into(), json!(transcript_path.display().to_string()));
    config.insert("sessions".into(), json!(sessions_path.display().to_string()));
    if let Some(f) = &format {
        config.insert("format".into(), json!(f));
    }
    let mut manifest = Manifest::new("ingest", serde_json::Value::Object(config));
    manifest.input(&events_path)?;
    manifest.input(&transcript_path)?;
    manifest.input(&sessions_path)?;

    let (events, utterances, meta) = store.clone().into_parts();
    let mut w = create(&mut guard, &dir.join("events.jsonl"))?;
    write_events_jsonl(&mut w, &events)?;
    w.flush()?;
    let mut w = create(&mut guard, &dir.join("transcript.jsonl"))?;
    write_transcript_jsonl(&mut w, &utterances)?;
    w.flush()?;
    let w = create(&mut guard, &dir.join("sessions.csv"))?;
    write_sessions_csv(w, &meta)?;

    for name in ["events.jsonl", "transcript.jsonl", "sessions.csv"] {
        manifest.output(name);
    }
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!(
        "ingest: {} events, {} utterances across {} sessions -> {}",
        store.event_count(),
        store.utterance_count(),
        meta.len(),
        dir.display()
    );
    Ok(())
}

// ---- segment ----

struct SegmentInputs {
    store: SessionStore,
    prep: PrepareConfig,
    events_path: PathBuf,
    transcript_path: PathBuf,
    sessions_path: PathBuf,
    offsets_path: Option<PathBuf>,
    format: Option<String>,
    max_duration: i64,
}

impl SegmentInputs {
    /// Manifest config keys; every key is also a valid config-file key, so
    /// a run.json can be replayed via --config.
    fn config_fragment(&self) -> serde_json::Map<String, serde_json::Value> {
        let mut m = serde_json::Map::new();
        m.insert("events".into(), json!(self.events_path.display().to_string()));
        m.insert("transcript".into(), json!(self.transcript_path.display().to_string()));
        m.insert("sessions".into(), json!(self.sessions_path.display().to_string()));
        if let Some(f) = &self.format {
            m.insert("format".into(), json!(f));
        }
        if let Some(o) = &self.offsets_path {
            m.insert("offsets".into(), json!(o.display().to_string()));
        }
        m.insert("max_duration".into(), json!(self.max_duration));
        m
    }
}

fn segment_inputs(cfg: &ConfigMap, raw: &RawInputs, knobs: &SegmentKnobs) -> Result<SegmentInputs> {
    let (events_path, transcript_path, sessions_path, format) = raw_paths(cfg, raw)?;
    let store = inputs::load_store(&events_path, &transcript_path, &sessions_path, format.as_deref())?;
    let offsets_path = cfg.path_or(knobs.offsets.clone(), "offsets");
    let offsets = inputs::load_offsets(offsets_path.as_ref())?;
    let max_duration = cfg.i64_or(
        knobs.max_duration,
        "max_duration",
        phraseq_core::segment::DEFAULT_MAX_DURATION,
    );
    if max_duration <= 0 {
        return Err(usage("--max-duration must be positive"));
    }
    let prep = PrepareConfig {
        max_duration,
        offsets,
        ..PrepareConfig::default()
    };
    Ok(SegmentInputs {
        store,
        prep,
        events_path,
        transcript_path,
        sessions_path,
        offsets_path,
        format,
        max_duration,
    })
}

fn cmd_segment(
    cfg: &ConfigMap,
    raw: RawInputs,
    knobs: SegmentKnobs,
    out: Option<PathBuf>,
) -> Result<()> {
    let si = segment_inputs(cfg, &raw, &knobs)?;
    let dir = out_dir(cfg, out)?;
    let prepared = prepare_segments(&si.store, &si.prep)?;

    let mut guard = OutputGuard::new();
    let mut manifest = Manifest::new("segment", serde_json::Value::Object(si.config_fragment()));
    manifest.input(&si.events_path)?;
    manifest.input(&si.transcript_path)?;
    manifest.input(&si.sessions_path)?;
    manifest.input_opt(si.offsets_path.as_ref())?;

    let mut w = create(&mut guard, &dir.join("segments.jsonl"))?;
    write_segments_jsonl(&mut w, &prepared.segments)?;
    w.flush()?;
    let mut w = create(&mut guard, &dir.join("segment_dialogue.jsonl"))?;
    write_dialogue_jsonl(&mut w, &prepared.dialogues)?;
    w.flush()?;

    manifest.output("segments.jsonl");
    manifest.output("segment_dialogue.jsonl");
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!(
        "segment: {} extracted, {} removed by duration filter, {} clamped utterances -> {}",
        prepared.stats.segments_extracted,
        prepared.stats.segments_removed_by_duration,
        prepared.stats.clamped_utterances,
        dir.display()
    );
    Ok(())
}

// ---- outcomes ----

fn cmd_outcomes(
    cfg: &ConfigMap,
    segments: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    window: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let segments_path = required_path(cfg, segments, "segments", "segments")?;
    let lexicon_path = cfg.path_or(lexicon, "lexicon");
    let window = cfg.usize_or(window, "window", 5);
    if window == 0 {
        return Err(usage("--window must be >= 1"));
    }
    let dir = out_dir(cfg, out)?;
    let segments = inputs::load_segments(&segments_path)?;
    let lex = inputs::load_lexicon(lexicon_path.as_ref())?;

    let items: Vec<_> = segments
        .iter()
        .map(|s| (s, compute_outcomes(&s.submitted_phrases, &lex)))
        .collect();

    let mut guard = OutputGuard::new();
    let mut config = serde_json::Map::new();
    config.insert("segments".into(), json!(segments_path.display().to_string()));
    if let Some(p) = &lexicon_path {
        config.insert("lexicon".into(), json!(p.display().to_string()));
    }
    config.insert("window".into(), json!(window));
    config.insert("lexicon_version".into(), json!(lex.version));
    let mut manifest = Manifest::new("outcomes", serde_json::Value::Object(config));
    manifest.input(&segments_path)?;
    manifest.input_opt(lexicon_path.as_ref())?;

    let mut w = create(&mut guard, &dir.join("outcomes.csv"))?;
    write_outcomes_csv(&mut w, &items)?;
    w.flush()?;
    let curve_rows = curves(&items, window)?;
    let mut w = create(&mut guard, &dir.join("curves.csv"))?;
    write_curves_csv(&mut w, &curve_rows)?;
    w.flush()?;

    manifest.output("outcomes.csv");
    manifest.output("curves.csv");
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!("outcomes: {} segments -> {}", items.len(), dir.display());
    Ok(())
}

// ---- shared dataset assembly for featurize/train/evaluate ----

struct Dataset {
    rows: Vec<SegmentRow>,
    stats: PrepareStats,
    input_paths: Vec<PathBuf>,
    /// Config keys shared by featurize/train/evaluate manifests.
    config_fragment: serde_json::Map<String, serde_json::Value>,
}

#[allow(clippy::too_many_arguments)]
fn build_dataset(
    cfg: &ConfigMap,
    raw: &RawInputs,
    knobs: &SegmentKnobs,
    text: &TextKnobs,
    staged_segments: Option<PathBuf>,
    staged_dialogue: Option<PathBuf>,
) -> Result<Dataset> {
    let mut si = segment_inputs(cfg, raw, knobs)?;
    let mut fragment = si.config_fragment();
    let lexicon_path = cfg.path_or(text.lexicon.clone(), "lexicon");
    if let Some(p) = &lexicon_path {
        fragment.insert("lexicon".into(), json!(p.display().to_string()));
    }
    si.prep.lexicon = inputs::load_lexicon(lexicon_path.as_ref())?;

    let staged_segments = cfg.path_or(staged_segments, "segments");
    let staged_dialogue = cfg.path_or(staged_dialogue, "dialogue");
    if let Some(p) = &staged_segments {
        fragment.insert("segments".into(), json!(p.display().to_string()));
    }
    if let Some(p) = &staged_dialogue {
        fragment.insert("dialogue".into(), json!(p.display().to_string()));
    }

    let mut input_paths = vec![
        si.events_path.clone(),
        si.transcript_path.clone(),
        si.sessions_path.clone(),
    ];
    input_paths.extend(si.offsets_path.clone());

    let prepared = match &staged_segments {
        Some(path) => {
            input_paths.push(path.clone());
            let segments = inputs::load_segments(path)?;
            let (aligned, _) = align_streams(&si.store, &si.prep.offsets);
            let dialogues = match &staged_dialogue {
                Some(dp) => {
                    input_paths.push(dp.clone());
                    inputs::load_dialogue(dp)?
                }
                None => segments
                    .iter()
                    .map(|s| collect_segment_dialogue(s, &aligned))
                    .collect(),
            };
            PreparedSegments {
                segments,
                dialogues,
                stats: PrepareStats::default(),
                store: aligned,
            }
        }
        None => prepare_segments(&si.store, &si.prep)?,
    };

    let known: HashSet<String> = prepared
        .segments
        .iter()
        .map(|s| s.segment_id.clone())
        .collect();
    let source_name = cfg
        .str_or(text.text_source.clone(), "text_source")
        .unwrap_or_else(|| "hashed".to_string());
    let dims = cfg.usize_or(text.text_dims, "text_dims", phraseq_core::features::DEFAULT_TEXT_DIMS);
    if dims == 0 {
        return Err(usage("--text-dims must be >= 1"));
    }
    let embeddings_path = cfg.path_or(text.embeddings.clone(), "embeddings");
    if let Some(p) = &embeddings_path {
        input_paths.push(p.clone());
        fragment.insert("embeddings".into(), json!(p.display().to_string()));
    }
    fragment.insert("text_source".into(), json!(source_name));
    fragment.insert("text_dims".into(), json!(dims));
    si.prep.text = inputs::text_source(&source_name, dims, embeddings_path.as_ref(), &known)?;

    let rows = build_rows(&prepared, &si.prep)?;
    Ok(Dataset {
        rows,
        stats: prepared.stats,
        input_paths,
        config_fragment: fragment,
    })
}

fn parse_layers(s: &str) -> Result<Vec<usize>> {
    let layers: Result<Vec<usize>, _> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect();
    let layers = layers.map_err(|_| usage(format!("bad layer list {s:?}")))?;
    if layers.is_empty() || layers.contains(&0) {
        return Err(usage(format!("bad layer list {s:?}")));
    }
    Ok(layers)
}

fn parse_modality(s: &str) -> Result<Modality> {
    Modality::parse(s).ok_or_else(|| usage(format!("unknown modality {s:?}")))
}

fn parse_outcome(s: &str) -> Result<OutcomeKind> {
    OutcomeKind::parse(s).ok_or_else(|| usage(format!("unknown outcome {s:?}")))
}

// ---- featurize ----

#[allow(clippy::too_many_arguments)]
fn cmd_featurize(
    cfg: &ConfigMap,
    raw: RawInputs,
    knobs: SegmentKnobs,
    text: TextKnobs,
    modality: Option<String>,
    segments: Option<PathBuf>,
    dialogue: Option<PathBuf>,
    min_count: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let modality = parse_modality(
        &cfg.str_or(modality, "modality")
            .ok_or_else(|| usage("--modality is required"))?,
    )?;
    let min_count = cfg.u64_or(min_count, "min_count").unwrap_or(1);
    let dir = out_dir(cfg, out)?;
    let dataset = build_dataset(cfg, &raw, &knobs, &text, segments, dialogue)?;

    let raws: Vec<_> = dataset.rows.iter().map(|r| &r.raw).collect();
    let space = build_feature_space(&raws, modality, &FeatureConfig { min_count })?;
    let matrix: Vec<(&str, Vec<f64>)> = dataset
        .rows
        .iter()
        .map(|r| (r.segment.segment_id.as_str(), space.transform(&r.raw)))
        .collect();

    let mut guard = OutputGuard::new();
    let mut config = dataset.config_fragment.clone();
    config.insert("modality".into(), json!(modality.name()));
    config.insert("min_count".into(), json!(min_count));
    let mut manifest = Manifest::new("featurize", serde_json::Value::Object(config));
    for p in &dataset.input_paths {
        manifest.input(p)?;
    }
    let name = format!("features_{}.csv", modality.name());
    let mut w = create(&mut guard, &dir.join(&name))?;
    write_features_csv(&mut w, &space, &matrix)?;
    w.flush()?;
    manifest.output(&name);
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!(
        "featurize: {} segments x {} features ({}) -> {}",
        matrix.len(),
        space.len(),
        modality.name(),
        dir.display()
    );
    Ok(())
}

// ---- train ----

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    cfg: &ConfigMap,
    raw: RawInputs,
    knobs: SegmentKnobs,
    text: TextKnobs,
    modality: Option<String>,
    outcome: Option<String>,
    layers: Option<String>,
    dropout: Option<f64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let seed = cfg
        .u64_or(seed, "seed")
        .ok_or_else(|| usage("train requires --seed"))?;
    let modality = parse_modality(
        &cfg.str_or(modality, "modality")
            .ok_or_else(|| usage("--modality is required"))?,
    )?;
    let outcome = parse_outcome(
        &cfg.str_or(outcome, "outcome")
            .ok_or_else(|| usage("--outcome is required"))?,
    )?;
    let layers = parse_layers(
        &cfg.str_or(layers, "layers")
            .unwrap_or_else(|| "256,128".to_string()),
    )?;
    let dir = out_dir(cfg, out)?;
    let dataset = build_dataset(cfg, &raw, &knobs, &text, None, None)?;
    if dataset.rows.is_empty() {
        bail!(EvalError::EmptyInput);
    }

    let raws: Vec<_> = dataset.rows.iter().map(|r| &r.raw).collect();
    let space = build_feature_space(&raws, modality, &FeatureConfig::default())?;
    let x = ndarray_design(&dataset.rows, &space);
    let y_raw: Vec<f64> = dataset
        .rows
        .iter()
        .map(|r| outcome.value(&r.outcomes))
        .collect();
    let y_mean = mean(&y_raw);
    let y_sd = phraseq_core::stats::sample_sd(&y_raw);
    let y_sd = if y_sd > 0.0 { y_sd } else { 1.0 };
    let y = ndarray::Array1::from_iter(y_raw.iter().map(|v| (v - y_mean) / y_sd));

    let config = MlpConfig {
        hidden_layers: layers,
        dropout: cfg.f64_or(dropout, "dropout", 0.0),
        learning_rate: cfg.f64_or(lr, "lr", 1e-3),
        batch_size: cfg.usize_or(batch_size, "batch_size", 32),
        max_epochs: cfg.usize_or(max_epochs, "max_epochs", 200),
        patience: cfg.usize_or(patience, "patience", 2),
        seed: derive_seed(seed, &format!("train/{}/{}", modality.name(), outcome)),
    };
    let mut mlp = Mlp::init(config.clone(), space.len(), &mut rng_from_seed(config.seed));
    let report = train(&mut mlp, &x, &y)?;

    let mut guard = OutputGuard::new();
    let mut manifest_cfg = dataset.config_fragment.clone();
    let layer_list = config
        .hidden_layers
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",");
    for (key, value) in [
        ("seed", json!(seed)),
        ("modality", json!(modality.name())),
        ("outcome", json!(outcome.name())),
        ("layers", json!(layer_list)),
        ("dropout", json!(config.dropout)),
        ("lr", json!(config.learning_rate)),
        ("batch_size", json!(config.batch_size)),
        ("max_epochs", json!(config.max_epochs)),
        ("patience", json!(config.patience)),
        ("target_mean", json!(y_mean)),
        ("target_sd", json!(y_sd)),
    ] {
        manifest_cfg.insert(key.into(), value);
    }
    let mut manifest = Manifest::new("train", serde_json::Value::Object(manifest_cfg));
    for p in &dataset.input_paths {
        manifest.input(p)?;
    }
    let checkpoint = mlp.to_checkpoint(space.name_hash());
    let path = dir.join("model.json");
    guard.track(&path);
    std::fs::write(&path, serde_json::to_string(&checkpoint)?)?;
    let report_path = dir.join("train_report.json");
    guard.track(&report_path);
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    manifest.output("model.json");
    manifest.output("train_report.json");
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!(
        "train: {} epochs, best validation loss {:.6} -> {}",
        report.epochs_run,
        report.best_val_loss,
        dir.display()
    );
    Ok(())
}

fn ndarray_design(rows: &[SegmentRow], space: &phraseq_core::features::FeatureSpace) -> ndarray::Array2<f64> {
    let mut x = ndarray::Array2::zeros((rows.len(), space.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in space.transform(&row.raw).into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    x
}

// ---- evaluate ----

struct EvaluateArgs<'a> {
    cfg: &'a ConfigMap,
    jobs: usize,
    raw: RawInputs,
    knobs: SegmentKnobs,
    text: TextKnobs,
    segments: Option<PathBuf>,
    dialogue: Option<PathBuf>,
    seed: Option<u64>,
    holdout_frac: Option<f64>,
    k: Option<usize>,
    bootstrap: Option<usize>,
    grid_layers: Option<String>,
    grid_dropout: Option<String>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    modalities: Option<String>,
    outcomes: Option<String>,
    exclude_event_types: Option<String>,
    min_count: Option<u64>,
    out: Option<PathBuf>,
}

fn parse_grid(
    cfg: &ConfigMap,
    grid_layers: Option<String>,
    grid_dropout: Option<String>,
) -> Result<(Vec<GridPoint>, String, String)> {
    let layers_spec = cfg.str_or(grid_layers, "grid_layers");
    let dropout_spec = cfg.str_or(grid_dropout, "grid_dropout");
    let layer_sets: Vec<Vec<usize>> = match &layers_spec {
        Some(spec) => spec
            .split(';')
            .map(parse_layers)
            .collect::<Result<Vec<_>>>()?,
        None => vec![vec![256, 128], vec![512, 256, 128], vec![1024, 512, 256, 128]],
    };
    let dropouts: Vec<f64> = match &dropout_spec {
        Some(spec) => {
            let parsed: Result<Vec<f64>, _> =
                spec.split(',').map(|p| p.trim().parse::<f64>()).collect();
            let parsed = parsed.map_err(|_| usage(format!("bad dropout list {spec:?}")))?;
            if parsed.iter().any(|&d| !(0.0..1.0).contains(&d)) {
                return Err(usage("dropout rates must lie in [0, 1)"));
            }
            parsed
        }
        None => vec![0.0, 0.025, 0.05, 0.1, 0.3, 0.5],
    };
    let mut grid = Vec::new();
    for layers in &layer_sets {
        for &d in &dropouts {
            grid.push(GridPoint {
                hidden_layers: layers.clone(),
                dropout: d,
            });
        }
    }
    let layers_label = layer_sets
        .iter()
        .map(|ls| ls.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";");
    let dropout_label = dropouts
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",");
    Ok((grid, layers_label, dropout_label))
}

fn parse_csv_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = args.cfg;
    let seed = cfg
        .u64_or(args.seed, "seed")
        .ok_or_else(|| usage("evaluate requires --seed"))?;
    let dir = out_dir(cfg, args.out)?;
    let dataset = build_dataset(cfg, &args.raw, &args.knobs, &args.text, args.segments, args.dialogue)?;

    let modalities: Vec<Modality> = match cfg.str_or(args.modalities, "modalities") {
        Some(spec) => parse_csv_list(&spec)
            .iter()
            .map(|s| parse_modality(s))
            .collect::<Result<Vec<_>>>()?,
        None => Modality::ALL.to_vec(),
    };
    let outcomes: Vec<OutcomeKind> = match cfg.str_or(args.outcomes, "outcomes") {
        Some(spec) => parse_csv_list(&spec)
            .iter()
            .map(|s| parse_outcome(s))
            .collect::<Result<Vec<_>>>()?,
        None => OutcomeKind::ALL.to_vec(),
    };
    if modalities.is_empty() || outcomes.is_empty() {
        return Err(usage("--modalities and --outcomes must be non-empty"));
    }
    let exclude = cfg
        .str_or(args.exclude_event_types, "exclude_event_types")
        .map(|s| parse_csv_list(&s))
        .unwrap_or_default();

    let (grid, grid_layers_label, grid_dropout_label) =
        parse_grid(cfg, args.grid_layers, args.grid_dropout)?;
    let experiment = ExperimentConfig {
        master_seed: seed,
        holdout_frac: cfg.f64_or(args.holdout_frac, "holdout_frac", 0.33),
        k: cfg.usize_or(args.k, "k", 5),
        bootstrap_b: cfg.usize_or(args.bootstrap, "bootstrap", 1000),
        grid,
        mlp: phraseq_core::eval::MlpDefaults {
            learning_rate: cfg.f64_or(args.lr, "lr", 1e-3),
            batch_size: cfg.usize_or(args.batch_size, "batch_size", 32),
            max_epochs: cfg.usize_or(args.max_epochs, "max_epochs", 200),
            patience: cfg.usize_or(args.patience, "patience", 2),
        },
        modalities,
        outcomes,
        exclude_event_types: exclude,
        feature: FeatureConfig {
            min_count: cfg.u64_or(args.min_count, "min_count").unwrap_or(1),
        },
    };

    let report = run_experiment_matrix(&dataset.rows, &experiment)?;

    let mut guard = OutputGuard::new();
    let mut manifest_cfg = dataset.config_fragment.clone();
    for (key, value) in [
        ("seed", json!(seed)),
        ("jobs", json!(args.jobs)),
        ("holdout_frac", json!(experiment.holdout_frac)),
        ("k", json!(experiment.k)),
        ("bootstrap", json!(experiment.bootstrap_b)),
        ("grid_layers", json!(grid_layers_label)),
        ("grid_dropout", json!(grid_dropout_label)),
        ("lr", json!(experiment.mlp.learning_rate)),
        ("batch_size", json!(experiment.mlp.batch_size)),
        ("max_epochs", json!(experiment.mlp.max_epochs)),
        ("patience", json!(experiment.mlp.patience)),
        (
            "modalities",
            json!(experiment.modalities.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")),
        ),
        (
            "outcomes",
            json!(experiment.outcomes.iter().map(|o| o.name()).collect::<Vec<_>>().join(",")),
        ),
        (
            "exclude_event_types",
            json!(experiment.exclude_event_types.join(",")),
        ),
        ("min_count", json!(experiment.feature.min_count)),
    ] {
        manifest_cfg.insert(key.into(), value);
    }
    let mut manifest = Manifest::new("evaluate", serde_json::Value::Object(manifest_cfg));
    for p in &dataset.input_paths {
        manifest.input(p)?;
    }

    let mut w = create(&mut guard, &dir.join("report.csv"))?;
    write_report_csv(&mut w, &report)?;
    w.flush()?;
    let mut w = create(&mut guard, &dir.join("cv_table.csv"))?;
    write_cv_table_csv(&mut w, &report.cv_records)?;
    w.flush()?;

    manifest.output("report.csv");
    manifest.output("cv_table.csv");
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    if dataset.stats.segments_removed_by_duration > 0 {
        log::info!(
            "duration filter removed {} segment(s)",
            dataset.stats.segments_removed_by_duration
        );
    }
    for row in &report.rows {
        println!(
            "evaluate: {} x {}: auc={} mae={:.4} (n_test={})",
            row.outcome,
            row.modality,
            row.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
            row.mae,
            row.n_test
        );
    }
    Ok(())
}

// ---- validate ----

fn cmd_validate(
    cfg: &ConfigMap,
    outcomes: Option<PathBuf>,
    grades: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let outcomes_path = required_path(cfg, outcomes, "outcomes", "outcomes")?;
    let grades_path = required_path(cfg, grades, "grades", "grades")?;
    let dir = out_dir(cfg, out)?;

    // per-pair means of each outcome over its segments
    let mut by_pair: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(File::open(&outcomes_path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("outcomes file lacks column {name:?}"))
    };
    let (c_pair, c_count, c_density, c_variation) = (
        col("pair_id")?,
        col("phrase_count")?,
        col("lexical_density")?,
        col("lexical_variation")?,
    );
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| -> Result<f64> {
            row.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad outcomes value: {e}"))
        };
        by_pair
            .entry(row.get(c_pair).unwrap_or("").to_string())
            .or_default()
            .push([get(c_count)?, get(c_density)?, get(c_variation)?]);
    }
    let grades = inputs::load_grades(&grades_path)?;
    let grade_by_pair: BTreeMap<&str, &phraseq_core::ingest::GradeRecord> =
        grades.iter().map(|g| (g.pair_id.as_str(), g)).collect();

    let mut pair_means: Vec<(String, [f64; 3])> = Vec::new();
    for (pair, rows) in &by_pair {
        if !grade_by_pair.contains_key(pair.as_str()) {
            log::warn!("pair {pair} has outcomes but no grades; skipped");
            continue;
        }
        let mut m = [0.0; 3];
        for i in 0..3 {
            m[i] = mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
        }
        pair_means.push((pair.clone(), m));
    }

    let outcome_names = ["phrase_count", "lexical_density", "lexical_variation"];
    let grade_names = ["overall_score", "phrase_score", "satisfaction_score"];
    let grade_value = |g: &phraseq_core::ingest::GradeRecord, i: usize| match i {
        0 => g.overall_score,
        1 => g.phrase_score,
        _ => g.satisfaction_score,
    };

    let mut guard = OutputGuard::new();
    let mut manifest = Manifest::new(
        "validate",
        json!({"outcomes": outcomes_path.display().to_string(),
               "grades": grades_path.display().to_string()}),
    );
    manifest.input(&outcomes_path)?;
    manifest.input(&grades_path)?;

    let mut w = create(&mut guard, &dir.join("validate.csv"))?;
    writeln!(w, "outcome,grade,n_pairs,r,df,p_two_sided")?;
    for (oi, outcome) in outcome_names.iter().enumerate() {
        for (gi, grade) in grade_names.iter().enumerate() {
            let xs: Vec<f64> = pair_means.iter().map(|(_, m)| m[oi]).collect();
            let ys: Vec<f64> = pair_means
                .iter()
                .map(|(p, _)| grade_value(grade_by_pair[p.as_str()], gi))
                .collect();
            match pearson_r(&xs, &ys) {
                Ok(c) => writeln!(
                    w,
                    "{outcome},{grade},{},{},{},{}",
                    xs.len(),
                    c.r,
                    c.df,
                    c.p_two_sided
                )?,
                Err(e) => {
                    log::warn!("correlation {outcome} vs {grade} undefined: {e}");
                    writeln!(w, "{outcome},{grade},{},,,", xs.len())?;
                }
            }
        }
    }
    w.flush()?;
    manifest.output("validate.csv");
    guard.track(&manifest.write(&dir)?);
    guard.commit();
    println!(
        "validate: {} pairs correlated -> {}",
        pair_means.len(),
        dir.display()
    );
    Ok(())
}
