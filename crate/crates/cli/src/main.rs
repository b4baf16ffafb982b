//! `phraseq` — pipeline front end.
//!
//! Subcommands mirror the pipeline stages: `synth` generates a corpus,
//! `ingest` validates and canonicalizes raw files, `segment` cuts
//! intent-working windows, `outcomes` measures them, `featurize` emits
//! feature matrices, `train` fits one model, `evaluate` runs the full
//! experiment matrix, and `validate` correlates outcomes with grades.

mod commands;
mod config;
mod guard;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigMap;

/// Version string including the bundled lexicon version.
pub fn lexicon_version() -> String {
    phraseq_core::outcomes::ContentLexicon::builtin().version
}

#[derive(Parser)]
#[command(name = "phraseq", version = version_string(), about)]
#[command(next_line_help = false)]
struct Cli {
    /// Flat JSON config file; flags override config keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker cap for parallel sections (0 = library default).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn version_string() -> &'static str {
    Box::leak(
        format!("{} (lexicon {})", env!("CARGO_PKG_VERSION"), lexicon_version()).into_boxed_str(),
    )
}

/// Raw input files shared by the pipeline stages.
#[derive(Args, Debug, Clone)]
struct RawInputs {
    /// Event log (.csv or .jsonl)
    #[arg(long)]
    events: Option<PathBuf>,
    /// Dialogue transcript (.csv or .jsonl)
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Session metadata (.csv)
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Force input format instead of inferring from extensions
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct SegmentKnobs {
    /// Per-session utterance offsets (.csv: session_id,offset_seconds)
    #[arg(long)]
    offsets: Option<PathBuf>,
    /// Segment duration cutoff in seconds
    #[arg(long)]
    max_duration: Option<i64>,
}

#[derive(Args, Debug, Clone)]
struct TextKnobs {
    /// Text feature source: hashed | external
    #[arg(long)]
    text_source: Option<String>,
    /// Width of the hashed text vector
    #[arg(long)]
    text_dims: Option<usize>,
    /// Precomputed embeddings (.csv: segment_id,v0..vD-1)
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Function-word lexicon override (.txt)
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted signal.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        sessions_per_pair: Option<usize>,
        #[arg(long)]
        mean_submissions: Option<usize>,
        #[arg(long)]
        signal_log: Option<f64>,
        #[arg(long)]
        signal_dialogue: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate and canonicalize raw input files.
    Ingest {
        #[command(flatten)]
        raw: RawInputs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align streams and cut intent-working segments.
    Segment {
        #[command(flatten)]
        raw: RawInputs,
        #[command(flatten)]
        knobs: SegmentKnobs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute outcomes and learning curves for staged segments.
    Outcomes {
        /// segments.jsonl from the segment stage
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Trailing moving-average window for curves.csv
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the feature matrix for one modality.
    Featurize {
        #[command(flatten)]
        raw: RawInputs,
        #[command(flatten)]
        knobs: SegmentKnobs,
        #[command(flatten)]
        text: TextKnobs,
        /// log | dialogue | combined
        #[arg(long)]
        modality: Option<String>,
        /// Staged segments.jsonl (recomputed when absent)
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Staged segment_dialogue.jsonl (recomputed when absent)
        #[arg(long)]
        dialogue: Option<PathBuf>,
        /// Minimum n-gram occurrence count
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a single model on all prepared segments.
    Train {
        #[command(flatten)]
        raw: RawInputs,
        #[command(flatten)]
        knobs: SegmentKnobs,
        #[command(flatten)]
        text: TextKnobs,
        #[arg(long)]
        modality: Option<String>,
        #[arg(long)]
        outcome: Option<String>,
        /// Hidden layer widths, e.g. 256,128
        #[arg(long)]
        layers: Option<String>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full outcome x modality experiment matrix.
    Evaluate {
        #[command(flatten)]
        raw: RawInputs,
        #[command(flatten)]
        knobs: SegmentKnobs,
        #[command(flatten)]
        text: TextKnobs,
        /// Staged segments.jsonl (recomputed when absent)
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Staged segment_dialogue.jsonl (recomputed when absent)
        #[arg(long)]
        dialogue: Option<PathBuf>,
        /// Master seed (required; all stage seeds derive from it)
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        holdout_frac: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Grid layer sets, e.g. "256,128;512,256,128"
        #[arg(long)]
        grid_layers: Option<String>,
        /// Grid dropout rates, e.g. "0,0.1"
        #[arg(long)]
        grid_dropout: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        /// Comma-separated subset of log,dialogue,combined
        #[arg(long)]
        modalities: Option<String>,
        /// Comma-separated subset of phrase_count,lexical_density,lexical_variation
        #[arg(long)]
        outcomes: Option<String>,
        /// Event types excluded from n-gram features (ablation rows)
        #[arg(long)]
        exclude_event_types: Option<String>,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair-level correlations of outcomes against external grades.
    Validate {
        /// outcomes.csv from the outcomes stage
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// grades.csv (pair_id,overall_score,phrase_score,satisfaction_score)
        #[arg(long)]
        grades: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match ConfigMap::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail("E_CONFIG", &e),
    };
    let jobs = cfg.usize_or(cli.jobs, "jobs", 0);
    let result = phraseq_core::exec::with_jobs(jobs, || commands::run(cli.command, &cfg, jobs));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(usage) = e.downcast_ref::<commands::UsageError>() {
                eprintln!("error[E_USAGE]: {usage}");
                ExitCode::from(2)
            } else {
                fail(commands::error_code(&e), &e)
            }
        }
    }
}

fn fail(code: &str, err: &anyhow::Error) -> ExitCode {
    eprintln!("error[{code}]: {err:#}");
    ExitCode::FAILURE
}
