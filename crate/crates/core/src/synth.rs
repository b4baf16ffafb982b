//! Deterministic synthetic-corpus generator with planted, modality-specific
//! signal.
//!
//! Two couplings are planted with configurable strength:
//! - `signal_log`: how tightly the final phrase count tracks the add-phrase
//!   event frequency. Lower signal injects random deletions, decoupling the
//!   count from raw add activity.
//! - `signal_dialogue`: how tightly the content-word rate of the dialogue
//!   tracks the content-word rate of the submitted phrases (the lexical
//!   density outcome).
//!
//! Submission payloads are produced by replaying the generator's own
//! add/delete stream, so payload and `reconstruct_phrases` agree exactly.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::SegmentRow;
use crate::ingest::{EventRecord, GradeRecord, SessionMeta, Utterance};
use crate::outcomes::{compute_outcomes, ContentLexicon};
use crate::rng::{derive_seed, rng_from_seed};
use crate::segment::{
    ADD_PHRASE_TYPE, DELETE_PHRASE_TYPE, PAYLOAD_PHRASES_KEY, PAYLOAD_PHRASE_KEY,
    TRAIN_SUBMIT_TYPE,
};

const CREATE_INTENT_TYPE: &str = "create-intent";

/// Generator parameters. Defaults mirror the scale of a three-session
/// classroom study (47 pairs, ~7 submissions per session).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub sessions_per_pair: usize,
    pub mean_submissions_per_session: usize,
    pub event_type_vocab: Vec<String>,
    pub signal_log: f64,
    pub signal_dialogue: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_pairs: 47,
            sessions_per_pair: 3,
            mean_submissions_per_session: 7,
            event_type_vocab: default_vocab(),
            signal_log: 0.9,
            signal_dialogue: 0.2,
            seed,
        }
    }

    fn validate(&self) {
        assert!(self.n_pairs > 0 && self.sessions_per_pair > 0);
        assert!(self.mean_submissions_per_session > 0);
        assert!((0.0..=1.0).contains(&self.signal_log));
        assert!((0.0..=1.0).contains(&self.signal_dialogue));
        for required in [
            ADD_PHRASE_TYPE,
            DELETE_PHRASE_TYPE,
            "add-response",
            TRAIN_SUBMIT_TYPE,
            "test-chatbot",
        ] {
            assert!(
                self.event_type_vocab.iter().any(|t| t == required),
                "vocab must include {required}"
            );
        }
    }
}

/// The 23 default event types.
pub fn default_vocab() -> Vec<String> {
    [
        ADD_PHRASE_TYPE,
        DELETE_PHRASE_TYPE,
        "edit-phrase",
        "add-response",
        "delete-response",
        "edit-response",
        TRAIN_SUBMIT_TYPE,
        "test-chatbot",
        CREATE_INTENT_TYPE,
        "delete-intent",
        "rename-intent",
        "switch-intent",
        "open-project",
        "save-project",
        "chat-message",
        "voice-change",
        "help-open",
        "help-close",
        "undo",
        "redo",
        "scroll-view",
        "open-intent-list",
        "preview-bot",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Per-segment ground truth: the true phrase list, oracle outcome values,
/// and the planted latent variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub segment_id: String,
    pub session_id: String,
    pub pair_id: String,
    pub intent_id: String,
    pub end_ts: i64,
    pub phrases: Vec<String>,
    pub phrase_count: u32,
    pub lexical_density: f64,
    pub lexical_variation: f64,
    /// Planted content-word rate driving both phrase and dialogue text.
    pub latent_density: f64,
    /// Add/delete events inside this segment's window.
    pub add_events: u32,
    pub delete_events: u32,
}

/// A complete generated corpus in the exact ingest formats.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub events: Vec<EventRecord>,
    pub utterances: Vec<Utterance>,
    pub meta: Vec<SessionMeta>,
    pub grades: Vec<GradeRecord>,
    pub ground_truth: Vec<GroundTruthRecord>,
}

// word pools: function words must appear in the shipped lexicon, content
// words must not.
const FUNCTION_POOL: [&str; 25] = [
    "the", "a", "an", "of", "to", "in", "on", "at", "and", "or", "but", "is", "are", "was", "do",
    "does", "did", "can", "will", "it", "this", "that", "we", "you", "they",
];

const CONTENT_POOL: [&str; 152] = [
    "climate", "ocean", "water", "cycle", "rain", "cloud", "storm", "energy", "solar", "wind",
    "plant", "animal", "cell", "biology", "species", "habitat", "ecosystem", "carbon", "oxygen",
    "nitrogen", "molecule", "atom", "gravity", "force", "motion", "speed", "light", "sound",
    "wave", "heat", "temperature", "weather", "season", "planet", "earth", "moon", "star",
    "galaxy", "rock", "mineral", "soil", "volcano", "earthquake", "river", "lake", "mountain",
    "forest", "desert", "tundra", "glacier", "magnet", "circuit", "battery", "electric",
    "current", "voltage", "robot", "sensor", "data", "model", "learn", "train", "phrase",
    "question", "answer", "topic", "science", "chemical", "reaction", "acid", "metal", "gas",
    "liquid", "solid", "matter", "mass", "volume", "photosynthesis", "bacteria", "virus",
    "organism", "predator", "prey", "food", "chain", "web", "adaptation", "evolution", "fossil",
    "dinosaur", "insect", "bird", "fish", "mammal", "reptile", "amphibian", "coral", "reef",
    "tide", "wetland", "pollution", "recycle", "conservation", "renewable", "turbine", "dam",
    "crops", "harvest", "seed", "root", "stem", "leaf", "flower", "pollen", "nectar", "honey",
    "microscope", "telescope", "experiment", "hypothesis", "observe", "measure", "record",
    "compare", "classify", "predict", "analyze", "conclude", "magma", "lava", "crust", "mantle",
    "core", "plate", "erosion", "sediment", "canyon", "valley", "island", "coast", "humidity",
    "evaporation", "condensation", "precipitation", "runoff", "aquifer", "drought", "flood",
    "blizzard", "tornado", "hurricane", "lightning",
];

struct SessionGen<'a> {
    cfg: &'a SynthConfig,
    lexicon: &'a ContentLexicon,
    noise_pool: Vec<&'a str>,
    events: Vec<EventRecord>,
    utterances: Vec<Utterance>,
    ground_truth: Vec<GroundTruthRecord>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; both uniforms drawn from the same stream.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn make_text(
    rng: &mut ChaCha8Rng,
    len: usize,
    content_rate: f64,
    content_pool: &[&str],
) -> String {
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        if rng.gen::<f64>() < content_rate {
            words.push(pick(rng, content_pool));
        } else {
            words.push(pick(rng, &FUNCTION_POOL));
        }
    }
    words.join(" ")
}

impl<'a> SessionGen<'a> {
    fn event(
        &mut self,
        session: &SessionMeta,
        ts: i64,
        event_type: &str,
        intent: Option<&str>,
        payload: Option<BTreeMap<String, String>>,
    ) {
        self.events.push(EventRecord {
            session_id: session.session_id.clone(),
            pair_id: session.pair_id.clone(),
            ts,
            event_type: event_type.to_string(),
            intent_id: intent.map(String::from),
            payload,
        });
    }

    fn utterance(&mut self, session: &SessionMeta, ts: i64, speaker: &str, text: String) {
        self.utterances.push(Utterance {
            session_id: session.session_id.clone(),
            pair_id: session.pair_id.clone(),
            start_ts: ts,
            speaker: Some(speaker.to_string()),
            text,
        });
    }

    fn run(&mut self, session: &SessionMeta, base_ts: i64, rng: &mut ChaCha8Rng) {
        let cfg = self.cfg;
        let mean_sub = cfg.mean_submissions_per_session as i64;
        let n_sub = rng.gen_range((mean_sub - 3).max(1)..=mean_sub + 3) as usize;
        let session_cap = base_ts + 9_000;

        self.event(session, base_ts, "open-project", None, None);
        let mut t = base_ts + rng.gen_range(3..=20);

        // per-intent cumulative phrase state, surviving across resubmissions
        let mut intent_state: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut intent_counter = 0usize;
        let mut prev_intent: Option<String> = None;
        let mut ordinal = 0usize;

        for j in 0..n_sub {
            if t >= session_cap {
                break;
            }
            // gap chatter between segments (never intent-attributed)
            let gap = rng.gen_range(5..=60);
            for _ in 0..rng.gen_range(0..=2usize) {
                let gap_ts = t + rng.gen_range(1..gap.max(2));
                let len = rng.gen_range(3..=9);
                let text = make_text(rng, len, 0.6, &CONTENT_POOL);
                let speaker = if rng.gen_bool(0.5) { "A" } else { "B" };
                self.utterance(session, gap_ts, speaker, text);
            }
            if rng.gen_bool(0.4) {
                let noise = pick(rng, &self.noise_pool).to_string();
                self.event(session, t + rng.gen_range(1..gap.max(2)), &noise, None, None);
            }
            let window_start = t + gap;

            // carried-over state decouples counts from in-window adds, so
            // resubmission frequency scales with the inverse log signal
            let resubmit_prob = 0.05 + 0.15 * (1.0 - cfg.signal_log);
            let resubmit = j > 0
                && rng.gen_bool(resubmit_prob)
                && prev_intent
                    .as_ref()
                    .map(|i| !intent_state[i].is_empty())
                    .unwrap_or(false);
            let intent = if resubmit {
                prev_intent.clone().unwrap()
            } else {
                intent_counter += 1;
                format!("i{intent_counter}")
            };
            intent_state.entry(intent.clone()).or_default();
            ordinal += 1;
            let segment_id = format!("{}-{:03}", session.session_id, ordinal);

            let rho = rng.gen_range(0.35..0.85);
            let (end_ts, adds, deletes) = if resubmit && rng.gen_bool(0.2) {
                // immediate resubmission: the submit is the whole window
                self.submit(session, window_start, &intent, &intent_state[&intent]);
                (window_start, 0, 0)
            } else {
                self.fill_window(session, window_start, &intent, !resubmit, rho, rng, &mut intent_state)
            };

            // synchronized dialogue inside the window
            let noise_u: f64 = rng.gen_range(-0.2..0.2);
            let q = (0.6 + cfg.signal_dialogue * (rho - 0.6)
                + (1.0 - cfg.signal_dialogue) * noise_u)
                .clamp(0.05, 0.95);
            let n_utt = if end_ts == window_start {
                rng.gen_range(0..=2usize)
            } else {
                rng.gen_range(15..=45usize)
            };
            let mut times: Vec<i64> = (0..n_utt)
                .map(|_| rng.gen_range(window_start..=end_ts))
                .collect();
            times.sort_unstable();
            for (ui, ts) in times.into_iter().enumerate() {
                let len = rng.gen_range(4..=12);
                let text = make_text(rng, len, q, &CONTENT_POOL);
                let speaker = if ui % 2 == 0 { "A" } else { "B" };
                self.utterance(session, ts, speaker, text);
            }

            let phrases = intent_state[&intent].clone();
            let oracle = compute_outcomes(&phrases, self.lexicon);
            self.ground_truth.push(GroundTruthRecord {
                segment_id,
                session_id: session.session_id.clone(),
                pair_id: session.pair_id.clone(),
                intent_id: intent.clone(),
                end_ts,
                phrase_count: oracle.phrase_count,
                lexical_density: oracle.lexical_density,
                lexical_variation: oracle.lexical_variation,
                phrases,
                latent_density: rho,
                add_events: adds,
                delete_events: deletes,
            });

            prev_intent = Some(intent);
            t = end_ts + 1;
        }
    }

    /// Emit one working window: create (fresh intents), adds, deletes, and
    /// noise, closed by the train submission. Returns (end_ts, adds, deletes).
    #[allow(clippy::too_many_arguments)]
    fn fill_window(
        &mut self,
        session: &SessionMeta,
        start: i64,
        intent: &str,
        fresh: bool,
        rho: f64,
        rng: &mut ChaCha8Rng,
        intent_state: &mut BTreeMap<String, Vec<String>>,
    ) -> (i64, u32, u32) {
        let cfg = self.cfg;
        let n_add = rng.gen_range(1..=9usize);
        let delete_cap = (1.0 - cfg.signal_log) * 0.8;
        let delete_rate = if delete_cap > 0.0 {
            rng.gen_range(0.0..delete_cap)
        } else {
            0.0
        };
        let n_del = (n_add as f64 * delete_rate).floor() as usize;
        let n_noise = rng.gen_range(3..=14usize);

        // phrase content words come from a small per-segment vocabulary so
        // lexical variation actually varies
        let pool_size = rng.gen_range(3..=25usize);
        let mut seg_pool: Vec<&str> = (0..pool_size)
            .map(|_| pick(rng, &CONTENT_POOL))
            .collect();
        seg_pool.dedup();

        #[derive(Clone, Copy, PartialEq)]
        enum Op {
            Add,
            Delete,
            Noise,
        }
        let mut remaining = [(Op::Add, n_add), (Op::Delete, n_del), (Op::Noise, n_noise)];
        let total_ops = n_add + n_del + n_noise + usize::from(fresh) + 1;
        let target_dur = {
            let d = (170.0 * (0.55 * gaussian(rng)).exp()) as i64;
            d.clamp(15, 1_400)
        };
        let max_gap = (2 * target_dur / total_ops as i64).max(1);

        type Pending<'p> = (i64, &'p str, Option<BTreeMap<String, String>>);
        let mut t = start;
        let mut first = true;
        let state = intent_state.get_mut(intent).expect("state initialized");
        let mut emitted: Vec<Pending> = Vec::new();
        if fresh {
            emitted.push((t, CREATE_INTENT_TYPE, None));
            first = false;
        }
        let mut ops_left: usize = remaining.iter().map(|(_, n)| n).sum();
        while ops_left > 0 {
            // choose an executable op kind (deletes need a non-empty state)
            let choices: Vec<usize> = remaining
                .iter()
                .enumerate()
                .filter(|(_, (op, n))| *n > 0 && (*op != Op::Delete || !state.is_empty()))
                .map(|(i, _)| i)
                .collect();
            let ci = choices[rng.gen_range(0..choices.len())];
            let op = remaining[ci].0;
            // the first event of a resubmission window must carry the intent
            if first && op == Op::Noise && remaining.iter().any(|(o, n)| *o == Op::Add && *n > 0) {
                continue;
            }
            remaining[ci].1 -= 1;
            ops_left -= 1;
            if !first {
                t += rng.gen_range(1..=max_gap);
            }
            first = false;
            match op {
                Op::Add => {
                    let len = rng.gen_range(3..=8usize);
                    let phrase = make_text(rng, len, rho, &seg_pool);
                    state.push(phrase.clone());
                    let mut payload = BTreeMap::new();
                    payload.insert(PAYLOAD_PHRASE_KEY.to_string(), phrase);
                    emitted.push((t, ADD_PHRASE_TYPE, Some(payload)));
                }
                Op::Delete => {
                    let victim = state[rng.gen_range(0..state.len())].clone();
                    let pos = state.iter().rposition(|p| p == &victim).unwrap();
                    state.remove(pos);
                    let mut payload = BTreeMap::new();
                    payload.insert(PAYLOAD_PHRASE_KEY.to_string(), victim);
                    emitted.push((t, DELETE_PHRASE_TYPE, Some(payload)));
                }
                Op::Noise => {
                    let ty = pick(rng, &self.noise_pool);
                    emitted.push((t, ty, None));
                }
            }
        }
        t += rng.gen_range(1..=max_gap);
        let end_ts = t;

        let adds = n_add as u32;
        let deletes = n_del as u32;
        let final_state = state.clone();
        for (ts, ty, payload) in emitted {
            // noise events carry the intent id half the time
            let attach = ty == CREATE_INTENT_TYPE
                || ty == ADD_PHRASE_TYPE
                || ty == DELETE_PHRASE_TYPE
                || rng.gen_bool(0.5);
            self.event(session, ts, ty, attach.then_some(intent), payload);
        }
        self.submit(session, end_ts, intent, &final_state);
        (end_ts, adds, deletes)
    }

    fn submit(&mut self, session: &SessionMeta, ts: i64, intent: &str, phrases: &[String]) {
        let mut payload = BTreeMap::new();
        payload.insert(
            PAYLOAD_PHRASES_KEY.to_string(),
            serde_json::to_string(phrases).expect("phrase list serializes"),
        );
        self.event(session, ts, TRAIN_SUBMIT_TYPE, Some(intent), Some(payload));
    }
}

/// Generate a corpus. Byte-identical output for identical configs.
pub fn generate_corpus(config: &SynthConfig) -> Corpus {
    config.validate();
    let lexicon = ContentLexicon::builtin();
    let structural = [
        ADD_PHRASE_TYPE,
        DELETE_PHRASE_TYPE,
        TRAIN_SUBMIT_TYPE,
        CREATE_INTENT_TYPE,
    ];
    let noise_pool: Vec<&str> = config
        .event_type_vocab
        .iter()
        .map(String::as_str)
        .filter(|t| !structural.contains(t))
        .collect();
    assert!(!noise_pool.is_empty(), "vocab needs at least one non-structural type");

    let mut gen = SessionGen {
        cfg: config,
        lexicon: &lexicon,
        noise_pool,
        events: Vec::new(),
        utterances: Vec::new(),
        ground_truth: Vec::new(),
    };
    let mut meta = Vec::new();
    for pi in 0..config.n_pairs {
        let pair_id = format!("p{:02}", pi + 1);
        for si in 1..=config.sessions_per_pair {
            let session = SessionMeta {
                session_id: format!("{pair_id}s{si}"),
                pair_id: pair_id.clone(),
                session_index: si as u32,
            };
            let base_ts = 1_700_000_000 + (pi as i64) * 1_000_000 + ((si as i64) - 1) * 10_000;
            let mut rng = rng_from_seed(derive_seed(
                config.seed,
                &format!("session/{pair_id}/{si}"),
            ));
            gen.run(&session, base_ts, &mut rng);
            meta.push(session);
        }
    }

    // grades: planted couplings at the pair level
    let mut grades = Vec::new();
    for pi in 0..config.n_pairs {
        let pair_id = format!("p{:02}", pi + 1);
        let mut rng = rng_from_seed(derive_seed(config.seed, &format!("grades/{pair_id}")));
        let segs: Vec<&GroundTruthRecord> = gen
            .ground_truth
            .iter()
            .filter(|g| g.pair_id == pair_id)
            .collect();
        let mean_count = segs.iter().map(|g| f64::from(g.phrase_count)).sum::<f64>()
            / segs.len().max(1) as f64;
        let mean_density =
            segs.iter().map(|g| g.lexical_density).sum::<f64>() / segs.len().max(1) as f64;
        grades.push(GradeRecord {
            pair_id,
            overall_score: 70.0 + 10.0 * gaussian(&mut rng),
            phrase_score: mean_count + 0.3 * gaussian(&mut rng),
            satisfaction_score: mean_density + 0.05 * gaussian(&mut rng),
        });
    }

    Corpus {
        events: gen.events,
        utterances: gen.utterances,
        meta,
        grades,
        ground_truth: gen.ground_truth,
    }
}

/// Permute outcome vectors across rows (a null-model baseline); features are
/// untouched.
pub fn permute_labels(rows: &mut [SegmentRow], seed: u64) {
    let mut rng = rng_from_seed(seed);
    for i in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=i);
        let tmp = rows[i].outcomes;
        rows[i].outcomes = rows[j].outcomes;
        rows[j].outcomes = tmp;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::canonicalize;
    use crate::outcomes::{is_content_word, pearson_r};

    fn small(seed: u64, signal_log: f64, signal_dialogue: f64) -> SynthConfig {
        SynthConfig {
            n_pairs: 6,
            sessions_per_pair: 2,
            mean_submissions_per_session: 5,
            signal_log,
            signal_dialogue,
            ..SynthConfig::new(seed)
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small(7, 0.9, 0.2);
        let a = generate_corpus(&cfg);
        let b = generate_corpus(&cfg);
        assert_eq!(a.events, b.events);
        assert_eq!(a.utterances, b.utterances);
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn word_pools_respect_the_lexicon() {
        let lex = ContentLexicon::builtin();
        for w in FUNCTION_POOL {
            assert!(lex.contains(w), "{w} missing from lexicon");
        }
        for w in CONTENT_POOL {
            assert!(is_content_word(w, &lex), "{w} unexpectedly a function word");
        }
    }

    #[test]
    fn timestamps_non_decreasing_within_sessions() {
        let corpus = generate_corpus(&small(3, 0.5, 0.5));
        let store = canonicalize(
            corpus.events.clone(),
            corpus.utterances.clone(),
            corpus.meta.clone(),
        )
        .unwrap();
        // generator emits events already in canonical order
        let mut regrouped: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
        for e in &corpus.events {
            regrouped.entry(e.session_id.as_str()).or_default().push(e.ts);
        }
        for (sid, ts) in regrouped {
            assert!(
                ts.windows(2).all(|w| w[0] <= w[1]),
                "events out of order in {sid}"
            );
        }
        assert_eq!(store.event_count(), corpus.events.len());
    }

    #[test]
    fn expected_segment_volume() {
        // ~ pairs * sessions * mean submissions, within 15% over seeds
        let mut total = 0usize;
        let mut expected = 0usize;
        for seed in 0..5 {
            let cfg = SynthConfig {
                n_pairs: 10,
                ..SynthConfig::new(seed)
            };
            let corpus = generate_corpus(&cfg);
            total += corpus.ground_truth.len();
            expected += cfg.n_pairs * cfg.sessions_per_pair * cfg.mean_submissions_per_session;
        }
        let ratio = total as f64 / expected as f64;
        assert!((0.85..=1.15).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn log_signal_is_monotone_in_add_count_correlation() {
        // population-level claim: needs the full-scale corpus, not `small`
        let corr_at = |signal: f64| {
            let corpus = generate_corpus(&SynthConfig {
                signal_log: signal,
                signal_dialogue: 0.5,
                ..SynthConfig::new(11)
            });
            let adds: Vec<f64> = corpus
                .ground_truth
                .iter()
                .map(|g| f64::from(g.add_events))
                .collect();
            let counts: Vec<f64> = corpus
                .ground_truth
                .iter()
                .map(|g| f64::from(g.phrase_count))
                .collect();
            pearson_r(&adds, &counts).unwrap().r
        };
        let (lo, mid, hi) = (corr_at(0.1), corr_at(0.5), corr_at(0.9));
        assert!(lo <= mid + 1e-9, "corr {lo} -> {mid}");
        assert!(mid <= hi + 1e-9, "corr {mid} -> {hi}");
        assert!(hi > 0.8, "high-signal correlation too weak: {hi}");
    }

    #[test]
    fn permutation_preserves_multiset_and_is_seeded() {
        use crate::features::RawSegmentFeatures;
        use crate::segment::IntentSegment;
        let mk = |i: usize| SegmentRow {
            segment: IntentSegment {
                segment_id: format!("s-{i}"),
                session_id: "s".into(),
                pair_id: "p".into(),
                intent_id: "i".into(),
                start_ts: 0,
                end_ts: 0,
                submitted_phrases: vec![],
                submission_index: 1,
            },
            raw: RawSegmentFeatures {
                segment_id: format!("s-{i}"),
                timing: Default::default(),
                ngrams: Default::default(),
                text: vec![],
            },
            outcomes: crate::outcomes::OutcomeVector {
                phrase_count: i as u32,
                lexical_density: i as f64 / 10.0,
                lexical_variation: 0.5,
                degenerate: false,
            },
        };
        let mut rows: Vec<SegmentRow> = (0..10).map(mk).collect();
        let mut rows2: Vec<SegmentRow> = (0..10).map(mk).collect();
        permute_labels(&mut rows, 4);
        permute_labels(&mut rows2, 4);
        let counts = |rs: &[SegmentRow]| {
            let mut v: Vec<u32> = rs.iter().map(|r| r.outcomes.phrase_count).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(counts(&rows), (0..10).collect::<Vec<u32>>());
        let seq: Vec<u32> = rows.iter().map(|r| r.outcomes.phrase_count).collect();
        let seq2: Vec<u32> = rows2.iter().map(|r| r.outcomes.phrase_count).collect();
        assert_eq!(seq, seq2);
        assert_ne!(seq, (0..10).collect::<Vec<u32>>()); // actually permuted
    }
}
