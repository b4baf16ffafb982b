//! Property tests for the pipeline's contract invariants: parse/serialize
//! round trips, canonicalization idempotence, outcome metric identities,
//! n-gram count identities, AUC equivalences, and split hygiene.

use std::collections::BTreeMap;

use proptest::prelude::*;

use phraseq_core::eval::{auc, binarize, binarize_median, group_holdout_split, group_kfold, mae};
use phraseq_core::features::{
    build_feature_space, count_ngrams, fuse, hashed_text_features, FeatureConfig, FeatureVector,
    Modality, RawSegmentFeatures, TimingFeatures,
};
use phraseq_core::ingest::{
    canonicalize, parse_event_log, parse_transcript, write_events_csv, write_events_jsonl,
    write_transcript_csv, write_transcript_jsonl, EventRecord, Format, SessionMeta, Utterance,
};
use phraseq_core::outcomes::{
    compute_outcomes, learning_curve, pearson_r, tokenize, ContentLexicon,
};
use phraseq_core::segment::{filter_segments, IntentSegment, SegmentDialogue};

fn token_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,8}".prop_map(|s| s)
}

fn event_strategy() -> impl Strategy<Value = EventRecord> {
    (
        0i64..1_000_000,
        token_strategy(),
        proptest::option::of(token_strategy()),
        proptest::option::of(proptest::collection::btree_map(
            "[a-z]{1,6}",
            "[ -~]{0,12}",
            0..3,
        )),
    )
        .prop_map(|(ts, event_type, intent_id, payload)| EventRecord {
            session_id: "s1".into(),
            pair_id: "p1".into(),
            ts,
            event_type,
            intent_id,
            payload: payload.map(|m: BTreeMap<String, String>| m.into_iter().collect()),
        })
}

fn utterance_strategy() -> impl Strategy<Value = Utterance> {
    (
        0i64..1_000_000,
        proptest::option::of("[A-Za-z]{1,8}"),
        // parsed utterances are trimmed, so model canonical text here
        "[!-~]([ -~]{0,18}[!-~])?",
    )
        .prop_map(|(start_ts, speaker, text)| Utterance {
            session_id: "s1".into(),
            pair_id: "p1".into(),
            start_ts,
            speaker,
            text,
        })
}

fn meta() -> Vec<SessionMeta> {
    vec![SessionMeta {
        session_id: "s1".into(),
        pair_id: "p1".into(),
        session_index: 1,
    }]
}

proptest! {
    #[test]
    fn event_round_trip_jsonl_and_csv(events in proptest::collection::vec(event_strategy(), 1..20)) {
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &events).unwrap();
        let back = parse_event_log(buf.as_slice(), Format::Jsonl).unwrap();
        prop_assert_eq!(&back, &events);

        let mut buf = Vec::new();
        write_events_csv(&mut buf, &events).unwrap();
        let back = parse_event_log(buf.as_slice(), Format::Csv).unwrap();
        prop_assert_eq!(&back, &events);
    }

    #[test]
    fn transcript_round_trip(utts in proptest::collection::vec(utterance_strategy(), 1..20)) {
        let mut buf = Vec::new();
        write_transcript_jsonl(&mut buf, &utts).unwrap();
        let back = parse_transcript(buf.as_slice(), Format::Jsonl).unwrap();
        prop_assert_eq!(&back, &utts);

        let mut buf = Vec::new();
        write_transcript_csv(&mut buf, &utts).unwrap();
        let back = parse_transcript(buf.as_slice(), Format::Csv).unwrap();
        prop_assert_eq!(&back, &utts);
    }

    #[test]
    fn canonicalize_idempotent_and_lossless(
        events in proptest::collection::vec(event_strategy(), 0..30),
        utts in proptest::collection::vec(utterance_strategy(), 0..30),
    ) {
        let n_events = events.len();
        let n_utts = utts.len();
        let store = canonicalize(events, utts, meta()).unwrap();
        prop_assert_eq!(store.event_count(), n_events);
        prop_assert_eq!(store.utterance_count(), n_utts);
        let (e, u, m) = store.clone().into_parts();
        let again = canonicalize(e, u, m).unwrap();
        prop_assert_eq!(store, again);
    }

    #[test]
    fn outcomes_permutation_and_duplication(
        phrases in proptest::collection::vec("[a-z ]{1,24}", 1..8),
        perm_seed in 0u64..1000,
    ) {
        let lexicon = ContentLexicon::builtin();
        let base = compute_outcomes(&phrases, &lexicon);

        // permutation leaves all pooled metrics unchanged
        let mut shuffled = phrases.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            let j = (perm_seed as usize + i * 31) % (i + 1);
            shuffled.swap(i, j);
        }
        let perm = compute_outcomes(&shuffled, &lexicon);
        prop_assert_eq!(base.phrase_count, perm.phrase_count);
        prop_assert!((base.lexical_density - perm.lexical_density).abs() < 1e-12);
        prop_assert!((base.lexical_variation - perm.lexical_variation).abs() < 1e-12);

        // duplicating every phrase: density unchanged, variation cannot grow
        let doubled: Vec<String> = phrases.iter().chain(phrases.iter()).cloned().collect();
        let dup = compute_outcomes(&doubled, &lexicon);
        prop_assert!((base.lexical_density - dup.lexical_density).abs() < 1e-12);
        prop_assert!(dup.lexical_variation <= base.lexical_variation + 1e-12);
        prop_assert!(base.lexical_variation <= 1.0 + 1e-12);
    }

    #[test]
    fn variation_is_one_iff_all_content_tokens_distinct(
        phrases in proptest::collection::vec("[a-z]{1,10}( [a-z]{1,10}){0,4}", 1..6),
    ) {
        let lexicon = ContentLexicon::builtin();
        let v = compute_outcomes(&phrases, &lexicon);
        let tokens: Vec<String> = phrases.iter().flat_map(|p| tokenize(p)).collect();
        let content: Vec<&String> = tokens
            .iter()
            .filter(|t| phraseq_core::outcomes::is_content_word(t, &lexicon))
            .collect();
        if !content.is_empty() {
            let unique: std::collections::HashSet<&str> =
                content.iter().map(|s| s.as_str()).collect();
            prop_assert_eq!(v.lexical_variation == 1.0, unique.len() == content.len());
        }
    }

    #[test]
    fn learning_curve_shape(values in proptest::collection::vec(-100.0f64..100.0, 1..40), window in 1usize..10) {
        let series: Vec<(u32, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u32 + 1, v)).collect();
        let smoothed = learning_curve(&series, window).unwrap();
        prop_assert_eq!(smoothed.len(), series.len());

        let constant: Vec<(u32, f64)> = (1..=10).map(|i| (i, 42.0)).collect();
        for (_, v) in learning_curve(&constant, window).unwrap() {
            prop_assert!((v - 42.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_affine_invariance(
        xs in proptest::collection::vec(-1000.0f64..1000.0, 3..40),
        a in 0.01f64..50.0,
        b in -100.0f64..100.0,
    ) {
        let distinct = xs.iter().any(|&v| (v - xs[0]).abs() > 1e-6);
        prop_assume!(distinct);
        let ys: Vec<f64> = xs.iter().map(|&x| a * x + b).collect();
        let r = pearson_r(&xs, &ys).unwrap();
        prop_assert!((r.r - 1.0).abs() < 1e-9, "r = {}", r.r);
        let ys_neg: Vec<f64> = xs.iter().map(|&x| -a * x + b).collect();
        let r = pearson_r(&xs, &ys_neg).unwrap();
        prop_assert!((r.r + 1.0).abs() < 1e-9);
    }

    #[test]
    fn ngram_sum_identities(types in proptest::collection::vec("[a-c]", 0..30)) {
        let events: Vec<EventRecord> = types
            .iter()
            .enumerate()
            .map(|(i, t)| EventRecord {
                session_id: "s1".into(),
                pair_id: "p1".into(),
                ts: i as i64,
                event_type: t.clone(),
                intent_id: None,
                payload: None,
            })
            .collect();
        let counts = count_ngrams(&events);
        let n = events.len() as f64;
        let sum_n = |k: usize| -> f64 {
            counts.iter().filter(|(key, _)| key.len() == k).map(|(_, c)| c).sum()
        };
        prop_assert_eq!(sum_n(1), n);
        prop_assert_eq!(sum_n(2), (n - 1.0).max(0.0));
        prop_assert_eq!(sum_n(3), (n - 2.0).max(0.0));
    }

    #[test]
    fn hashed_text_norm(texts in proptest::collection::vec("[a-z !?.]{0,30}", 0..6), dims in 1usize..512) {
        let dialogue = SegmentDialogue {
            segment_id: "x".into(),
            utterances: texts
                .iter()
                .map(|t| Utterance {
                    session_id: "s1".into(),
                    pair_id: "p1".into(),
                    start_ts: 0,
                    speaker: None,
                    text: t.clone(),
                })
                .collect(),
        };
        let v = hashed_text_features(&dialogue, dims);
        prop_assert_eq!(v.len(), dims);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let any_token = texts.iter().any(|t| !tokenize(t).is_empty());
        if any_token {
            prop_assert!((norm - 1.0).abs() < 1e-9);
        } else {
            prop_assert_eq!(norm, 0.0);
        }
    }

    #[test]
    fn feature_space_order_independence(
        seqs in proptest::collection::vec(proptest::collection::vec("[a-d]", 1..12), 2..12),
    ) {
        let rows: Vec<RawSegmentFeatures> = seqs
            .iter()
            .enumerate()
            .map(|(i, types)| {
                let events: Vec<EventRecord> = types
                    .iter()
                    .enumerate()
                    .map(|(k, t)| EventRecord {
                        session_id: "s1".into(),
                        pair_id: "p1".into(),
                        ts: k as i64,
                        event_type: t.clone(),
                        intent_id: None,
                        payload: None,
                    })
                    .collect();
                RawSegmentFeatures {
                    segment_id: format!("g-{i}"),
                    timing: TimingFeatures::default(),
                    ngrams: count_ngrams(&events),
                    text: vec![],
                }
            })
            .collect();
        let fwd: Vec<&RawSegmentFeatures> = rows.iter().collect();
        let rev: Vec<&RawSegmentFeatures> = rows.iter().rev().collect();
        let a = build_feature_space(&fwd, Modality::Log, &FeatureConfig::default()).unwrap();
        let b = build_feature_space(&rev, Modality::Log, &FeatureConfig::default()).unwrap();
        prop_assert_eq!(a.rendered_names(), b.rendered_names());
        for i in 0..a.len() {
            let (ma, sa) = a.stats(i);
            let (mb, sb) = b.stats(i);
            prop_assert!((ma - mb).abs() < 1e-12 && (sa - sb).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_dimensions_add(xs in proptest::collection::vec(-5.0f64..5.0, 0..20), ys in proptest::collection::vec(-5.0f64..5.0, 0..20)) {
        let a = FeatureVector { segment_id: "s".into(), values: xs.clone() };
        let b = FeatureVector { segment_id: "s".into(), values: ys.clone() };
        let f = fuse(&a, &b).unwrap();
        prop_assert_eq!(f.values.len(), xs.len() + ys.len());
        prop_assert_eq!(&f.values[..xs.len()], &xs[..]);
        prop_assert_eq!(&f.values[xs.len()..], &ys[..]);
    }

    #[test]
    fn auc_matches_brute_force(
        scores in proptest::collection::vec(0u8..6, 4..100),
        label_bits in proptest::collection::vec(any::<bool>(), 4..100),
    ) {
        let n = scores.len().min(label_bits.len());
        let scores: Vec<f64> = scores[..n].iter().map(|&s| f64::from(s) / 3.0).collect();
        let mut labels = label_bits[..n].to_vec();
        labels[0] = true;
        labels[1] = false;

        let fast = auc(&scores, &labels).unwrap();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            if !labels[i] { continue; }
            for j in 0..n {
                if labels[j] { continue; }
                pairs += 1.0;
                if scores[i] > scores[j] { wins += 1.0; }
                else if scores[i] == scores[j] { wins += 0.5; }
            }
        }
        prop_assert!((fast - wins / pairs).abs() < 1e-12);
    }

    #[test]
    fn auc_strictly_increasing_transform_invariance(
        scores in proptest::collection::vec(-10.0f64..10.0, 4..60),
        label_bits in proptest::collection::vec(any::<bool>(), 4..60),
    ) {
        let n = scores.len().min(label_bits.len());
        let scores = &scores[..n];
        let mut labels = label_bits[..n].to_vec();
        labels[0] = true;
        labels[1] = false;
        let base = auc(scores, &labels).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| s.exp() / (1.0 + s.exp()) * 3.0 + 1.0).collect();
        let t = auc(&transformed, &labels).unwrap();
        prop_assert!((base - t).abs() < 1e-12);
    }

    #[test]
    fn filter_is_monotone_and_idempotent(durations in proptest::collection::vec(0i64..2000, 0..40), cutoff in 1i64..1500) {
        let segments: Vec<IntentSegment> = durations
            .iter()
            .enumerate()
            .map(|(i, &d)| IntentSegment {
                segment_id: format!("s1-{i:03}"),
                session_id: "s1".into(),
                pair_id: "p1".into(),
                intent_id: "i1".into(),
                start_ts: 0,
                end_ts: d,
                submitted_phrases: vec![],
                submission_index: i as u32 + 1,
            })
            .collect();
        let (kept, removed) = filter_segments(segments.clone(), cutoff);
        prop_assert_eq!(kept.len() + removed, segments.len());
        for s in &kept {
            prop_assert!(segments.contains(s));
        }
        let (again, removed2) = filter_segments(kept.clone(), cutoff);
        prop_assert_eq!(removed2, 0);
        prop_assert_eq!(again, kept);
    }

    #[test]
    fn splits_never_leak_pairs(
        counts in proptest::collection::vec(1usize..8, 6..20),
        seed in 0u64..500,
    ) {
        let pairs: Vec<String> = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(format!("p{i}"), n))
            .collect();
        let (train, test, plan) = group_holdout_split(&pairs, 0.33, seed).unwrap();
        for &i in &test {
            prop_assert!(plan.holdout_groups.contains(&pairs[i]));
        }
        for &i in &train {
            prop_assert!(!plan.holdout_groups.contains(&pairs[i]));
        }
        prop_assert_eq!(train.len() + test.len(), pairs.len());

        if train.iter().map(|&i| &pairs[i]).collect::<std::collections::HashSet<_>>().len() >= 3 {
            let (folds, sets) = group_kfold(&pairs, &train, 3, seed).unwrap();
            let mut seen = std::collections::HashSet::new();
            for set in &sets {
                for g in set {
                    prop_assert!(seen.insert(g.clone()), "pair in two folds");
                    prop_assert!(!plan.holdout_groups.contains(g));
                }
            }
            prop_assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), train.len());
        }
    }

    #[test]
    fn binarize_median_behaviour(values in proptest::collection::vec(-100.0f64..100.0, 2..60)) {
        let distinct = values.iter().any(|&v| (v - values[0]).abs() > 1e-9);
        prop_assume!(distinct);
        let threshold = binarize_median(&values).unwrap();
        let labels = binarize(&values, threshold);
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assert!(pos >= 1, "median split must produce positives");
        prop_assert!(pos < values.len(), "median split must produce negatives");
        prop_assert_eq!(mae(&values, &values).unwrap(), 0.0);
    }
}
