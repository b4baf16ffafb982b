//! Core pipeline for predicting the quality of collaboratively authored
//! chatbot training phrases from two synchronized streams: system interaction
//! logs and dialogue transcripts.
//!
//! The pipeline stages are ingestion ([`ingest`]), timeline segmentation
//! ([`segment`]), outcome measurement ([`outcomes`]), featurization
//! ([`features`]), regression modeling ([`model`]) and the evaluation
//! protocol ([`eval`]). [`synth`] generates deterministic corpora with
//! planted, modality-specific signal for end-to-end verification.

pub mod eval;
pub mod exec;
pub mod features;
pub mod hash;
pub mod ingest;
pub mod model;
pub mod outcomes;
pub mod pipeline;
pub mod rng;
pub mod segment;
pub mod stats;
pub mod synth;
