//! The three project-quality outcomes (phrase count, lexical density,
//! lexical variation), learning curves over submission index, and Pearson
//! validation correlations against external grades.
//!
//! Content words are approximated as any alphabetic token absent from a
//! closed function-word lexicon; comparison is on exact lowercase token
//! identity, so "hat" and "hats" are distinct.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Built-in lexicon file (shipped with the crate).
const BUILTIN_LEXICON: &str = include_str!("data/function_words.txt");

#[derive(Debug, Error)]
pub enum OutcomeError {
    #[error("series is empty")]
    EmptySeries,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation requires at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Closed set of function words defining the content/function split.
#[derive(Debug, Clone)]
pub struct ContentLexicon {
    function_words: HashSet<String>,
    pub version: String,
}

impl ContentLexicon {
    /// The lexicon bundled with the crate.
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN_LEXICON.as_bytes()).expect("builtin lexicon parses")
    }

    /// Parse a lexicon file: one token per line, `#` starts a comment.
    /// A comment of the form `# version <tag>` names the lexicon version.
    pub fn from_reader<R: Read>(r: R) -> Result<Self, OutcomeError> {
        let mut function_words = HashSet::new();
        let mut version = String::from("unversioned");
        for line in BufReader::new(r).lines() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("version") {
                    let v = v.trim();
                    if !v.is_empty() {
                        version = v.to_string();
                    }
                }
                continue;
            }
            if !trimmed.is_empty() {
                function_words.insert(trimmed.to_lowercase());
            }
        }
        if function_words.is_empty() {
            return Err(OutcomeError::EmptyLexicon);
        }
        Ok(Self {
            function_words,
            version,
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.function_words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.function_words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.function_words.is_empty()
    }

    /// Function words in sorted order (used by the synthetic generator).
    pub fn sorted_words(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.function_words.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Lowercase and split on every non-alphanumeric character, dropping empty
/// fragments.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// A token is a content word iff it is not a function word and contains at
/// least one alphabetic character.
pub fn is_content_word(token: &str, lexicon: &ContentLexicon) -> bool {
    !lexicon.contains(token) && token.chars().any(char::is_alphabetic)
}

/// The three outcomes for one segment's submitted phrases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector {
    pub phrase_count: u32,
    pub lexical_density: f64,
    pub lexical_variation: f64,
    /// True when total words = 0 or total content words = 0; the affected
    /// ratios are reported as 0.
    pub degenerate: bool,
}

/// Which outcome a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    PhraseCount,
    LexicalDensity,
    LexicalVariation,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 3] = [
        OutcomeKind::PhraseCount,
        OutcomeKind::LexicalDensity,
        OutcomeKind::LexicalVariation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OutcomeKind::PhraseCount => "phrase_count",
            OutcomeKind::LexicalDensity => "lexical_density",
            OutcomeKind::LexicalVariation => "lexical_variation",
        }
    }

    pub fn value(&self, v: &OutcomeVector) -> f64 {
        match self {
            OutcomeKind::PhraseCount => f64::from(v.phrase_count),
            OutcomeKind::LexicalDensity => v.lexical_density,
            OutcomeKind::LexicalVariation => v.lexical_variation,
        }
    }

    pub fn parse(s: &str) -> Option<OutcomeKind> {
        match s {
            "phrase_count" => Some(OutcomeKind::PhraseCount),
            "lexical_density" => Some(OutcomeKind::LexicalDensity),
            "lexical_variation" => Some(OutcomeKind::LexicalVariation),
            _ => None,
        }
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Compute phrase count, lexical density, and lexical variation over the
/// pooled tokens of all phrases in a submission.
pub fn compute_outcomes(phrases: &[String], lexicon: &ContentLexicon) -> OutcomeVector {
    let tokens: Vec<String> = phrases.iter().flat_map(|p| tokenize(p)).collect();
    let total = tokens.len();
    let content: Vec<&String> = tokens
        .iter()
        .filter(|t| is_content_word(t, lexicon))
        .collect();
    let n_content = content.len();
    let unique: HashSet<&str> = content.iter().map(|s| s.as_str()).collect();

    let density = if total == 0 {
        0.0
    } else {
        n_content as f64 / total as f64
    };
    let variation = if n_content == 0 {
        0.0
    } else {
        unique.len() as f64 / n_content as f64
    };
    OutcomeVector {
        phrase_count: phrases.len() as u32,
        lexical_density: density,
        lexical_variation: variation,
        degenerate: total == 0 || n_content == 0,
    }
}

/// Trailing moving average: the value at position k is the mean of the raw
/// values in the window ending at k (shorter at the start).
pub fn learning_curve(
    series: &[(u32, f64)],
    window: usize,
) -> Result<Vec<(u32, f64)>, OutcomeError> {
    assert!(window >= 1, "window must be >= 1");
    if series.is_empty() {
        return Err(OutcomeError::EmptySeries);
    }
    let mut out = Vec::with_capacity(series.len());
    for k in 0..series.len() {
        let lo = (k + 1).saturating_sub(window);
        let slice = &series[lo..=k];
        let mean = slice.iter().map(|(_, v)| v).sum::<f64>() / slice.len() as f64;
        out.push((series[k].0, mean));
    }
    Ok(out)
}

/// Pearson correlation with a two-sided p-value from the t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

/// Product-moment correlation of two equal-length samples (n >= 3, nonzero
/// variance). p is two-sided via t = r * sqrt(df / (1 - r^2)) with df = n-2.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<CorrelationResult, OutcomeError> {
    if x.len() != y.len() {
        return Err(OutcomeError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(OutcomeError::TooFewSamples(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(OutcomeError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = x.len() - 2;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df as f64 / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("valid t distribution");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(CorrelationResult {
        r,
        df,
        p_two_sided: p,
    })
}
