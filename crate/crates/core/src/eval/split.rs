//! Group-aware train/test and cross-validation splits keyed by pair id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::rng_from_seed;
use rand::Rng;

/// A reproducible split: which pairs sit in the holdout and how the rest
/// fold for cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub holdout_groups: BTreeSet<String>,
    pub cv_folds: Vec<BTreeSet<String>>,
    pub seed: u64,
}

fn shuffled_groups(pairs: &[String], seed: u64) -> Vec<String> {
    let mut groups: Vec<String> = pairs.to_vec();
    groups.sort();
    groups.dedup();
    let mut rng = rng_from_seed(seed);
    for i in (1..groups.len()).rev() {
        let j = rng.gen_range(0..=i);
        groups.swap(i, j);
    }
    groups
}

/// Shuffle pairs by seed, then greedily move whole pairs to the test side
/// until the test share of segments first reaches `frac`. Returns
/// (train indices, test indices, plan with holdout groups recorded).
pub fn group_holdout_split(
    pairs: &[String],
    frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, SplitPlan), EvalError> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(EvalError::InvalidFraction(frac));
    }
    let groups = shuffled_groups(pairs, seed);
    if groups.len() < 2 {
        return Err(EvalError::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    let mut count_by_group: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        *count_by_group.entry(p.as_str()).or_insert(0) += 1;
    }
    let total = pairs.len() as f64;
    let mut holdout: BTreeSet<String> = BTreeSet::new();
    let mut test_count = 0usize;
    for g in &groups {
        if (test_count as f64) / total >= frac {
            break;
        }
        test_count += count_by_group.get(g.as_str()).copied().unwrap_or(0);
        holdout.insert(g.clone());
    }
    if holdout.len() == groups.len() {
        return Err(EvalError::TooFewGroups {
            needed: holdout.len() + 1,
            found: groups.len(),
        });
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if holdout.contains(p) {
            test_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    Ok((
        train_idx,
        test_idx,
        SplitPlan {
            holdout_groups: holdout,
            cv_folds: Vec::new(),
            seed,
        },
    ))
}

/// Per-fold validation row indices plus the pair sets behind them.
pub type FoldPlan = (Vec<Vec<usize>>, Vec<BTreeSet<String>>);

/// Shuffle the training pairs by seed and deal them round-robin into k
/// folds. Returns one validation index set per fold (indices into `pairs`).
pub fn group_kfold(
    pairs: &[String],
    train_idx: &[usize],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, EvalError> {
    assert!(k >= 2, "k must be >= 2");
    let train_pairs: Vec<String> = train_idx.iter().map(|&i| pairs[i].clone()).collect();
    let groups = shuffled_groups(&train_pairs, seed);
    if groups.len() < k {
        return Err(EvalError::TooFewGroups {
            needed: k,
            found: groups.len(),
        });
    }
    let mut fold_sets: Vec<BTreeSet<String>> = vec![BTreeSet::new(); k];
    for (i, g) in groups.into_iter().enumerate() {
        fold_sets[i % k].insert(g);
    }
    let folds = fold_sets
        .iter()
        .map(|set| {
            train_idx
                .iter()
                .copied()
                .filter(|&i| set.contains(&pairs[i]))
                .collect()
        })
        .collect();
    Ok((folds, fold_sets))
}
