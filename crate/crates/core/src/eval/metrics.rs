//! Ranking and error metrics: median-split binarization, Mann-Whitney AUC,
//! MAE, and bootstrapped AUC confidence intervals.

use rand::Rng;

use super::EvalError;
use crate::exec;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{quantile, quantile_sorted};

/// Threshold for turning a regression target into binary labels: the median
/// (linear-interpolation quantile) of the training targets. Labels from this
/// threshold are `y > threshold`.
pub fn binarize_median(y_train: &[f64]) -> Result<f64, EvalError> {
    if y_train.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let min = y_train.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = y_train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(EvalError::AllEqual);
    }
    Ok(quantile(y_train, 0.5))
}

/// Apply a binarization threshold: label 1 iff the value strictly exceeds it.
pub fn binarize(y: &[f64], threshold: f64) -> Vec<bool> {
    y.iter().map(|&v| v > threshold).collect()
}

/// Mann-Whitney AUC: over all (positive, negative) pairs, a positive scoring
/// strictly higher counts 1 and a tie counts 0.5. Computed from average
/// ranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tied score runs (1-based ranks)
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean absolute error in the targets' original units.
pub fn mae(pred: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != y.len() {
        return Err(EvalError::LengthMismatch(pred.len(), y.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Percentile bootstrap 95% CI for AUC.
///
/// Draws `b` resamples of (score, label) pairs with replacement; a resample
/// containing one class is redrawn, up to 10 attempts each (a 10*b total
/// budget). Each resample derives its own RNG from `(seed, index)`, so the
/// result is independent of evaluation order and parallelism.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[bool],
    b: usize,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let n = scores.len();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(EvalError::SingleClass);
    }
    let resampled: Vec<Option<f64>> = exec::map_range(b, |bi| {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("resample/{bi}")));
        for _ in 0..10 {
            let mut s = Vec::with_capacity(n);
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rng.gen_range(0..n);
                s.push(scores[k]);
                l.push(labels[k]);
            }
            if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
                return Some(auc(&s, &l).expect("two-class resample"));
            }
        }
        None
    });
    let failed = resampled.iter().filter(|r| r.is_none()).count();
    if failed > 0 {
        return Err(EvalError::DegenerateResampling { failed });
    }
    let mut aucs: Vec<f64> = resampled.into_iter().flatten().collect();
    aucs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        quantile_sorted(&aucs, 0.025),
        quantile_sorted(&aucs, 0.975),
    ))
}
