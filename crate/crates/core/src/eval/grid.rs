//! Grid search over network configurations with group-aware k-fold
//! cross-validation. Fold feature spaces, target statistics, and
//! binarization thresholds are derived from each fold's training portion
//! only.

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::matrix::{GridPoint, MlpDefaults, SegmentRow};
use super::metrics::{auc, binarize, binarize_median};
use super::EvalError;
use crate::exec;
use crate::features::{
    ablation_filter, build_feature_space, FeatureConfig, FeatureSpace, Modality,
    RawSegmentFeatures,
};
use crate::model::{train, Mlp, MlpConfig};
use crate::outcomes::OutcomeKind;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{mean, sample_sd};

/// One cross-validation measurement: a configuration evaluated on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub outcome: String,
    pub modality: String,
    pub layers: String,
    pub dropout: f64,
    pub fold: usize,
    pub n_val: usize,
    /// None when the fold's validation labels collapse to one class.
    pub auc: Option<f64>,
    pub mean_cv_auc: Option<f64>,
}

/// Shared inputs for one experiment cell (outcome x modality).
pub struct CellContext<'a> {
    pub rows: &'a [SegmentRow],
    pub train_idx: &'a [usize],
    pub folds: &'a [Vec<usize>],
    pub outcome: OutcomeKind,
    pub modality: Modality,
    /// Event types whose n-gram features are removed (ablation runs).
    pub exclude: &'a HashSet<String>,
    pub feature: &'a FeatureConfig,
    pub mlp: &'a MlpDefaults,
    pub master_seed: u64,
    /// Row label for reports and seed tags, e.g. "log" or "log_ablated".
    pub label: String,
}

/// Training-side design matrices for one fold.
pub(super) struct FoldData {
    pub x_train: Array2<f64>,
    pub y_train_z: Array1<f64>,
    pub x_val: Array2<f64>,
    pub y_val_raw: Vec<f64>,
    pub threshold: Option<f64>,
    pub input_dim: usize,
}

pub(super) fn target_values(rows: &[SegmentRow], idx: &[usize], outcome: OutcomeKind) -> Vec<f64> {
    idx.iter().map(|&i| outcome.value(&rows[i].outcomes)).collect()
}

/// Build a (possibly ablated) feature space from the given rows.
pub(super) fn space_for(
    rows: &[SegmentRow],
    idx: &[usize],
    modality: Modality,
    feature: &FeatureConfig,
    exclude: &HashSet<String>,
) -> Result<FeatureSpace, EvalError> {
    let raws: Vec<&RawSegmentFeatures> = idx.iter().map(|&i| &rows[i].raw).collect();
    let space = build_feature_space(&raws, modality, feature)?;
    Ok(if exclude.is_empty() {
        space
    } else {
        ablation_filter(&space, exclude)
    })
}

pub(super) fn design_matrix(rows: &[SegmentRow], idx: &[usize], space: &FeatureSpace) -> Array2<f64> {
    let dim = space.len();
    let mut x = Array2::zeros((idx.len(), dim));
    for (r, &i) in idx.iter().enumerate() {
        let v = space.transform(&rows[i].raw);
        for (c, val) in v.into_iter().enumerate() {
            x[(r, c)] = val;
        }
    }
    x
}

/// Z-score targets with training statistics; a zero sd falls back to 1 so
/// degenerate cells can still report MAE.
pub(super) fn zscore_targets(y: &[f64]) -> (Array1<f64>, f64, f64) {
    let m = mean(y);
    let sd = sample_sd(y);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    (Array1::from_iter(y.iter().map(|v| (v - m) / sd)), m, sd)
}

fn fold_data(ctx: &CellContext, fold: usize) -> Result<FoldData, EvalError> {
    let val_idx = &ctx.folds[fold];
    let val_set: HashSet<usize> = val_idx.iter().copied().collect();
    let fold_train: Vec<usize> = ctx
        .train_idx
        .iter()
        .copied()
        .filter(|i| !val_set.contains(i))
        .collect();
    let space = space_for(ctx.rows, &fold_train, ctx.modality, ctx.feature, ctx.exclude)?;
    let y_train_raw = target_values(ctx.rows, &fold_train, ctx.outcome);
    let (y_train_z, _, _) = zscore_targets(&y_train_raw);
    let threshold = match binarize_median(&y_train_raw) {
        Ok(t) => Some(t),
        Err(EvalError::AllEqual) => None,
        Err(e) => return Err(e),
    };
    Ok(FoldData {
        x_train: design_matrix(ctx.rows, &fold_train, &space),
        y_train_z,
        x_val: design_matrix(ctx.rows, val_idx, &space),
        y_val_raw: target_values(ctx.rows, val_idx, ctx.outcome),
        input_dim: space.len(),
        threshold,
    })
}

fn train_and_score(
    ctx: &CellContext,
    fold: &FoldData,
    point: &GridPoint,
    seed_tag: &str,
) -> Result<Option<f64>, EvalError> {
    let Some(threshold) = fold.threshold else {
        return Ok(None);
    };
    let labels = binarize(&fold.y_val_raw, threshold);
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Ok(None);
    }
    let config = MlpConfig {
        hidden_layers: point.hidden_layers.clone(),
        dropout: point.dropout,
        learning_rate: ctx.mlp.learning_rate,
        batch_size: ctx.mlp.batch_size,
        max_epochs: ctx.mlp.max_epochs,
        patience: ctx.mlp.patience,
        seed: derive_seed(ctx.master_seed, seed_tag),
    };
    let mut mlp = Mlp::init(config.clone(), fold.input_dim, &mut rng_from_seed(config.seed));
    train(&mut mlp, &fold.x_train, &fold.y_train_z)?;
    let scores = mlp.predict(&fold.x_val)?;
    Ok(Some(auc(&scores.to_vec(), &labels)?))
}

/// Evaluate every grid point on every fold; the winner is the argmax of mean
/// validation AUC, ties broken by fewer parameters, then lower dropout, then
/// grid order. Returns the winning index and the full CV table.
pub fn grid_search(
    ctx: &CellContext,
    grid: &[GridPoint],
) -> Result<(usize, Vec<CvRecord>), EvalError> {
    assert!(!grid.is_empty(), "grid must be non-empty");
    let k = ctx.folds.len();

    let folds: Vec<Result<FoldData, EvalError>> = exec::map_range(k, |fi| fold_data(ctx, fi));
    let mut fold_data = Vec::with_capacity(k);
    for f in folds {
        fold_data.push(f?);
    }

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|ci| (0..k).map(move |fi| (ci, fi)))
        .collect();
    let results: Vec<Result<Option<f64>, EvalError>> = exec::map_collect(jobs, |(ci, fi)| {
        let tag = format!(
            "train/{}/{}/c{}/f{}",
            ctx.label, ctx.outcome, ci, fi
        );
        train_and_score(ctx, &fold_data[fi], &grid[ci], &tag)
    });

    let mut per_config: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(k); grid.len()];
    for ((ci, _), res) in (0..grid.len())
        .flat_map(|ci| (0..k).map(move |fi| (ci, fi)))
        .zip(results)
    {
        per_config[ci].push(res?);
    }

    let means: Vec<Option<f64>> = per_config
        .iter()
        .map(|aucs| {
            let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
            if defined.is_empty() {
                None
            } else {
                Some(mean(&defined))
            }
        })
        .collect();

    let mut records = Vec::with_capacity(grid.len() * k);
    for (ci, point) in grid.iter().enumerate() {
        for (fi, &fold_auc) in per_config[ci].iter().enumerate() {
            records.push(CvRecord {
                outcome: ctx.outcome.name().to_string(),
                modality: ctx.label.clone(),
                layers: layers_label(&point.hidden_layers),
                dropout: point.dropout,
                fold: fi,
                n_val: ctx.folds[fi].len(),
                auc: fold_auc,
                mean_cv_auc: means[ci],
            });
        }
    }

    // tie-break parameter counts use the full-training-set space width
    let full_space = space_for(ctx.rows, ctx.train_idx, ctx.modality, ctx.feature, ctx.exclude)?;
    let best = select_best(grid, &means, full_space.len()).ok_or(EvalError::NoViableConfig)?;
    Ok((best, records))
}

/// Argmax of mean CV AUC; exact ties fall to fewer parameters, then lower
/// dropout, then grid order. Configurations with no defined AUC are skipped.
pub(super) fn select_best(grid: &[GridPoint], means: &[Option<f64>], input_dim: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for ci in 0..grid.len() {
        let Some(m) = means[ci] else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let mb = means[b].unwrap();
                if m != mb {
                    m > mb
                } else {
                    let (pc, pb) = (param_count(&grid[ci], input_dim), param_count(&grid[b], input_dim));
                    if pc != pb {
                        pc < pb
                    } else {
                        grid[ci].dropout < grid[b].dropout
                    }
                }
            }
        };
        if better {
            best = Some(ci);
        }
    }
    best
}

pub(super) fn layers_label(layers: &[usize]) -> String {
    layers
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn param_count(point: &GridPoint, input_dim: usize) -> usize {
    MlpConfig {
        hidden_layers: point.hidden_layers.clone(),
        ..Default::default()
    }
    .param_count(input_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(layers: &[usize], dropout: f64) -> GridPoint {
        GridPoint {
            hidden_layers: layers.to_vec(),
            dropout,
        }
    }

    #[test]
    fn single_config_wins() {
        let grid = vec![point(&[8], 0.3)];
        assert_eq!(select_best(&grid, &[Some(0.5)], 10), Some(0));
    }

    #[test]
    fn higher_mean_wins() {
        let grid = vec![point(&[8], 0.0), point(&[64, 32], 0.5)];
        assert_eq!(select_best(&grid, &[Some(0.6), Some(0.7)], 10), Some(1));
    }

    #[test]
    fn exact_tie_prefers_fewer_parameters() {
        let grid = vec![point(&[64, 32], 0.0), point(&[8], 0.5)];
        assert_eq!(select_best(&grid, &[Some(0.7), Some(0.7)], 10), Some(1));
    }

    #[test]
    fn tie_with_equal_parameters_prefers_lower_dropout() {
        let grid = vec![point(&[8], 0.5), point(&[8], 0.1)];
        assert_eq!(select_best(&grid, &[Some(0.7), Some(0.7)], 10), Some(1));
    }

    #[test]
    fn full_tie_keeps_grid_order() {
        let grid = vec![point(&[8], 0.1), point(&[8], 0.1)];
        assert_eq!(select_best(&grid, &[Some(0.7), Some(0.7)], 10), Some(0));
    }

    #[test]
    fn undefined_means_are_skipped() {
        let grid = vec![point(&[8], 0.0), point(&[16], 0.0)];
        assert_eq!(select_best(&grid, &[None, Some(0.5)], 10), Some(1));
        assert_eq!(select_best(&grid, &[None, None], 10), None);
    }
}
