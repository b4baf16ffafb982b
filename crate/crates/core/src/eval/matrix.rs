//! The full experiment matrix: for each outcome x modality, split into a
//! group-aware holdout, grid-search on the training side, retrain the winner,
//! and report holdout AUC with a bootstrap CI plus MAE in original units.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::{
    design_matrix, grid_search, layers_label, space_for, target_values, zscore_targets,
    CellContext, CvRecord,
};
use super::metrics::{auc, binarize, binarize_median, bootstrap_ci, mae};
use super::split::{group_holdout_split, group_kfold, SplitPlan};
use super::EvalError;
use crate::features::{FeatureConfig, Modality, RawSegmentFeatures};
use crate::model::{train, Mlp, MlpConfig};
use crate::outcomes::{OutcomeKind, OutcomeVector};
use crate::rng::{derive_seed, rng_from_seed};
use crate::segment::IntentSegment;

/// One analyzed segment: its window, split-independent raw features, and
/// measured outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRow {
    pub segment: IntentSegment,
    pub raw: RawSegmentFeatures,
    pub outcomes: OutcomeVector,
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hidden_layers: Vec<usize>,
    pub dropout: f64,
}

/// Shared training hyperparameters (the grid varies depth and dropout only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDefaults {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for MlpDefaults {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 2,
        }
    }
}

/// Default search grid: three depth configurations crossed with six dropout
/// rates.
pub fn default_grid() -> Vec<GridPoint> {
    let layer_sets: [&[usize]; 3] = [&[256, 128], &[512, 256, 128], &[1024, 512, 256, 128]];
    let dropouts = [0.0, 0.025, 0.05, 0.1, 0.3, 0.5];
    let mut grid = Vec::new();
    for layers in layer_sets {
        for &d in &dropouts {
            grid.push(GridPoint {
                hidden_layers: layers.to_vec(),
                dropout: d,
            });
        }
    }
    grid
}

/// Configuration for one full experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub holdout_frac: f64,
    pub k: usize,
    pub bootstrap_b: usize,
    pub grid: Vec<GridPoint>,
    pub mlp: MlpDefaults,
    pub modalities: Vec<Modality>,
    pub outcomes: Vec<OutcomeKind>,
    /// When non-empty, ablation rows (phrase count, n-gram features touching
    /// these event types removed) are appended to the matrix.
    pub exclude_event_types: Vec<String>,
    pub feature: FeatureConfig,
}

impl ExperimentConfig {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            holdout_frac: 0.33,
            k: 5,
            bootstrap_b: 1000,
            grid: default_grid(),
            mlp: MlpDefaults::default(),
            modalities: Modality::ALL.to_vec(),
            outcomes: OutcomeKind::ALL.to_vec(),
            exclude_event_types: Vec::new(),
            feature: FeatureConfig::default(),
        }
    }
}

/// One row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub outcome: String,
    pub modality: String,
    pub auc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub mae: f64,
    pub n_test: usize,
    pub threshold: Option<f64>,
    pub best_layers: String,
    pub best_dropout: f64,
}

/// The experiment matrix result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub cv_records: Vec<CvRecord>,
    pub split: SplitPlan,
}

struct CellSpec {
    outcome: OutcomeKind,
    modality: Modality,
    label: String,
    ablate: bool,
}

fn evaluate_cell(
    rows: &[SegmentRow],
    train_idx: &[usize],
    test_idx: &[usize],
    folds: &[Vec<usize>],
    spec: &CellSpec,
    exclude: &HashSet<String>,
    cfg: &ExperimentConfig,
) -> Result<(ReportRow, Vec<CvRecord>), EvalError> {
    let (outcome, modality, label) = (spec.outcome, spec.modality, spec.label.clone());
    let ctx = CellContext {
        rows,
        train_idx,
        folds,
        outcome,
        modality,
        exclude,
        feature: &cfg.feature,
        mlp: &cfg.mlp,
        master_seed: cfg.master_seed,
        label: label.clone(),
    };
    let (best_idx, cv_records) = grid_search(&ctx, &cfg.grid)?;
    let best = &cfg.grid[best_idx];

    // retrain the winner on the full training side
    let space = space_for(rows, train_idx, modality, &cfg.feature, exclude)?;
    let y_train_raw = target_values(rows, train_idx, outcome);
    let (y_train_z, y_mean, y_sd) = zscore_targets(&y_train_raw);
    let threshold = match binarize_median(&y_train_raw) {
        Ok(t) => Some(t),
        Err(EvalError::AllEqual) => None,
        Err(e) => return Err(e),
    };
    let x_train = design_matrix(rows, train_idx, &space);
    let x_test = design_matrix(rows, test_idx, &space);
    let y_test_raw = target_values(rows, test_idx, outcome);

    let seed = derive_seed(cfg.master_seed, &format!("final/{label}/{outcome}"));
    let config = MlpConfig {
        hidden_layers: best.hidden_layers.clone(),
        dropout: best.dropout,
        learning_rate: cfg.mlp.learning_rate,
        batch_size: cfg.mlp.batch_size,
        max_epochs: cfg.mlp.max_epochs,
        patience: cfg.mlp.patience,
        seed,
    };
    let mut mlp = Mlp::init(config, space.len(), &mut rng_from_seed(seed));
    train(&mut mlp, &x_train, &y_train_z)?;
    let scores = mlp.predict(&x_test)?.to_vec();

    // MAE in original outcome units
    let pred_orig: Vec<f64> = scores.iter().map(|s| s * y_sd + y_mean).collect();
    let mae_value = mae(&pred_orig, &y_test_raw)?;

    // AUC and CI when binarization and both classes are available
    let (auc_value, ci_low, ci_high) = match threshold {
        Some(t) => {
            let labels = binarize(&y_test_raw, t);
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                let a = auc(&scores, &labels)?;
                let (lo, hi) = bootstrap_ci(
                    &scores,
                    &labels,
                    cfg.bootstrap_b,
                    derive_seed(cfg.master_seed, &format!("boot/{label}/{outcome}")),
                )?;
                (Some(a), Some(lo), Some(hi))
            } else {
                log::warn!("holdout labels for {label}/{outcome} collapse to one class; AUC skipped");
                (None, None, None)
            }
        }
        None => {
            log::warn!("training targets for {label}/{outcome} are all equal; AUC skipped");
            (None, None, None)
        }
    };

    Ok((
        ReportRow {
            outcome: outcome.name().to_string(),
            modality: label,
            auc: auc_value,
            ci_low,
            ci_high,
            mae: mae_value,
            n_test: test_idx.len(),
            threshold,
            best_layers: layers_label(&best.hidden_layers),
            best_dropout: best.dropout,
        },
        cv_records,
    ))
}

/// Run the full matrix: one shared holdout split and fold plan, then one
/// cell per outcome x modality (plus phrase-count ablation rows when
/// exclusions are configured).
pub fn run_experiment_matrix(
    rows: &[SegmentRow],
    cfg: &ExperimentConfig,
) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let pairs: Vec<String> = rows.iter().map(|r| r.segment.pair_id.clone()).collect();
    let (train_idx, test_idx, mut plan) = group_holdout_split(
        &pairs,
        cfg.holdout_frac,
        derive_seed(cfg.master_seed, "holdout"),
    )?;
    let (folds, fold_sets) = group_kfold(
        &pairs,
        &train_idx,
        cfg.k,
        derive_seed(cfg.master_seed, "cv"),
    )?;
    plan.cv_folds = fold_sets;
    debug_assert!(plan
        .cv_folds
        .iter()
        .all(|f| f.is_disjoint(&plan.holdout_groups)));

    let mut cells: Vec<CellSpec> = Vec::new();
    for &outcome in &cfg.outcomes {
        for &modality in &cfg.modalities {
            cells.push(CellSpec {
                outcome,
                modality,
                label: modality.name().to_string(),
                ablate: false,
            });
        }
    }
    if !cfg.exclude_event_types.is_empty() {
        for &modality in &cfg.modalities {
            cells.push(CellSpec {
                outcome: OutcomeKind::PhraseCount,
                modality,
                label: format!("{}_ablated", modality.name()),
                ablate: true,
            });
        }
    }

    let exclude_set: HashSet<String> = cfg.exclude_event_types.iter().cloned().collect();
    let empty_set = HashSet::new();
    let mut report_rows = Vec::with_capacity(cells.len());
    let mut cv_records = Vec::new();
    for spec in cells {
        let exclude = if spec.ablate { &exclude_set } else { &empty_set };
        let (row, records) =
            evaluate_cell(rows, &train_idx, &test_idx, &folds, &spec, exclude, cfg)?;
        report_rows.push(row);
        cv_records.extend(records);
    }
    Ok(EvalReport {
        rows: report_rows,
        cv_records,
        split: plan,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `report.csv` (one row per outcome x modality).
pub fn write_report_csv<W: Write>(w: &mut W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(
        w,
        "outcome,modality,auc,ci_low,ci_high,mae,n_test,threshold,best_layers,best_dropout"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.outcome,
            r.modality,
            fmt_opt(r.auc),
            fmt_opt(r.ci_low),
            fmt_opt(r.ci_high),
            r.mae,
            r.n_test,
            fmt_opt(r.threshold),
            r.best_layers,
            r.best_dropout
        )?;
    }
    Ok(())
}

/// Write `cv_table.csv` (one row per configuration x fold).
pub fn write_cv_table_csv<W: Write>(w: &mut W, records: &[CvRecord]) -> std::io::Result<()> {
    writeln!(w, "outcome,modality,layers,dropout,fold,n_val,auc,mean_cv_auc")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.outcome,
            r.modality,
            r.layers,
            r.dropout,
            r.fold,
            r.n_val,
            fmt_opt(r.auc),
            fmt_opt(r.mean_cv_auc)
        )?;
    }
    Ok(())
}
