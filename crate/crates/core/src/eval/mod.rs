//! The evaluation protocol: group-aware splitting, grid search with k-fold
//! cross-validation, holdout AUC/MAE with bootstrapped confidence intervals,
//! and the full outcome x modality experiment matrix.
//!
//! Feature spaces, target statistics, and binarization thresholds are
//! derived strictly from the training side of every boundary; no pair ever
//! straddles a split.

mod grid;
mod matrix;
mod metrics;
mod split;

pub use grid::{grid_search, CellContext, CvRecord};
pub use matrix::{
    default_grid, run_experiment_matrix, write_cv_table_csv, write_report_csv, EvalReport,
    ExperimentConfig, GridPoint, MlpDefaults, ReportRow, SegmentRow,
};
pub use metrics::{auc, binarize, binarize_median, bootstrap_ci, mae};
pub use split::{group_holdout_split, group_kfold, SplitPlan};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("holdout fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("all target values are equal; binarization is undefined")]
    AllEqual,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("bootstrap could not draw {failed} two-class resamples within the attempt budget")]
    DegenerateResampling { failed: usize },
    #[error("no grid configuration produced a defined cross-validation AUC")]
    NoViableConfig,
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
