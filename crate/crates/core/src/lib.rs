//! Literature-informed pretraining of random forests.
//!
//! Published per-group summary statistics are pooled into class-conditional
//! multivariate normal distributions, labeled cohorts are simulated from them,
//! and hybrid forests mix trees grown on the simulated cohort with trees grown
//! on the real training split. Approaches are compared against a standard
//! forest under Monte Carlo cross validation with the corrected resampled
//! t-test.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel execution live in the `simforest` companion crate.
//!
//! Module map:
//!
//! - [`evidence`]: study-level moments and correlations, weighted pooling,
//!   class distributions.
//! - [`cohort`]: PSD repair, Cholesky factors, normal sampling, simulated
//!   cohorts and the all-features extension.
//! - [`preprocess`]: one-hot encoding, chained-equations imputation, outcome
//!   labeling and SMOTE-NC.
//! - [`forest`]: CART trees, hybrid forests and grid search.
//! - [`metrics`]: confusion rates, AUROC and the corrected resampled t-test.
//! - [`mccv`]: the Monte Carlo cross validation driver and report summaries.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cohort;
pub mod data;
pub mod error;
pub mod evidence;
pub mod forest;
pub mod linalg;
pub mod mccv;
pub mod metrics;
pub mod preprocess;
pub mod rng;

pub use cohort::{
    cholesky_lower, extend_all_features, nearest_psd, sample_mvnd, simulate_cohort,
    SimulatedCohort, VariableSource,
};
pub use data::{Cell, FeatureKind, FeatureSchema, FeatureSpec, NumericTable, TabularDataset};
pub use error::{Error, Result};
pub use evidence::{
    build_class_distribution, pool_correlation, pool_moments, ClassDistribution, EvidenceSet,
    PooledMoment, StudyCorrelation, StudyMoment,
};
pub use forest::{
    classify, fit_forest, fit_hybrid, fit_tree, grid_search, predict_proba, split_tree_counts,
    DecisionTree, ForestParams, HybridForest, MaxFeatures, Provenance,
};
pub use linalg::Matrix;
pub use mccv::{
    compare_best, mccv_run, Approach, ApproachMode, Balancing, MccvReport, MetricsRecord,
    RunConfig, SimulationDataset,
};
pub use metrics::{auroc, confusion, corrected_resampled_ttest, ComparisonResult, Confusion};
pub use preprocess::{
    apply_imputer, fit_imputer, label_remission, label_response, one_hot_encode, smotenc_balance,
    Imputer, OutcomeMode, OutcomeSpec,
};
