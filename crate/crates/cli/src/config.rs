//! Run configuration file (TOML).
//!
//! Plain keys at the top level, one `[[approach]]` table per approach.
//! Relative paths resolve against the directory holding the config file.
//! The emitted `manifest.toml` is itself a valid config with every default
//! spelled out and every path absolute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simforest_core::forest::{build_grid, TuningMetric};
use simforest_core::{
    Approach, Balancing, MaxFeatures, OutcomeMode, OutcomeSpec, RunConfig,
    SimulationDataset,
};

use crate::error::{CliResult, CliStage, Failure};
use crate::io::DEFAULT_MISSING_TOKEN;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn d_missing() -> String {
    DEFAULT_MISSING_TOKEN.into()
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_iterations() -> usize {
    RunConfig::DEFAULT_ITERATIONS
}
fn d_test_fraction() -> f64 {
    RunConfig::DEFAULT_TEST_FRACTION
}
fn d_trees() -> usize {
    RunConfig::DEFAULT_TREES
}
fn d_folds() -> usize {
    RunConfig::DEFAULT_FOLDS
}
fn d_metric() -> String {
    "balanced_accuracy".into()
}
fn d_sim() -> usize {
    RunConfig::DEFAULT_SIMULATED_PER_CLASS
}
fn d_sweeps() -> usize {
    simforest_core::preprocess::DEFAULT_SWEEPS
}
fn d_k() -> usize {
    simforest_core::preprocess::DEFAULT_K_NEIGHBORS
}
fn d_outcome() -> String {
    "response".into()
}
fn d_reliability() -> f64 {
    OutcomeSpec::DEFAULT_RELIABILITY
}
fn d_cutoff() -> f64 {
    OutcomeSpec::DEFAULT_RCI_CUTOFF
}
fn d_remission() -> f64 {
    OutcomeSpec::DEFAULT_REMISSION_THRESHOLD
}
fn d_pos() -> String {
    "responder".into()
}
fn d_neg() -> String {
    "non_responder".into()
}
fn d_grid_mf() -> Vec<String> {
    simforest_core::forest::GRID_MAX_FEATURES
        .iter()
        .map(|m| m.to_string())
        .collect()
}
fn d_grid_leaf() -> Vec<usize> {
    simforest_core::forest::GRID_MIN_SAMPLES_LEAF.to_vec()
}
fn d_grid_samples() -> Vec<f64> {
    simforest_core::forest::GRID_MAX_SAMPLES.to_vec()
}
fn d_baseline() -> String {
    "standard".into()
}
fn d_log() -> String {
    "info".into()
}
fn d_balancing() -> String {
    "smote".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// `standard` or `hybrid`.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default = "d_balancing")]
    pub balancing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_version: Option<String>,

    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub evidence_moments: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_correlations: Option<PathBuf>,
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    #[serde(default = "d_missing")]
    pub missing_token: String,

    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_trees")]
    pub n_trees: usize,
    /// Trees per forest during grid search; defaults to `n_trees`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning_trees: Option<usize>,
    #[serde(default = "d_folds")]
    pub folds: usize,
    /// `balanced_accuracy` or `auc`.
    #[serde(default = "d_metric")]
    pub tuning_metric: String,
    #[serde(default = "d_sim")]
    pub simulated_per_class: usize,
    #[serde(default = "d_sweeps")]
    pub imputation_sweeps: usize,
    #[serde(default = "d_k")]
    pub smote_k: usize,

    /// `response` or `remission`.
    #[serde(default = "d_outcome")]
    pub outcome: String,
    pub score_pre: String,
    pub score_post: String,
    #[serde(default = "d_reliability")]
    pub reliability: f64,
    #[serde(default = "d_cutoff")]
    pub rci_cutoff: f64,
    #[serde(default = "d_remission")]
    pub remission_threshold: f64,

    #[serde(default = "d_pos")]
    pub positive_group: String,
    #[serde(default = "d_neg")]
    pub negative_group: String,
    #[serde(default)]
    pub core_variables: Vec<String>,
    #[serde(default)]
    pub extra_variables: Vec<String>,

    #[serde(default = "d_grid_mf")]
    pub grid_max_features: Vec<String>,
    #[serde(default = "d_grid_leaf")]
    pub grid_min_samples_leaf: Vec<usize>,
    #[serde(default = "d_grid_samples")]
    pub grid_max_samples: Vec<f64>,

    #[serde(default = "d_baseline")]
    pub baseline: String,
    #[serde(default = "d_log")]
    pub log_level: String,

    #[serde(default)]
    pub approach: Vec<ApproachEntry>,
}

/// A parsed configuration with paths resolved and the core run
/// configuration built.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Echo of the file with absolute paths and all defaults filled in.
    pub file: FileConfig,
    pub run: RunConfig,
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Failure {
    Failure::new(CliStage::Parse, format!("{}: {msg}", path.display()))
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined)
}

impl FileConfig {
    pub fn from_toml(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| parse_err(origin, e))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| Failure::new(CliStage::Write, format!("manifest: {e}")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.dataset = absolute(base, &self.dataset);
        self.schema = absolute(base, &self.schema);
        self.evidence_moments = absolute(base, &self.evidence_moments);
        self.evidence_correlations = self
            .evidence_correlations
            .as_ref()
            .map(|p| absolute(base, p));
        self.out_dir = absolute(base, &self.out_dir);
    }

    /// Builds the core run configuration. Only syntax is checked here;
    /// semantic checks live in [`RunConfig::findings`].
    pub fn to_run_config(&self, origin: &Path) -> CliResult<RunConfig> {
        let bad = |msg: String| parse_err(origin, msg);
        let mut outcome = OutcomeSpec::response(self.score_pre.clone(), self.score_post.clone());
        outcome.mode = match self.outcome.as_str() {
            "response" => OutcomeMode::Response,
            "remission" => OutcomeMode::Remission,
            o => return Err(bad(format!("outcome `{o}` is neither response nor remission"))),
        };
        outcome.reliability = self.reliability;
        outcome.rci_cutoff = self.rci_cutoff;
        outcome.remission_threshold = self.remission_threshold;

        let mut approaches = Vec::with_capacity(self.approach.len());
        for (i, a) in self.approach.iter().enumerate() {
            let balancing: Balancing = a
                .balancing
                .parse()
                .map_err(|e| bad(format!("approach {}: {e}", i + 1)))?;
            let approach = match a.mode.as_str() {
                "standard" => Approach::standard(balancing),
                "hybrid" => {
                    let dataset: SimulationDataset = a
                        .dataset
                        .as_deref()
                        .ok_or_else(|| bad(format!("approach {}: hybrid needs `dataset`", i + 1)))?
                        .parse()
                        .map_err(|e| bad(format!("approach {}: {e}", i + 1)))?;
                    let weight = a
                        .weight
                        .ok_or_else(|| bad(format!("approach {}: hybrid needs `weight`", i + 1)))?;
                    Approach::hybrid(dataset, weight, balancing)
                }
                m => return Err(bad(format!("approach {}: mode `{m}` is neither standard nor hybrid", i + 1))),
            };
            let approach = match &a.id {
                Some(id) => approach.with_id(id.clone()),
                None => approach,
            };
            approaches.push(approach);
        }

        let max_features = self
            .grid_max_features
            .iter()
            .map(|s| s.parse::<MaxFeatures>().map_err(|e| bad(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        let tuning_trees = self.tuning_trees.unwrap_or(self.n_trees);

        let mut run = RunConfig::new(outcome, self.core_variables.clone(), approaches);
        run.iterations = self.iterations;
        run.test_fraction = self.test_fraction;
        run.master_seed = self.master_seed;
        run.positive_group = self.positive_group.clone();
        run.negative_group = self.negative_group.clone();
        run.extra_variables = self.extra_variables.clone();
        run.n_trees = self.n_trees;
        run.tuning_trees = tuning_trees;
        run.grid = build_grid(
            &max_features,
            &self.grid_min_samples_leaf,
            &self.grid_max_samples,
            tuning_trees,
        );
        run.folds = self.folds;
        run.tuning_metric = match self.tuning_metric.as_str() {
            "balanced_accuracy" => TuningMetric::BalancedAccuracy,
            "auc" => TuningMetric::Auc,
            m => return Err(bad(format!("tuning_metric `{m}` is neither balanced_accuracy nor auc"))),
        };
        run.simulated_per_class = self.simulated_per_class;
        run.imputation_sweeps = self.imputation_sweeps;
        run.smote_k = self.smote_k;
        Ok(run)
    }
}

/// Reads, resolves and converts a config file. `out_override` replaces
/// `out_dir` (after resolution against the working directory).
pub fn load_config(path: &Path, out_override: Option<&Path>) -> CliResult<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    let mut file = FileConfig::from_toml(&text, path)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    file.resolve_paths(&base);
    if let Some(out) = out_override {
        file.out_dir = absolute(Path::new("."), out);
    }
    if file.tuning_trees.is_none() {
        file.tuning_trees = Some(file.n_trees);
    }
    if let Some(v) = &file.artifact_version {
        if v != ARTIFACT_VERSION {
            log::warn!("config was written by version {v}, running {ARTIFACT_VERSION}");
        }
    }
    file.artifact_version = Some(ARTIFACT_VERSION.into());
    let run = file.to_run_config(path)?;
    Ok(LoadedConfig { file, run })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset = "data.csv"
schema = "schema.csv"
evidence_moments = "m.csv"
score_pre = "pre"
score_post = "post"
core_variables = ["a"]

[[approach]]
mode = "standard"

[[approach]]
mode = "hybrid"
dataset = "all_features"
weight = 0.5
"#;

    #[test]
    fn defaults_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, MINIMAL).unwrap();
        let cfg = load_config(&p, None).unwrap();
        assert!(cfg.file.dataset.is_absolute());
        assert_eq!(cfg.file.dataset.file_name().unwrap(), "data.csv");
        assert_eq!(cfg.run.iterations, 100);
        assert_eq!(cfg.run.n_trees, 200);
        assert_eq!(cfg.run.grid.len(), 48);
        assert_eq!(cfg.run.approaches[1].id, "all_features_w50");
        assert_eq!(cfg.run.approaches[1].balancing, Balancing::Smote);
    }

    #[test]
    fn manifest_reloads_to_same_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, MINIMAL).unwrap();
        let cfg = load_config(&p, None).unwrap();
        let m = dir.path().join("sub").join("manifest.toml");
        std::fs::create_dir_all(m.parent().unwrap()).unwrap();
        std::fs::write(&m, cfg.file.to_toml().unwrap()).unwrap();
        let again = load_config(&m, None).unwrap();
        assert_eq!(again.file, cfg.file);
        assert_eq!(again.run, cfg.run);
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, format!("bogus = 1\n{MINIMAL}")).unwrap();
        assert_eq!(load_config(&p, None).unwrap_err().stage, CliStage::Parse);
    }
}
