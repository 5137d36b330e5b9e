//! Monte Carlo cross validation over standard and hybrid approaches.
//!
//! Each iteration draws a fresh random train/test split and reruns the whole
//! pipeline on the training rows only: outcome labeling reference, one-hot
//! encoding, imputation, simulation, balancing, tuning and fitting. The test
//! rows are touched once, at evaluation.
//!
//! All randomness of iteration `i` comes from `seed_i = iteration_seed(master, i)`
//! through the labeled substreams `split`, `smote`, `simulate/<dataset>`,
//! `tune/<training set>` and `fit`. Every approach shares the `fit` stream,
//! so a weight-0 hybrid and the standard forest grow identical trees.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::cohort::{self, nearest_psd, simulate_cohort, PSD_EPS};
use crate::data::{NumericTable, TabularDataset};
use crate::error::{Error, Result, Stage};
use crate::evidence::{build_class_distribution, pool_moments, EvidenceSet};
use crate::forest::{
    self, fit_forest, fit_hybrid, grid_search, ForestParams, HybridForest, HybridPlan,
    TrainingData, TuningMetric,
};
use crate::linalg::{self, Matrix};
use crate::metrics::{self, auroc, corrected_resampled_ttest, ComparisonResult};
use crate::preprocess::{
    self, apply_imputer, fit_imputer, label_dataset, label_remission, label_response, one_hot_encode,
    OutcomeMode, OutcomeSpec, UnseenCategory,
};
use crate::rng::{self, iteration_seed, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproachMode {
    Standard,
    Hybrid,
}

/// Feature space of a simulated cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationDataset {
    /// The core literature variables only.
    FeaturesOfInterest,
    /// Core plus extra literature variables.
    FeaturesPlusExtra,
    /// Every real feature; core variables from the literature, the rest
    /// from the training split.
    AllFeatures,
    /// Every real feature; core and extra variables from the literature.
    AllFeaturesPlusExtra,
}

impl SimulationDataset {
    pub const ALL: [SimulationDataset; 4] = [
        SimulationDataset::FeaturesOfInterest,
        SimulationDataset::FeaturesPlusExtra,
        SimulationDataset::AllFeatures,
        SimulationDataset::AllFeaturesPlusExtra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimulationDataset::FeaturesOfInterest => "features_of_interest",
            SimulationDataset::FeaturesPlusExtra => "features_plus_extra",
            SimulationDataset::AllFeatures => "all_features",
            SimulationDataset::AllFeaturesPlusExtra => "all_features_plus_extra",
        }
    }

    pub fn uses_extra(self) -> bool {
        matches!(
            self,
            SimulationDataset::FeaturesPlusExtra | SimulationDataset::AllFeaturesPlusExtra
        )
    }

    pub fn covers_all_features(self) -> bool {
        matches!(
            self,
            SimulationDataset::AllFeatures | SimulationDataset::AllFeaturesPlusExtra
        )
    }
}

impl FromStr for SimulationDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimulationDataset::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown simulation dataset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Balancing {
    Smote,
    None,
}

impl Balancing {
    pub fn as_str(self) -> &'static str {
        match self {
            Balancing::Smote => "smote",
            Balancing::None => "none",
        }
    }
}

impl FromStr for Balancing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "smote" => Ok(Balancing::Smote),
            "none" => Ok(Balancing::None),
            other => Err(Error::InvalidConfig(format!(
                "balancing `{other}` is neither smote nor none"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Approach {
    pub id: String,
    pub mode: ApproachMode,
    /// Set iff `mode` is hybrid.
    pub dataset: Option<SimulationDataset>,
    /// Pretrained-to-fine-tuned tree ratio; ignored for standard forests.
    pub weight: f64,
    pub balancing: Balancing,
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| (*w).to_string())
}

impl Approach {
    pub fn standard(balancing: Balancing) -> Self {
        let id = match balancing {
            Balancing::Smote => "standard".to_string(),
            Balancing::None => "standard_unbalanced".to_string(),
        };
        Approach {
            id,
            mode: ApproachMode::Standard,
            dataset: None,
            weight: 0.0,
            balancing,
        }
    }

    pub fn hybrid(dataset: SimulationDataset, weight: f64, balancing: Balancing) -> Self {
        let mut id = format!("{}_w{}", dataset.as_str(), libm::round(weight * 100.0) as i64);
        if balancing == Balancing::None {
            id.push_str("_unbalanced");
        }
        Approach {
            id,
            mode: ApproachMode::Hybrid,
            dataset: Some(dataset),
            weight,
            balancing,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn is_hybrid(&self) -> bool {
        self.mode == ApproachMode::Hybrid
    }

    /// Human-readable row name for summary tables, e.g.
    /// "six features simulated, 20% weight".
    pub fn label(&self, n_core: usize, n_extra: usize) -> String {
        let base = match (self.mode, self.dataset) {
            (ApproachMode::Standard, _) | (_, None) => "Standard".to_string(),
            (ApproachMode::Hybrid, Some(d)) => {
                let what = match d {
                    SimulationDataset::FeaturesOfInterest => {
                        format!("{} features simulated", number_word(n_core))
                    }
                    SimulationDataset::FeaturesPlusExtra => {
                        format!("{} features simulated", number_word(n_core + n_extra))
                    }
                    SimulationDataset::AllFeatures => "all features simulated".to_string(),
                    SimulationDataset::AllFeaturesPlusExtra => {
                        format!("all features simulated ({} from literature)", number_word(n_core + n_extra))
                    }
                };
                format!("{what}, {}% weight", libm::round(self.weight * 100.0) as i64)
            }
        };
        match self.balancing {
            Balancing::Smote => base,
            Balancing::None => format!("{base} (unbalanced)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub test_fraction: f64,
    pub master_seed: u64,
    pub approaches: Vec<Approach>,
    pub outcome: OutcomeSpec,
    /// Evidence group name of class 1 and class 0.
    pub positive_group: String,
    pub negative_group: String,
    /// Literature variables simulated in every hybrid approach.
    pub core_variables: Vec<String>,
    /// Literature variables added by the `*_plus_extra` datasets.
    pub extra_variables: Vec<String>,
    /// Total trees per fitted forest.
    pub n_trees: usize,
    /// Trees per forest during grid search.
    pub tuning_trees: usize,
    pub grid: Vec<ForestParams>,
    pub folds: usize,
    pub tuning_metric: TuningMetric,
    pub simulated_per_class: usize,
    pub imputation_sweeps: usize,
    pub smote_k: usize,
}

impl RunConfig {
    pub const DEFAULT_ITERATIONS: usize = 100;
    pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
    pub const DEFAULT_TREES: usize = 200;
    pub const DEFAULT_FOLDS: usize = 5;
    pub const DEFAULT_SIMULATED_PER_CLASS: usize = 500;

    pub fn new(outcome: OutcomeSpec, core_variables: Vec<String>, approaches: Vec<Approach>) -> Self {
        RunConfig {
            iterations: Self::DEFAULT_ITERATIONS,
            test_fraction: Self::DEFAULT_TEST_FRACTION,
            master_seed: 0,
            approaches,
            outcome,
            positive_group: "responder".into(),
            negative_group: "non_responder".into(),
            core_variables,
            extra_variables: Vec::new(),
            n_trees: Self::DEFAULT_TREES,
            tuning_trees: Self::DEFAULT_TREES,
            grid: forest::default_grid(Self::DEFAULT_TREES),
            folds: Self::DEFAULT_FOLDS,
            tuning_metric: TuningMetric::BalancedAccuracy,
            simulated_per_class: Self::DEFAULT_SIMULATED_PER_CLASS,
            imputation_sweeps: preprocess::DEFAULT_SWEEPS,
            smote_k: preprocess::DEFAULT_K_NEIGHBORS,
        }
    }

    /// Literature variables of a simulation dataset, in simulation order.
    pub fn literature_variables(&self, dataset: SimulationDataset) -> Vec<String> {
        let mut v = self.core_variables.clone();
        if dataset.uses_extra() {
            v.extend(self.extra_variables.iter().cloned());
        }
        v
    }

    pub fn approach(&self, id: &str) -> Option<&Approach> {
        self.approaches.iter().find(|a| a.id == id)
    }

    /// Every problem in the configuration itself, without looking at data.
    pub fn findings(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if self.iterations < 2 {
            out.push(Error::InsufficientIterations(self.iterations));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            out.push(Error::InvalidConfig(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if let Err(e) = self.outcome.validate() {
            out.push(e);
        }
        if self.approaches.is_empty() {
            out.push(Error::InvalidConfig("no approaches configured".into()));
        }
        for (i, a) in self.approaches.iter().enumerate() {
            if self.approaches[..i].iter().any(|b| b.id == a.id) {
                out.push(Error::InvalidConfig(format!("duplicate approach id `{}`", a.id)));
            }
            if !(a.weight >= 0.0) || !a.weight.is_finite() {
                out.push(Error::InvalidWeight(a.weight));
            }
            if a.is_hybrid() && a.dataset.is_none() {
                out.push(Error::InvalidConfig(format!(
                    "hybrid approach `{}` has no simulation dataset",
                    a.id
                )));
            }
            if a.dataset.is_some_and(SimulationDataset::uses_extra) && self.extra_variables.is_empty() {
                out.push(Error::InvalidConfig(format!(
                    "approach `{}` needs extra variables, none configured",
                    a.id
                )));
            }
        }
        if self.approaches.iter().any(Approach::is_hybrid) && self.core_variables.is_empty() {
            out.push(Error::InvalidConfig("hybrid approaches need core variables".into()));
        }
        let mut lit = self.core_variables.clone();
        lit.extend(self.extra_variables.iter().cloned());
        for (i, v) in lit.iter().enumerate() {
            if lit[..i].contains(v) {
                out.push(Error::InvalidConfig(format!("literature variable `{v}` listed twice")));
            }
            if *v == self.outcome.score_post {
                out.push(Error::InvalidConfig(format!(
                    "literature variable `{v}` is the post-treatment outcome score"
                )));
            }
        }
        if self.positive_group == self.negative_group {
            out.push(Error::InvalidConfig("positive and negative group names coincide".into()));
        }
        if self.n_trees == 0 || self.tuning_trees == 0 {
            out.push(Error::InvalidConfig("tree counts must be >= 1".into()));
        }
        if self.grid.is_empty() {
            out.push(Error::InvalidConfig("empty hyperparameter grid".into()));
        }
        for p in &self.grid {
            if let Err(e) = p.validate() {
                out.push(e);
            }
        }
        if self.folds < 2 {
            out.push(Error::InvalidConfig(format!("folds = {} must be >= 2", self.folds)));
        }
        if self.simulated_per_class < 2 {
            out.push(Error::InvalidConfig("simulated_per_class must be >= 2".into()));
        }
        if self.imputation_sweeps == 0 {
            out.push(Error::InvalidConfig("imputation_sweeps must be >= 1".into()));
        }
        if self.smote_k == 0 {
            out.push(Error::InvalidConfig("smote_k must be >= 1".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.findings().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Configuration, evidence and data cross-checks: variables missing from
/// the schema or evidence, absent moments, outcome columns.
pub fn input_findings(config: &RunConfig, evidence: &EvidenceSet, data: &TabularDataset) -> Vec<Error> {
    let mut out = config.findings();
    for v in [&config.outcome.score_pre, &config.outcome.score_post] {
        match data.schema.get(v) {
            None => out.push(Error::SchemaMismatch(format!("outcome variable `{v}` not in the dataset"))),
            Some(f) if f.is_categorical() => out.push(Error::SchemaMismatch(format!(
                "outcome variable `{v}` must be continuous"
            ))),
            _ => {}
        }
    }
    let needed: Vec<&SimulationDataset> = config.approaches.iter().filter_map(|a| a.dataset.as_ref()).collect();
    if needed.is_empty() {
        return out;
    }
    for g in [&config.positive_group, &config.negative_group] {
        if !evidence.groups().contains(g) {
            out.push(Error::InvalidEvidence(format!(
                "group `{g}` not in evidence groups {:?}",
                evidence.groups()
            )));
        }
    }
    let mut lit = config.core_variables.clone();
    if needed.iter().any(|d| d.uses_extra()) {
        lit.extend(config.extra_variables.iter().cloned());
    }
    for v in &lit {
        match data.schema.get(v) {
            None => out.push(Error::SchemaMismatch(format!(
                "literature variable `{v}` not in the dataset"
            ))),
            Some(f) if f.is_categorical() => out.push(Error::SchemaMismatch(format!(
                "literature variable `{v}` must be continuous"
            ))),
            _ => {}
        }
        if !evidence.variables().contains(v) {
            out.push(Error::MissingEvidence {
                variable: v.clone(),
                group: config.positive_group.clone(),
            });
            continue;
        }
        for g in [&config.positive_group, &config.negative_group] {
            if evidence.groups().contains(g) {
                if let Err(e) = pool_moments(evidence, v, g) {
                    out.push(e);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub approach: String,
    pub iteration: usize,
    pub balanced_accuracy: f64,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Real training rows before balancing.
    pub n_train: usize,
    pub n_test: usize,
    /// `seed_i` of the iteration.
    pub seed: u64,
}

/// Hyperparameters chosen by grid search for one training set.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningRecord {
    pub iteration: usize,
    /// `real`, `real+smote` or `sim/<dataset>`.
    pub training_set: String,
    pub best: ForestParams,
    pub score: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MccvReport {
    pub approaches: Vec<Approach>,
    /// Approach-major, then iteration.
    pub records: Vec<MetricsRecord>,
    pub tuning: Vec<TuningRecord>,
    pub iterations: usize,
    pub master_seed: u64,
    /// Rows with a usable outcome, and rows dropped for a missing one.
    pub n_rows: usize,
    pub n_dropped: usize,
    pub encoding_warnings: Vec<UnseenCategory>,
}

impl MccvReport {
    pub fn records_for<'a>(&'a self, approach: &'a str) -> impl Iterator<Item = &'a MetricsRecord> + 'a {
        self.records.iter().filter(move |r| r.approach == approach)
    }
}

/// Data shared by every iteration.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Encoded features of the usable rows (outcome post score removed).
    pub encoded: NumericTable,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    pub dropped: usize,
    pub warnings: Vec<UnseenCategory>,
}

/// Validates inputs, drops rows without an outcome and encodes features.
pub fn prepare(config: &RunConfig, evidence: &EvidenceSet, data: &TabularDataset) -> Result<Prepared> {
    if let Some(e) = input_findings(config, evidence, data).into_iter().next() {
        return Err(e);
    }
    let label = |e: Error| e.in_context(Stage::Label, "", 0);
    let labeled = label_dataset(data, &config.outcome).map_err(label)?;
    let pre_all = data.numeric_column(&config.outcome.score_pre).map_err(label)?;
    let post_all = data.numeric_column(&config.outcome.score_post).map_err(label)?;
    let kept: Vec<usize> = (0..data.len())
        .filter(|i| labeled.dropped.binary_search(i).is_err())
        .collect();
    let encoded = one_hot_encode(&labeled.data).map_err(label)?;
    Ok(Prepared {
        encoded: encoded.table,
        pre: kept.iter().map(|&i| pre_all[i].expect("kept rows are complete")).collect(),
        post: kept.iter().map(|&i| post_all[i].expect("kept rows are complete")).collect(),
        dropped: labeled.dropped.len(),
        warnings: encoded.warnings,
    })
}

/// Train and test row indices of one iteration, each sorted ascending.
/// The test set holds `round(test_fraction · n)` rows, clamped to `[1, n - 1]`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} rows cannot be split")));
    }
    let n_test = (libm::round(test_fraction * n as f64) as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::rng_from(substream(seed, "split")), &mut order);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Labels of all usable rows, with the reliable-change reference SD taken
/// from the training rows only.
pub fn iteration_labels(prepared: &Prepared, spec: &OutcomeSpec, train: &[usize]) -> Result<Vec<u8>> {
    match spec.mode {
        OutcomeMode::Remission => Ok(prepared.post.iter().map(|&p| label_remission(p, spec)).collect()),
        OutcomeMode::Response => {
            let vals: Vec<f64> = train.iter().map(|&i| prepared.pre[i]).collect();
            let n = vals.len() as f64;
            if vals.len() < 2 {
                return Err(Error::InsufficientData("fewer than 2 training rows".into()));
            }
            let mean = vals.iter().sum::<f64>() / n;
            let sd = libm::sqrt(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0));
            prepared
                .pre
                .iter()
                .zip(&prepared.post)
                .map(|(&a, &b)| label_response(a, b, spec, sd))
                .collect()
        }
    }
}

/// Everything one iteration produced.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub iteration: usize,
    /// In configuration order.
    pub records: Vec<MetricsRecord>,
    pub tuning: Vec<TuningRecord>,
    /// `(approach id, forest dump)` when requested.
    pub models: Vec<(String, String)>,
}

struct Tuned {
    params: ForestParams,
}

struct IterationState<'a> {
    config: &'a RunConfig,
    evidence: &'a EvidenceSet,
    iteration: usize,
    seed: u64,
    train: NumericTable,
    y_train: Vec<u8>,
    tuning: Vec<TuningRecord>,
    balanced: Vec<(Balancing, Matrix, Vec<u8>)>,
    simulated: Vec<(SimulationDataset, Matrix, Vec<u8>, Option<Vec<usize>>)>,
    tuned: Vec<(String, Tuned)>,
}

impl IterationState<'_> {
    fn real_set(&mut self, balancing: Balancing) -> Result<usize> {
        if let Some(i) = self.balanced.iter().position(|b| b.0 == balancing) {
            return Ok(i);
        }
        let (x, y) = match balancing {
            Balancing::None => (self.train.values.clone(), self.y_train.clone()),
            Balancing::Smote => {
                let mut rng = rng::rng_from(substream(self.seed, "smote"));
                let b = preprocess::smotenc_numeric(
                    &self.train.values,
                    &self.y_train,
                    &self.train.categorical,
                    self.config.smote_k,
                    &mut rng,
                )?;
                (b.x, b.y)
            }
        };
        self.balanced.push((balancing, x, y));
        Ok(self.balanced.len() - 1)
    }

    fn simulated_set(&mut self, dataset: SimulationDataset) -> Result<usize> {
        if let Some(i) = self.simulated.iter().position(|s| s.0 == dataset) {
            return Ok(i);
        }
        let config = self.config;
        let lit_vars = config.literature_variables(dataset);
        let evidence = self.evidence.select(&lit_vars)?;
        let lit_cols = self.train.indices_of(&lit_vars)?;
        let mut dists = Vec::with_capacity(2);
        for (label, group) in [(1u8, &config.positive_group), (0u8, &config.negative_group)] {
            let rows: Vec<usize> = (0..self.y_train.len()).filter(|&i| self.y_train[i] == label).collect();
            let class_train = self.train.select_rows(&rows);
            let fallback = if rows.len() >= 2 {
                Some(linalg::sample_covariance(&class_train.values.select_columns(&lit_cols))?)
            } else {
                None
            };
            let lit = build_class_distribution(&evidence, group, fallback.as_ref())?;
            let dist = if dataset.covers_all_features() {
                cohort::extend_all_features(&lit, &class_train, &self.train.columns)?
            } else {
                let mut d = lit;
                d.sigma = nearest_psd(&d.sigma, PSD_EPS)?;
                d
            };
            dists.push(dist);
        }
        let mut rng = rng::rng_from(substream(self.seed, &format!("simulate/{}", dataset.as_str())));
        let cohort = simulate_cohort(&dists[0], &dists[1], config.simulated_per_class, &mut rng)?;
        let projection = if dataset.covers_all_features() {
            None
        } else {
            Some(lit_cols)
        };
        self.simulated
            .push((dataset, cohort.features, cohort.labels, projection));
        Ok(self.simulated.len() - 1)
    }

    fn tune(&mut self, key: &str, x: &Matrix, y: &[u8]) -> Result<ForestParams> {
        if let Some((_, t)) = self.tuned.iter().find(|(k, _)| k == key) {
            return Ok(t.params);
        }
        let minority = y.iter().filter(|&&l| l == 1).count().min(y.iter().filter(|&&l| l == 0).count());
        if minority == 0 {
            return Err(Error::SingleClass);
        }
        let folds = self.config.folds.min(minority);
        if folds < 2 {
            return Err(Error::InsufficientData(format!(
                "training set `{key}` has {minority} minority row(s), grid search needs 2"
            )));
        }
        let grid: Vec<ForestParams> = self
            .config
            .grid
            .iter()
            .map(|p| ForestParams {
                n_trees: self.config.tuning_trees,
                ..*p
            })
            .collect();
        let seed = substream(self.seed, &format!("tune/{key}"));
        let result = grid_search(x, y, &grid, folds, self.config.tuning_metric, seed)?;
        let params = ForestParams {
            n_trees: self.config.n_trees,
            ..result.best
        };
        self.tuning.push(TuningRecord {
            iteration: self.iteration,
            training_set: key.to_string(),
            best: params,
            score: result.scores[result.best_index],
            folds,
        });
        self.tuned.push((key.to_string(), Tuned { params }));
        Ok(params)
    }

    fn fit(&mut self, approach: &Approach) -> Result<HybridForest> {
        let iteration = self.iteration;
        let ctx = |stage: Stage| move |e: Error| e.in_context(stage, &approach.id, iteration);
        let real_idx = self.real_set(approach.balancing).map_err(ctx(Stage::Fit))?;
        let (_, rx, ry) = self.balanced[real_idx].clone();
        let real_key = match approach.balancing {
            Balancing::None => "real",
            Balancing::Smote => "real+smote",
        };
        let params_real = self.tune(real_key, &rx, &ry).map_err(ctx(Stage::Fit))?;
        let fit_seed = substream(self.seed, "fit");
        match (approach.mode, approach.dataset) {
            (ApproachMode::Hybrid, Some(dataset)) => {
                let sim_idx = self.simulated_set(dataset).map_err(ctx(Stage::Simulate))?;
                let (_, sx, sy, projection) = self.simulated[sim_idx].clone();
                let key = format!("sim/{}", dataset.as_str());
                let params_sim = self.tune(&key, &sx, &sy).map_err(ctx(Stage::Fit))?;
                let plan = HybridPlan {
                    weight: approach.weight,
                    total_trees: self.config.n_trees,
                    params_sim,
                    params_real,
                    projection,
                };
                fit_hybrid(TrainingData::new(&sx, &sy), TrainingData::new(&rx, &ry), &plan, fit_seed)
                    .map_err(ctx(Stage::Fit))
            }
            _ => fit_forest(&rx, &ry, &params_real, fit_seed).map_err(ctx(Stage::Fit)),
        }
    }
}

/// Runs iteration `iteration`. Independent of every other iteration, so
/// callers may run iterations in any order or in parallel.
pub fn run_iteration(
    config: &RunConfig,
    evidence: &EvidenceSet,
    prepared: &Prepared,
    iteration: usize,
    keep_models: bool,
) -> Result<IterationOutcome> {
    let seed = iteration_seed(config.master_seed, iteration);
    let n = prepared.encoded.rows();
    let any = config.approaches.first().map_or("", |a| a.id.as_str());
    let (train_idx, test_idx) =
        split_indices(n, config.test_fraction, seed).map_err(|e| e.in_context(Stage::Fit, any, iteration))?;
    let labels = iteration_labels(prepared, &config.outcome, &train_idx)
        .map_err(|e| e.in_context(Stage::Label, any, iteration))?;
    let y_train: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();

    let raw_train = prepared.encoded.select_rows(&train_idx);
    let raw_test = prepared.encoded.select_rows(&test_idx);
    let fit_ctx = |e: Error| e.in_context(Stage::Fit, any, iteration);
    let imputer = fit_imputer(&raw_train, config.imputation_sweeps).map_err(fit_ctx)?;
    let train = apply_imputer(&imputer, &raw_train).map_err(fit_ctx)?;
    let test = apply_imputer(&imputer, &raw_test).map_err(fit_ctx)?;

    let mut state = IterationState {
        config,
        evidence,
        iteration,
        seed,
        train,
        y_train,
        tuning: Vec::new(),
        balanced: Vec::new(),
        simulated: Vec::new(),
        tuned: Vec::new(),
    };
    let mut records = Vec::with_capacity(config.approaches.len());
    let mut models = Vec::new();
    for approach in &config.approaches {
        let forest = state.fit(approach)?;
        let eval = |e: Error| e.in_context(Stage::Evaluate, &approach.id, iteration);
        let scores = forest::score_rows(&forest, &test.values).map_err(eval)?;
        let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
        let c = metrics::confusion(&y_test, &pred).map_err(eval)?;
        let sensitivity = c.sensitivity().map_err(eval)?;
        let specificity = c.specificity().map_err(eval)?;
        records.push(MetricsRecord {
            approach: approach.id.clone(),
            iteration,
            balanced_accuracy: metrics::balanced_accuracy(sensitivity, specificity),
            auc: auroc(&y_test, &scores).map_err(eval)?,
            sensitivity,
            specificity,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            seed,
        });
        if keep_models {
            models.push((approach.id.clone(), forest.dump()));
        }
    }
    Ok(IterationOutcome {
        iteration,
        records,
        tuning: state.tuning,
        models,
    })
}

impl MccvReport {
    /// Collects iteration outcomes (in any order) into a report ordered by
    /// approach, then iteration.
    pub fn assemble(config: &RunConfig, prepared: &Prepared, mut outcomes: Vec<IterationOutcome>) -> Result<Self> {
        outcomes.sort_by_key(|o| o.iteration);
        if outcomes.len() != config.iterations
            || outcomes.iter().enumerate().any(|(i, o)| o.iteration != i)
        {
            return Err(Error::Pairing(format!(
                "expected iterations 0..{}, got {} outcomes",
                config.iterations,
                outcomes.len()
            )));
        }
        let mut records = Vec::with_capacity(config.iterations * config.approaches.len());
        for a in &config.approaches {
            for o in &outcomes {
                records.extend(o.records.iter().filter(|r| r.approach == a.id).cloned());
            }
        }
        let tuning = outcomes.iter().flat_map(|o| o.tuning.iter().cloned()).collect();
        Ok(MccvReport {
            approaches: config.approaches.clone(),
            records,
            tuning,
            iterations: config.iterations,
            master_seed: config.master_seed,
            n_rows: prepared.encoded.rows(),
            n_dropped: prepared.dropped,
            encoding_warnings: prepared.warnings.clone(),
        })
    }
}

/// Sequential MCCV run.
pub fn mccv_run(config: &RunConfig, evidence: &EvidenceSet, data: &TabularDataset) -> Result<MccvReport> {
    let prepared = prepare(config, evidence, data)?;
    let outcomes = (0..config.iterations)
        .map(|i| run_iteration(config, evidence, &prepared, i, false))
        .collect::<Result<Vec<_>>>()?;
    MccvReport::assemble(config, &prepared, outcomes)
}

fn paired_scores(report: &MccvReport, approach: &str) -> Vec<(usize, f64, usize, usize)> {
    report
        .records_for(approach)
        .map(|r| (r.iteration, r.balanced_accuracy, r.n_train, r.n_test))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Compares the best hybrid approach (highest mean balanced accuracy among
/// hybrids sharing the baseline's balancing; earlier approaches win ties)
/// against `baseline` with the corrected resampled t-test on per-iteration
/// balanced-accuracy differences.
pub fn compare_best(report: &MccvReport, baseline: &str) -> Result<ComparisonResult> {
    let base = report
        .approaches
        .iter()
        .find(|a| a.id == baseline)
        .ok_or_else(|| Error::Pairing(format!("baseline `{baseline}` not in report")))?;
    let base_scores = paired_scores(report, baseline);
    let mut best: Option<(&Approach, f64)> = None;
    for a in report
        .approaches
        .iter()
        .filter(|a| a.is_hybrid() && a.balancing == base.balancing)
    {
        let s: Vec<f64> = report.records_for(&a.id).map(|r| r.balanced_accuracy).collect();
        if s.is_empty() {
            continue;
        }
        let m = mean(&s);
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((a, m));
        }
    }
    let (chosen, _) = best.ok_or_else(|| {
        Error::Pairing(format!(
            "no pretrained approach with balancing `{}` to compare against `{baseline}`",
            base.balancing.as_str()
        ))
    })?;
    let cand = paired_scores(report, &chosen.id);
    if cand.len() != base_scores.len() || cand.iter().zip(&base_scores).any(|(a, b)| a.0 != b.0) {
        return Err(Error::Pairing(format!(
            "`{}` and `{baseline}` cover different iterations",
            chosen.id
        )));
    }
    let diffs: Vec<f64> = cand.iter().zip(&base_scores).map(|(a, b)| a.1 - b.1).collect();
    let (n_train, n_test) = base_scores.first().map_or((1, 0), |b| (b.2, b.3));
    let mut result = corrected_resampled_ttest(&diffs, n_train, n_test)?;
    result.approach_a = chosen.id.clone();
    result.approach_b = baseline.to_string();
    Ok(result)
}

/// Mean and sample SD of each metric for one approach.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachSummary {
    pub approach: String,
    pub label: String,
    pub iterations: usize,
    /// Balanced accuracy, AUC, sensitivity, specificity.
    pub mean: [f64; 4],
    pub sd: [f64; 4],
}

pub const METRIC_NAMES: [&str; 4] = ["balanced_accuracy", "auc", "sensitivity", "specificity"];

pub fn summarize(report: &MccvReport, n_core: usize, n_extra: usize) -> Vec<ApproachSummary> {
    report
        .approaches
        .iter()
        .map(|a| {
            let rows: Vec<&MetricsRecord> = report.records_for(&a.id).collect();
            let k = rows.len() as f64;
            let mut m = [0.0; 4];
            let mut sd = [0.0; 4];
            for (j, slot) in m.iter_mut().enumerate() {
                let v: Vec<f64> = rows.iter().map(|r| metric(r, j)).collect();
                *slot = mean(&v);
                sd[j] = if rows.len() > 1 {
                    libm::sqrt(v.iter().map(|x| (x - *slot) * (x - *slot)).sum::<f64>() / (k - 1.0))
                } else {
                    0.0
                };
            }
            ApproachSummary {
                approach: a.id.clone(),
                label: a.label(n_core, n_extra),
                iterations: rows.len(),
                mean: m,
                sd,
            }
        })
        .collect()
}

fn metric(r: &MetricsRecord, j: usize) -> f64 {
    match j {
        0 => r.balanced_accuracy,
        1 => r.auc,
        2 => r.sensitivity,
        _ => r.specificity,
    }
}
