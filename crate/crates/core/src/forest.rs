//! CART trees, random and hybrid forests, and grid search.
//!
//! A hybrid forest holds trees of two provenances: *pretrained* trees grown
//! on a simulated cohort and *fine-tuned* trees grown on the real training
//! split. Predictions average the leaf fractions of all trees with equal
//! weight, so the ratio of tree counts is the only knob that sets how much
//! the simulated data matters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    Fixed(usize),
    All,
}

impl MaxFeatures {
    /// Features considered per split for `p` available features.
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => libm::floor(libm::sqrt(p as f64)) as usize,
            MaxFeatures::Log2 => libm::floor(libm::log2(p as f64)) as usize,
            MaxFeatures::Fixed(k) => k,
            MaxFeatures::All => p,
        };
        k.clamp(1, p.max(1))
    }
}

impl core::fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::Log2 => f.write_str("log2"),
            MaxFeatures::Fixed(k) => write!(f, "{k}"),
            MaxFeatures::All => f.write_str("all"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            "all" => Ok(MaxFeatures::All),
            other => match other.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(MaxFeatures::Fixed(k)),
                _ => Err(Error::InvalidConfig(format!(
                    "max_features `{other}` is not sqrt, log2, all or a positive integer"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    /// Rows drawn (with replacement) per tree, as a fraction of the data.
    pub max_samples_fraction: f64,
    pub n_trees: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            max_samples_fraction: 1.0,
            n_trees: 200,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        if !(self.max_samples_fraction > 0.0 && self.max_samples_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "max_samples_fraction {} outside (0, 1]",
                self.max_samples_fraction
            )));
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
        }
        Ok(())
    }
}

pub const GRID_MAX_FEATURES: [MaxFeatures; 4] = [
    MaxFeatures::Sqrt,
    MaxFeatures::Log2,
    MaxFeatures::Fixed(4),
    MaxFeatures::Fixed(5),
];
pub const GRID_MIN_SAMPLES_LEAF: [usize; 4] = [1, 3, 5, 10];
pub const GRID_MAX_SAMPLES: [f64; 3] = [0.66, 0.80, 1.00];

/// Cartesian product of the given axes, max_features outermost.
pub fn build_grid(
    max_features: &[MaxFeatures],
    min_samples_leaf: &[usize],
    max_samples: &[f64],
    n_trees: usize,
) -> Vec<ForestParams> {
    let mut grid = Vec::with_capacity(max_features.len() * min_samples_leaf.len() * max_samples.len());
    for &mf in max_features {
        for &leaf in min_samples_leaf {
            for &frac in max_samples {
                grid.push(ForestParams {
                    max_features: mf,
                    min_samples_leaf: leaf,
                    max_samples_fraction: frac,
                    n_trees,
                });
            }
        }
    }
    grid
}

/// The 4 × 4 × 3 tuning grid.
pub fn default_grid(n_trees: usize) -> Vec<ForestParams> {
    build_grid(&GRID_MAX_FEATURES, &GRID_MIN_SAMPLES_LEAF, &GRID_MAX_SAMPLES, n_trees)
}

// ---------------------------------------------------------------------------
// Trees

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Positive-class fraction of the training rows in the leaf.
        fraction: f64,
        samples: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { fraction, .. } => return *fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { fraction, samples } => Some((*fraction, *samples)),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// `n · gini / 2` for a node with `n` rows, `pos` of them positive.
#[inline]
fn impurity(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (n, pos) = (n as f64, pos as f64);
    pos * (n - pos) / n
}

struct Grower<'a, R: Rng + ?Sized> {
    x: &'a Matrix,
    y: &'a [u8],
    mtry: usize,
    min_leaf: usize,
    rng: &'a mut R,
    features: Vec<usize>,
    pairs: Vec<(f64, u8)>,
}

impl<R: Rng + ?Sized> Grower<'_, R> {
    /// Best (feature, threshold) by weighted Gini, or `None` when no split
    /// with both children of at least `min_leaf` rows reduces impurity.
    fn best_split(&mut self, rows: &[usize], pos: usize) -> Option<(usize, f64)> {
        let n = rows.len();
        let p = self.features.len();
        let parent = impurity(n, pos);
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = parent - 1e-12 * n as f64;
        let mut visited = 0;
        for t in 0..p {
            let pick = self.rng.random_range(t..p);
            self.features.swap(t, pick);
            let f = self.features[t];
            self.pairs.clear();
            self.pairs
                .extend(rows.iter().map(|&r| (self.x[(r, f)], self.y[r])));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                // constant features do not count toward mtry
                continue;
            }
            visited += 1;
            let mut left_pos = 0;
            for i in 1..n {
                left_pos += usize::from(self.pairs[i - 1].1);
                if i < self.min_leaf || n - i < self.min_leaf {
                    continue;
                }
                let (a, b) = (self.pairs[i - 1].0, self.pairs[i].0);
                if a == b {
                    continue;
                }
                let score = impurity(i, left_pos) + impurity(n - i, pos - left_pos);
                if score < best_score {
                    best_score = score;
                    let mut mid = a * 0.5 + b * 0.5;
                    if mid >= b || mid < a {
                        mid = a;
                    }
                    best = Some((f, mid));
                }
            }
            if visited == self.mtry {
                break;
            }
        }
        best
    }

    fn grow(mut self, rows: Vec<usize>) -> DecisionTree {
        let mut nodes = vec![Node::Leaf {
            fraction: 0.0,
            samples: 0,
        }];
        let mut stack = vec![(0usize, rows)];
        while let Some((id, rows)) = stack.pop() {
            let n = rows.len();
            let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
            let leaf = Node::Leaf {
                fraction: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
                samples: n as u32,
            };
            if pos == 0 || pos == n || n < 2 * self.min_leaf {
                nodes[id] = leaf;
                continue;
            }
            match self.best_split(&rows, pos) {
                None => nodes[id] = leaf,
                Some((feature, threshold)) => {
                    let (left, right): (Vec<usize>, Vec<usize>) = rows
                        .into_iter()
                        .partition(|&r| self.x[(r, feature)] <= threshold);
                    let l = nodes.len();
                    nodes.push(Node::Leaf {
                        fraction: 0.0,
                        samples: 0,
                    });
                    nodes.push(Node::Leaf {
                        fraction: 0.0,
                        samples: 0,
                    });
                    nodes[id] = Node::Split {
                        feature: feature as u32,
                        threshold,
                        left: l as u32,
                        right: (l + 1) as u32,
                    };
                    stack.push((l + 1, right));
                    stack.push((l, left));
                }
            }
        }
        DecisionTree {
            nodes,
            n_features: self.x.cols(),
        }
    }
}

fn check_training_data(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyData);
    }
    if y.len() != x.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            y.len(),
            x.rows()
        )));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::Shape("labels must be 0 or 1".into()));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("training features must be finite".into()));
    }
    Ok(())
}

fn grow_tree<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[u8],
    rows: Vec<usize>,
    params: &ForestParams,
    rng: &mut R,
) -> DecisionTree {
    let p = x.cols();
    Grower {
        x,
        y,
        mtry: params.max_features.resolve(p),
        min_leaf: params.min_samples_leaf.max(1),
        rng,
        features: (0..p).collect(),
        pairs: Vec::with_capacity(rows.len()),
    }
    .grow(rows)
}

/// Grows one CART tree on every row of `x` (no resampling).
pub fn fit_tree<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[u8],
    params: &ForestParams,
    rng: &mut R,
) -> Result<DecisionTree> {
    check_training_data(x, y)?;
    params.validate()?;
    Ok(grow_tree(x, y, (0..x.rows()).collect(), params, rng))
}

/// Tree `index` of a forest seeded with `seed`: draws ⌈fraction·n⌉ rows with
/// replacement, then grows on them. Depends only on (data, params, seed, index).
pub fn fit_bootstrap_tree(
    x: &Matrix,
    y: &[u8],
    params: &ForestParams,
    seed: u64,
    index: usize,
) -> DecisionTree {
    let mut rng: SimRng = rng::rng_from(rng::derive(seed, index as u64));
    let n = x.rows();
    let m = (libm::ceil(params.max_samples_fraction * n as f64) as usize).clamp(1, n);
    let rows = (0..m).map(|_| rng.random_range(0..n)).collect();
    grow_tree(x, y, rows, params, &mut rng)
}

// ---------------------------------------------------------------------------
// Forests

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Pretrained,
    FineTuned,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Pretrained => "pretrained",
            Provenance::FineTuned => "fine_tuned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridForest {
    /// Pretrained trees first, then fine-tuned trees.
    trees: Vec<(DecisionTree, Provenance)>,
    n_pretrained: usize,
    n_fine_tuned: usize,
    n_features: usize,
    /// Real-space columns seen by pretrained trees, when they were grown on a
    /// projection of the real feature space.
    projection: Option<Vec<usize>>,
}

pub const DUMP_VERSION: u32 = 1;

impl HybridForest {
    pub fn trees(&self) -> &[(DecisionTree, Provenance)] {
        &self.trees
    }

    pub fn n_pretrained(&self) -> usize {
        self.n_pretrained
    }

    pub fn n_fine_tuned(&self) -> usize {
        self.n_fine_tuned
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn projection(&self) -> Option<&[usize]> {
        self.projection.as_deref()
    }

    /// Per-provenance sums of tree outputs for one row.
    pub fn provenance_sums(&self, row: &[f64]) -> Result<(f64, f64)> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch(format!(
                "row has {} features, forest expects {}",
                row.len(),
                self.n_features
            )));
        }
        let projected: Option<Vec<f64>> = self
            .projection
            .as_ref()
            .map(|cols| cols.iter().map(|&c| row[c]).collect());
        let mut pre = 0.0;
        let mut fine = 0.0;
        for (tree, prov) in &self.trees {
            match prov {
                Provenance::Pretrained => {
                    pre += tree.predict(projected.as_deref().unwrap_or(row));
                }
                Provenance::FineTuned => fine += tree.predict(row),
            }
        }
        Ok((pre, fine))
    }

    /// Flat text dump of every node, one line each.
    ///
    /// ```text
    /// simforest-forest v1
    /// n_features <p> n_pretrained <a> n_fine_tuned <b>
    /// projection <c0,c1,...|->
    /// tree <index> <pretrained|fine_tuned> nodes <count>
    /// <id> split <feature> <threshold> <left> <right>
    /// <id> leaf <fraction> <samples>
    /// ```
    /// Floats use the shortest representation that round-trips.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "simforest-forest v{DUMP_VERSION}");
        let _ = writeln!(
            s,
            "n_features {} n_pretrained {} n_fine_tuned {}",
            self.n_features, self.n_pretrained, self.n_fine_tuned
        );
        match &self.projection {
            None => s.push_str("projection -\n"),
            Some(cols) => {
                s.push_str("projection ");
                for (i, c) in cols.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{c}");
                }
                s.push('\n');
            }
        }
        for (t, (tree, prov)) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {t} {} nodes {}", prov.as_str(), tree.nodes.len());
            for (id, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "{id} split {feature} {threshold:?} {left} {right}"),
                    Node::Leaf { fraction, samples } => {
                        writeln!(s, "{id} leaf {fraction:?} {samples}")
                    }
                };
            }
        }
        s
    }
}

/// Probability of class 1: mean leaf fraction over all trees.
pub fn predict_proba(forest: &HybridForest, row: &[f64]) -> Result<f64> {
    if forest.is_empty() {
        return Err(Error::EmptyData);
    }
    let (pre, fine) = forest.provenance_sums(row)?;
    Ok((pre + fine) / forest.len() as f64)
}

/// 1 iff the averaged probability is strictly above 0.5.
pub fn classify(forest: &HybridForest, row: &[f64]) -> Result<u8> {
    Ok(u8::from(predict_proba(forest, row)? > 0.5))
}

/// `(n_pretrained, n_fine_tuned)` with `n_fine_tuned = round(total / (1 + weight))`,
/// halves rounded up.
pub fn split_tree_counts(total: usize, weight: f64) -> Result<(usize, usize)> {
    if !(weight >= 0.0) || !weight.is_finite() {
        return Err(Error::InvalidWeight(weight));
    }
    if total == 0 {
        return Err(Error::InvalidConfig("total tree count must be >= 1".into()));
    }
    let fine = libm::floor(total as f64 / (1.0 + weight) + 0.5) as usize;
    let fine = fine.min(total);
    Ok((total - fine, fine))
}

/// Borrowed labeled training matrix.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub x: &'a Matrix,
    pub y: &'a [u8],
}

impl<'a> TrainingData<'a> {
    pub fn new(x: &'a Matrix, y: &'a [u8]) -> Self {
        TrainingData { x, y }
    }
}

/// Standard random forest: every tree is fine-tuned. Tree `i` uses the
/// substream `derive(seed, i)`.
pub fn fit_forest(x: &Matrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<HybridForest> {
    check_training_data(x, y)?;
    params.validate()?;
    let trees = (0..params.n_trees)
        .map(|i| (fit_bootstrap_tree(x, y, params, seed, i), Provenance::FineTuned))
        .collect();
    Ok(HybridForest {
        trees,
        n_pretrained: 0,
        n_fine_tuned: params.n_trees,
        n_features: x.cols(),
        projection: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPlan {
    /// Ratio of pretrained to fine-tuned trees.
    pub weight: f64,
    pub total_trees: usize,
    pub params_sim: ForestParams,
    pub params_real: ForestParams,
    /// Real-space column for each simulated column, when the simulated data
    /// covers only a subset of the real features.
    pub projection: Option<Vec<usize>>,
}

/// Grows `n_pretrained` trees on `sim` and `n_fine_tuned` trees on `real`.
///
/// Trees are indexed globally, pretrained first: tree `i` uses substream
/// `derive(seed, i)`. With weight 0 the result is therefore identical to
/// [`fit_forest`] on `real` with the same seed, and with `sim == real` it
/// matches that forest tree for tree.
pub fn fit_hybrid(
    sim: TrainingData<'_>,
    real: TrainingData<'_>,
    plan: &HybridPlan,
    seed: u64,
) -> Result<HybridForest> {
    check_training_data(real.x, real.y)?;
    plan.params_real.validate()?;
    plan.params_sim.validate()?;
    let (n_pre, n_fine) = split_tree_counts(plan.total_trees, plan.weight)?;
    let p = real.x.cols();
    if n_pre > 0 {
        check_training_data(sim.x, sim.y)?;
        match &plan.projection {
            None if sim.x.cols() != p => {
                return Err(Error::SchemaMismatch(format!(
                    "simulated data has {} features, real data {p}",
                    sim.x.cols()
                )))
            }
            Some(cols) if cols.len() != sim.x.cols() || cols.iter().any(|&c| c >= p) => {
                return Err(Error::SchemaMismatch(format!(
                    "projection {cols:?} does not map {} simulated features into {p} real ones",
                    sim.x.cols()
                )))
            }
            _ => {}
        }
    }
    let mut trees = Vec::with_capacity(plan.total_trees);
    for i in 0..n_pre {
        trees.push((
            fit_bootstrap_tree(sim.x, sim.y, &plan.params_sim, seed, i),
            Provenance::Pretrained,
        ));
    }
    for i in n_pre..plan.total_trees {
        trees.push((
            fit_bootstrap_tree(real.x, real.y, &plan.params_real, seed, i),
            Provenance::FineTuned,
        ));
    }
    Ok(HybridForest {
        trees,
        n_pretrained: n_pre,
        n_fine_tuned: n_fine,
        n_features: p,
        projection: if n_pre > 0 { plan.projection.clone() } else { None },
    })
}

// ---------------------------------------------------------------------------
// Grid search

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TuningMetric {
    #[default]
    BalancedAccuracy,
    Auc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: ForestParams,
    pub best_index: usize,
    /// Mean validation score per grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Fold id for every row: each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = rng::rng_from(seed);
    let mut assignment = vec![0; y.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Stratification {
                fold: members.len(),
                class,
            });
        }
        rng::shuffle(&mut rng, &mut members);
        for (k, &i) in members.iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

/// Scores of held-out rows under a fitted forest.
pub fn score_rows(forest: &HybridForest, x: &Matrix) -> Result<Vec<f64>> {
    x.iter_rows().map(|r| predict_proba(forest, r)).collect()
}

fn validation_score(metric: TuningMetric, y: &[u8], scores: &[f64]) -> Result<f64> {
    match metric {
        TuningMetric::BalancedAccuracy => {
            let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
            metrics::confusion(y, &pred)?.balanced_accuracy()
        }
        TuningMetric::Auc => metrics::auroc(y, scores),
    }
}

/// Stratified `folds`-fold grid search. Every grid point sees the same folds
/// and the same per-fold forest seeds; the highest mean score wins, earlier
/// grid points winning ties.
pub fn grid_search(
    x: &Matrix,
    y: &[u8],
    grid: &[ForestParams],
    folds: usize,
    metric: TuningMetric,
    seed: u64,
) -> Result<GridSearchResult> {
    check_training_data(x, y)?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let assignment = stratified_folds(y, folds, rng::substream(seed, "folds"))?;
    let fit_seed = rng::substream(seed, "fold-fit");
    let splits: Vec<(Matrix, Vec<u8>, Matrix, Vec<u8>)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != f).collect();
            let valid: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == f).collect();
            (
                x.select_rows(&train),
                train.iter().map(|&i| y[i]).collect(),
                x.select_rows(&valid),
                valid.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();
    let mut scores = Vec::with_capacity(grid.len());
    for params in grid {
        let mut total = 0.0;
        for (f, (xt, yt, xv, yv)) in splits.iter().enumerate() {
            let forest = fit_forest(xt, yt, params, rng::derive(fit_seed, f as u64))?;
            let s = score_rows(&forest, xv)?;
            total += validation_score(metric, yv, &s)?;
        }
        scores.push(total / folds as f64);
    }
    let mut best_index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best: grid[best_index],
        best_index,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn params(mf: MaxFeatures, leaf: usize, frac: f64, n: usize) -> ForestParams {
        ForestParams {
            max_features: mf,
            min_samples_leaf: leaf,
            max_samples_fraction: frac,
            n_trees: n,
        }
    }

    #[test]
    fn tree_count_anchors() {
        assert_eq!(split_tree_counts(200, 0.20), Ok((33, 167)));
        assert_eq!(split_tree_counts(200, 1.00), Ok((100, 100)));
        assert_eq!(split_tree_counts(200, 0.50), Ok((67, 133)));
        assert_eq!(split_tree_counts(200, 0.00), Ok((0, 200)));
        assert_eq!(split_tree_counts(200, -0.1), Err(Error::InvalidWeight(-0.1)));
        // 3 / 2 = 1.5 rounds up to 2 fine-tuned trees
        assert_eq!(split_tree_counts(3, 1.0), Ok((1, 2)));
    }

    #[test]
    fn grid_has_48_points() {
        let g = default_grid(200);
        assert_eq!(g.len(), 48);
        assert_eq!(g[0], params(MaxFeatures::Sqrt, 1, 0.66, 200));
        assert_eq!(g[47], params(MaxFeatures::Fixed(5), 10, 1.0, 200));
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(30), 5);
        assert_eq!(MaxFeatures::Log2.resolve(30), 4);
        assert_eq!(MaxFeatures::Fixed(5).resolve(3), 3);
        assert_eq!(MaxFeatures::Log2.resolve(1), 1);
        assert_eq!("log2".parse::<MaxFeatures>(), Ok(MaxFeatures::Log2));
        assert_eq!("4".parse::<MaxFeatures>(), Ok(MaxFeatures::Fixed(4)));
        assert!("0".parse::<MaxFeatures>().is_err());
    }

    #[test]
    fn single_class_gives_single_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let t = fit_tree(&x, &[1, 1, 1], &ForestParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { fraction: 1.0, samples: 3 }]);
        let t = fit_tree(&x, &[0, 0, 0], &ForestParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(t.predict(&[9.0]), 0.0);
    }

    #[test]
    fn separable_line_needs_one_split() {
        // exhaustive threshold search on {-3..-1 -> 0, 0..2 -> 1}: only -0.5 separates
        let x = Matrix::from_rows(&[[-3.0], [-2.0], [-1.0], [0.0], [1.0], [2.0]]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let p = params(MaxFeatures::All, 1, 1.0, 1);
        let t = fit_tree(&x, &y, &p, &mut rng_from(0)).unwrap();
        assert_eq!(t.depth(), 1);
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, -0.5),
            n => panic!("expected split, got {n:?}"),
        }
        for (r, l) in x.iter_rows().zip(y) {
            assert_eq!(t.predict(r), f64::from(l));
        }
    }

    #[test]
    fn min_leaf_equal_to_rows_gives_prior() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let t = fit_tree(&x, &[0, 0, 1, 1], &params(MaxFeatures::All, 4, 1.0, 1), &mut rng_from(0))
            .unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { fraction: 0.5, samples: 4 }]);
    }

    #[test]
    fn empty_data_is_rejected() {
        let x = Matrix::zeros(0, 2);
        assert_eq!(
            fit_tree(&x, &[], &ForestParams::default(), &mut rng_from(0)),
            Err(Error::EmptyData)
        );
    }

    fn noisy(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = rng_from(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let c: f64 = rng.random();
            let label = u8::from(a + 0.3 * b + 0.2 * rng.random::<f64>() > 0.75);
            rows.push([a, b, c]);
            y.push(label);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn leaves_respect_min_samples() {
        let (x, y) = noisy(300, 2);
        for leaf in [1, 3, 5, 10] {
            let f = fit_forest(&x, &y, &params(MaxFeatures::Sqrt, leaf, 0.8, 10), 7).unwrap();
            for (t, _) in f.trees() {
                assert!(t.leaves().all(|(frac, s)| s as usize >= leaf && (0.0..=1.0).contains(&frac)));
            }
        }
    }

    #[test]
    fn forest_basics() {
        let (x, y) = noisy(120, 3);
        let one = fit_forest(&x, &y, &params(MaxFeatures::Sqrt, 1, 1.0, 1), 5).unwrap();
        for r in x.iter_rows() {
            assert_eq!(predict_proba(&one, r).unwrap(), one.trees()[0].0.predict(r));
        }
        let pure = fit_forest(&x, &vec![1; 120], &ForestParams { n_trees: 15, ..Default::default() }, 5)
            .unwrap();
        assert!(x.iter_rows().all(|r| predict_proba(&pure, r).unwrap() == 1.0));
        let a = fit_forest(&x, &y, &ForestParams { n_trees: 20, ..Default::default() }, 9).unwrap();
        let b = fit_forest(&x, &y, &ForestParams { n_trees: 20, ..Default::default() }, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn zero_weight_matches_standard_forest() {
        let (x, y) = noisy(150, 4);
        let (sx, sy) = noisy(150, 40);
        let p = ForestParams { n_trees: 30, ..Default::default() };
        let plan = HybridPlan {
            weight: 0.0,
            total_trees: 30,
            params_sim: p,
            params_real: p,
            projection: None,
        };
        let h = fit_hybrid(TrainingData::new(&sx, &sy), TrainingData::new(&x, &y), &plan, 11).unwrap();
        let s = fit_forest(&x, &y, &p, 11).unwrap();
        assert_eq!(h.n_pretrained(), 0);
        let (probe, _) = noisy(200, 99);
        for r in probe.iter_rows() {
            assert_eq!(
                predict_proba(&h, r).unwrap().to_bits(),
                predict_proba(&s, r).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn hybrid_on_real_data_matches_tree_for_tree() {
        let (x, y) = noisy(100, 6);
        let p = ForestParams { n_trees: 20, ..Default::default() };
        let plan = HybridPlan {
            weight: 1.0,
            total_trees: 20,
            params_sim: p,
            params_real: p,
            projection: None,
        };
        let h = fit_hybrid(TrainingData::new(&x, &y), TrainingData::new(&x, &y), &plan, 3).unwrap();
        let s = fit_forest(&x, &y, &p, 3).unwrap();
        assert_eq!((h.n_pretrained(), h.n_fine_tuned()), (10, 10));
        for ((ht, _), (st, _)) in h.trees().iter().zip(s.trees()) {
            let mut a: Vec<f64> = ht.leaves().map(|l| l.0).collect();
            let mut b: Vec<f64> = st.leaves().map(|l| l.0).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn weighted_counts_and_averaging() {
        let (x, y) = noisy(100, 8);
        let (sx, sy) = noisy(100, 80);
        let p = ForestParams { n_trees: 200, ..Default::default() };
        let plan = HybridPlan {
            weight: 0.2,
            total_trees: 200,
            params_sim: p,
            params_real: p,
            projection: None,
        };
        let h = fit_hybrid(TrainingData::new(&sx, &sy), TrainingData::new(&x, &y), &plan, 1).unwrap();
        assert_eq!((h.n_pretrained(), h.n_fine_tuned()), (33, 167));
        assert_eq!(
            h.trees().iter().filter(|t| t.1 == Provenance::Pretrained).count(),
            33
        );
        let (probe, _) = noisy(30, 5);
        for r in probe.iter_rows() {
            let mut pre = 0.0;
            let mut fine = 0.0;
            for (t, prov) in h.trees() {
                match prov {
                    Provenance::Pretrained => pre += t.predict(r),
                    Provenance::FineTuned => fine += t.predict(r),
                }
            }
            assert_eq!(predict_proba(&h, r).unwrap(), (pre + fine) / 200.0);
        }
    }

    #[test]
    fn projected_pretrained_trees() {
        let (x, y) = noisy(80, 12);
        // simulated data only knows real column 0 and 2
        let sx = x.select_columns(&[2, 0]);
        let p = ForestParams { n_trees: 10, ..Default::default() };
        let plan = HybridPlan {
            weight: 1.0,
            total_trees: 10,
            params_sim: p,
            params_real: p,
            projection: Some(vec![2, 0]),
        };
        let h = fit_hybrid(TrainingData::new(&sx, &y), TrainingData::new(&x, &y), &plan, 4).unwrap();
        assert_eq!(h.projection(), Some(&[2usize, 0][..]));
        let r = x.row(0);
        let direct: f64 = h.trees()[..5].iter().map(|(t, _)| t.predict(&[r[2], r[0]])).sum::<f64>()
            + h.trees()[5..].iter().map(|(t, _)| t.predict(r)).sum::<f64>();
        assert_eq!(predict_proba(&h, r).unwrap(), direct / 10.0);
        assert!(matches!(predict_proba(&h, &[1.0]), Err(Error::SchemaMismatch(_))));

        let bad = HybridPlan {
            projection: None,
            ..plan
        };
        assert!(matches!(
            fit_hybrid(TrainingData::new(&sx, &y), TrainingData::new(&x, &y), &bad, 4),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn probability_threshold_is_strict() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let f = fit_tree(&x, &[0, 1], &params(MaxFeatures::All, 2, 1.0, 1), &mut rng_from(0)).unwrap();
        let forest = HybridForest {
            trees: vec![(f, Provenance::FineTuned)],
            n_pretrained: 0,
            n_fine_tuned: 1,
            n_features: 1,
            projection: None,
        };
        assert_eq!(predict_proba(&forest, &[0.3]).unwrap(), 0.5);
        assert_eq!(classify(&forest, &[0.3]).unwrap(), 0);
    }

    #[test]
    fn provenance_weighted_mean_example() {
        // (33·0.9 + 167·0.3) / 200 = 0.399
        let leaf = |v: f64| DecisionTree {
            nodes: vec![Node::Leaf { fraction: v, samples: 1 }],
            n_features: 1,
        };
        let mut trees = vec![(leaf(0.9), Provenance::Pretrained); 33];
        trees.extend(vec![(leaf(0.3), Provenance::FineTuned); 167]);
        let f = HybridForest {
            trees,
            n_pretrained: 33,
            n_fine_tuned: 167,
            n_features: 1,
            projection: None,
        };
        assert!((predict_proba(&f, &[0.0]).unwrap() - 0.399).abs() < 1e-12);
        assert_eq!(classify(&f, &[0.0]).unwrap(), 0);
    }

    #[test]
    fn grid_search_picks_best_and_breaks_ties_by_order() {
        let (x, y) = noisy(100, 21);
        let grid = vec![
            params(MaxFeatures::All, 1, 1.0, 5),
            params(MaxFeatures::All, 1, 1.0, 5),
        ];
        let r = grid_search(&x, &y, &grid, 5, TuningMetric::BalancedAccuracy, 1).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.best_index, 0);
        let single = grid_search(&x, &y, &grid[..1], 5, TuningMetric::Auc, 1).unwrap();
        assert_eq!(single.scores.len(), 1);
        assert!(single.scores[0] > 0.5);
    }

    #[test]
    fn stratification_needs_enough_rows_per_class() {
        let y = [1, 1, 1, 1, 1, 0, 0, 0];
        assert!(matches!(
            stratified_folds(&y, 5, 1),
            Err(Error::Stratification { class: 0, .. })
        ));
        let folds = stratified_folds(&[0, 0, 1, 1, 0, 1], 3, 1).unwrap();
        for f in 0..3 {
            let members: Vec<usize> = (0..6).filter(|&i| folds[i] == f).collect();
            assert_eq!(members.len(), 2);
        }
    }
}
