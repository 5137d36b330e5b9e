//! Real-data preparation: one-hot encoding, chained-equations imputation,
//! outcome labeling and SMOTE-NC balancing.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Cell, FeatureKind, FeatureSchema, FeatureSpec, NumericTable, TabularDataset};
use crate::error::{Error, Result};
use crate::linalg::{self, LinearFit, Matrix};

// ---------------------------------------------------------------------------
// One-hot encoding

/// A category that is not in the schema's list; encoded as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct UnseenCategory {
    pub row: usize,
    pub variable: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub table: NumericTable,
    pub warnings: Vec<UnseenCategory>,
}

/// Name of the indicator column for `level` of `variable`.
pub fn indicator_name(variable: &str, level: &str) -> String {
    format!("{variable}={level}")
}

/// Column names produced by [`one_hot_encode`] for a schema.
pub fn encoded_columns(schema: &FeatureSchema) -> (Vec<String>, Vec<bool>) {
    let mut names = Vec::new();
    let mut flags = Vec::new();
    for f in schema.features() {
        match &f.kind {
            FeatureKind::Continuous => {
                names.push(f.name.clone());
                flags.push(false);
            }
            FeatureKind::Categorical(levels) => {
                for l in levels {
                    names.push(indicator_name(&f.name, l));
                    flags.push(true);
                }
            }
        }
    }
    (names, flags)
}

/// Full one-hot encoding (no dropped level) over the schema's category lists.
///
/// Missing cells stay missing (`NaN`) in every indicator of their variable.
pub fn one_hot_encode(data: &TabularDataset) -> Result<Encoded> {
    let schema = &data.schema;
    let (names, flags) = encoded_columns(schema);
    let width = names.len();
    let mut values = Matrix::zeros(data.len(), width);
    let mut warnings = Vec::new();
    for (i, row) in data.rows.iter().enumerate() {
        let out = values.row_mut(i);
        let mut col = 0;
        for (f, cell) in schema.features().iter().zip(row) {
            match (&f.kind, cell) {
                (FeatureKind::Continuous, Cell::Number(v)) => {
                    out[col] = *v;
                    col += 1;
                }
                (FeatureKind::Continuous, Cell::Missing) => {
                    out[col] = f64::NAN;
                    col += 1;
                }
                (FeatureKind::Continuous, Cell::Category(s)) => {
                    return Err(Error::SchemaMismatch(format!(
                        "row {i}: continuous variable `{}` holds text `{s}`",
                        f.name
                    )));
                }
                (FeatureKind::Categorical(levels), Cell::Missing) => {
                    out[col..col + levels.len()].fill(f64::NAN);
                    col += levels.len();
                }
                (FeatureKind::Categorical(levels), cell) => {
                    let text = match cell {
                        Cell::Category(s) => s.clone(),
                        Cell::Number(v) => format!("{v}"),
                        Cell::Missing => unreachable!(),
                    };
                    match levels.iter().position(|l| *l == text) {
                        Some(k) => out[col + k] = 1.0,
                        None => warnings.push(UnseenCategory {
                            row: i,
                            variable: f.name.clone(),
                            value: text,
                        }),
                    }
                    col += levels.len();
                }
            }
        }
    }
    Ok(Encoded {
        table: NumericTable::new(names, values, flags)?,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Chained-equations imputation

/// Default number of chained-equation sweeps.
pub const DEFAULT_SWEEPS: usize = 5;

/// Imputation models fitted on a training table.
///
/// Completion starts from the training column means and then runs one
/// regression per column per sweep, in column order, each on the current
/// values of all other columns. The same sequence of fitted models is
/// replayed on any table passed to [`apply_imputer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    columns: Vec<String>,
    means: Vec<f64>,
    /// `models[sweep][column]`, coefficients over all columns (own column 0).
    models: Vec<Vec<LinearFit>>,
}

impl Imputer {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn sweeps(&self) -> usize {
        self.models.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

fn fit_column_model(filled: &Matrix, observed_rows: &[usize], target: usize) -> Result<LinearFit> {
    let p = filled.cols();
    let others: Vec<usize> = (0..p).filter(|&j| j != target).collect();
    let x = filled.select_rows(observed_rows).select_columns(&others);
    let y: Vec<f64> = observed_rows.iter().map(|&i| filled[(i, target)]).collect();
    let fit = linalg::least_squares(&x, &y)?;
    let mut coef = vec![0.0; p];
    for (c, &j) in fit.coef.iter().zip(&others) {
        coef[j] = *c;
    }
    Ok(LinearFit {
        intercept: fit.intercept,
        coef,
    })
}

pub fn fit_imputer(train: &NumericTable, sweeps: usize) -> Result<Imputer> {
    if sweeps == 0 {
        return Err(Error::InvalidConfig("imputation needs at least one sweep".into()));
    }
    let x = &train.values;
    let (n, p) = (x.rows(), x.cols());
    let mut observed: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut means = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            let v = x[(i, j)];
            if !v.is_nan() {
                observed[j].push(i);
                means[j] += v;
            }
        }
    }
    for j in 0..p {
        if observed[j].is_empty() {
            return Err(Error::EmptyColumn(train.columns[j].clone()));
        }
        means[j] /= observed[j].len() as f64;
    }
    let mut filled = x.clone();
    let mut missing: Vec<Vec<usize>> = vec![Vec::new(); p];
    for i in 0..n {
        for j in 0..p {
            if filled[(i, j)].is_nan() {
                filled[(i, j)] = means[j];
                missing[j].push(i);
            }
        }
    }
    let mut models = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let mut sweep = Vec::with_capacity(p);
        for j in 0..p {
            let model = fit_column_model(&filled, &observed[j], j)?;
            for &i in &missing[j] {
                let v = model.predict(filled.row(i));
                filled[(i, j)] = v;
            }
            sweep.push(model);
        }
        models.push(sweep);
    }
    Ok(Imputer {
        columns: train.columns.clone(),
        means,
        models,
    })
}

/// Completes `data` with the training-fitted models. The output has no
/// missing cells.
pub fn apply_imputer(imputer: &Imputer, data: &NumericTable) -> Result<NumericTable> {
    if data.columns != imputer.columns {
        return Err(Error::SchemaMismatch(
            "imputer was fitted on different columns".into(),
        ));
    }
    let mut filled = data.values.clone();
    let p = filled.cols();
    let mut missing: Vec<Vec<usize>> = vec![Vec::new(); p];
    for i in 0..filled.rows() {
        for j in 0..p {
            if filled[(i, j)].is_nan() {
                filled[(i, j)] = imputer.means[j];
                missing[j].push(i);
            }
        }
    }
    for sweep in &imputer.models {
        for (j, model) in sweep.iter().enumerate() {
            for &i in &missing[j] {
                let v = model.predict(filled.row(i));
                filled[(i, j)] = v;
            }
        }
    }
    NumericTable::new(data.columns.clone(), filled, data.categorical.clone())
}

// ---------------------------------------------------------------------------
// Outcome labeling

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeMode {
    /// Reliable change index on a symptom scale that decreases with improvement.
    Response,
    /// Absolute post-treatment threshold.
    Remission,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpec {
    pub mode: OutcomeMode,
    pub score_pre: String,
    pub score_post: String,
    pub reliability: f64,
    pub rci_cutoff: f64,
    pub remission_threshold: f64,
}

impl OutcomeSpec {
    pub const DEFAULT_RELIABILITY: f64 = 0.80;
    pub const DEFAULT_RCI_CUTOFF: f64 = 1.96;
    pub const DEFAULT_REMISSION_THRESHOLD: f64 = 12.0;

    pub fn response(score_pre: impl Into<String>, score_post: impl Into<String>) -> Self {
        OutcomeSpec {
            mode: OutcomeMode::Response,
            score_pre: score_pre.into(),
            score_post: score_post.into(),
            reliability: Self::DEFAULT_RELIABILITY,
            rci_cutoff: Self::DEFAULT_RCI_CUTOFF,
            remission_threshold: Self::DEFAULT_REMISSION_THRESHOLD,
        }
    }

    pub fn remission(score_pre: impl Into<String>, score_post: impl Into<String>) -> Self {
        OutcomeSpec {
            mode: OutcomeMode::Remission,
            ..OutcomeSpec::response(score_pre, score_post)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            OutcomeMode::Response => {
                if !(self.reliability > 0.0 && self.reliability <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "reliability {} outside (0, 1]",
                        self.reliability
                    )));
                }
                if !(self.rci_cutoff > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "rci_cutoff {} must be > 0",
                        self.rci_cutoff
                    )));
                }
            }
            OutcomeMode::Remission => {
                if self.remission_threshold.is_nan() {
                    return Err(Error::InvalidConfig("remission threshold is NaN".into()));
                }
            }
        }
        Ok(())
    }
}

/// Jacobson–Truax reliable change: `(post - pre) / S_diff` with
/// `S_diff = √2 · sd · √(1 - reliability)`, evaluated as `sd · √(2(1 - r))`.
///
/// Returns `None` for a zero change when `S_diff = 0`.
pub fn reliable_change(pre: f64, post: f64, sd_pre_reference: f64, reliability: f64) -> Result<Option<f64>> {
    let s_diff = sd_pre_reference * libm::sqrt(2.0 * (1.0 - reliability));
    let change = post - pre;
    if s_diff == 0.0 {
        return if change == 0.0 {
            Ok(None)
        } else {
            Err(Error::DegenerateReliability)
        };
    }
    Ok(Some(change / s_diff))
}

/// 1 = responder iff `RC ≤ -rci_cutoff` (boundary inclusive).
pub fn label_response(pre: f64, post: f64, spec: &OutcomeSpec, sd_pre_reference: f64) -> Result<u8> {
    if !(spec.reliability > 0.0 && spec.reliability <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "reliability {} outside (0, 1]",
            spec.reliability
        )));
    }
    if !(sd_pre_reference > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "reference SD {sd_pre_reference} must be > 0"
        )));
    }
    Ok(
        match reliable_change(pre, post, sd_pre_reference, spec.reliability)? {
            Some(rc) => u8::from(rc <= -spec.rci_cutoff),
            None => 0,
        },
    )
}

/// 1 = remitted iff `post ≤ remission_threshold`.
pub fn label_remission(post: f64, spec: &OutcomeSpec) -> u8 {
    u8::from(post <= spec.remission_threshold)
}

/// A dataset with labels attached and the outcome-only column removed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub data: TabularDataset,
    /// Indices (in the input) of rows dropped for a missing outcome score.
    pub dropped: Vec<usize>,
    pub sd_pre_reference: f64,
}

/// Labels every row with a complete outcome and drops the post-score
/// variable from the feature space. The reference SD is the sample SD of the
/// pre-score over all labeled rows.
pub fn label_dataset(data: &TabularDataset, spec: &OutcomeSpec) -> Result<LabeledData> {
    spec.validate()?;
    let pre = data.numeric_column(&spec.score_pre)?;
    let post = data.numeric_column(&spec.score_post)?;
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| pre[i].is_some() && post[i].is_some())
        .collect();
    let dropped = (0..data.len()).filter(|i| !keep.contains(i)).collect();
    if keep.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} rows have both outcome scores",
            keep.len()
        )));
    }
    let pre_vals: Vec<f64> = keep.iter().map(|&i| pre[i].unwrap()).collect();
    let n = pre_vals.len() as f64;
    let mean = pre_vals.iter().sum::<f64>() / n;
    let sd = libm::sqrt(pre_vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0));
    let labels = keep
        .iter()
        .map(|&i| {
            let (a, b) = (pre[i].unwrap(), post[i].unwrap());
            match spec.mode {
                OutcomeMode::Response => label_response(a, b, spec, sd),
                OutcomeMode::Remission => Ok(label_remission(b, spec)),
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    let post_idx = data.schema.index_of(&spec.score_post).expect("checked above");
    let features: Vec<FeatureSpec> = data
        .schema
        .features()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != post_idx)
        .map(|(_, f)| f.clone())
        .collect();
    let rows = keep
        .iter()
        .map(|&i| {
            data.rows[i]
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != post_idx)
                .map(|(_, c)| c.clone())
                .collect()
        })
        .collect();
    Ok(LabeledData {
        data: TabularDataset::new(FeatureSchema::new(features)?, rows, Some(labels))?,
        dropped,
        sd_pre_reference: sd,
    })
}

// ---------------------------------------------------------------------------
// SMOTE-NC

/// Default neighbor count.
pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub x: Matrix,
    pub y: Vec<u8>,
    /// Number of synthetic rows appended after the originals.
    pub synthetic: usize,
    /// Neighbor count actually used.
    pub k_used: usize,
}

fn class_counts(y: &[u8]) -> (usize, usize) {
    let pos = y.iter().filter(|&&l| l == 1).count();
    (y.len() - pos, pos)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn most_frequent(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let mut best = v[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j].to_bits() == v[i].to_bits() {
            j += 1;
        }
        // strict > keeps the smallest value on ties
        if j - i > best_count {
            best_count = j - i;
            best = v[i];
        }
        i = j;
    }
    best
}

/// SMOTE-NC over a numeric matrix.
///
/// `categorical[j]` marks columns compared by exact equality. Distances are
/// Euclidean over continuous columns plus `med²` per mismatching categorical
/// column, where `med` is the median standard deviation of the minority
/// class's continuous columns. Synthetic rows interpolate continuous values
/// at `λ ~ U[0, 1)` toward a random one of the `k` nearest minority
/// neighbors and take each categorical value as the most frequent among those
/// neighbors. Original rows come first, unchanged.
pub fn smotenc_numeric<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[u8],
    categorical: &[bool],
    k_neighbors: usize,
    rng: &mut R,
) -> Result<Balanced> {
    if y.len() != x.rows() || categorical.len() != x.cols() {
        return Err(Error::Shape(format!(
            "{} rows, {} labels, {} columns, {} categorical flags",
            x.rows(),
            y.len(),
            x.cols(),
            categorical.len()
        )));
    }
    if x.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::SchemaMismatch("SMOTE-NC needs complete data".into()));
    }
    let (neg, pos) = class_counts(y);
    if neg == 0 || pos == 0 {
        return Err(Error::SingleClass);
    }
    if neg == pos {
        return Ok(Balanced {
            x: x.clone(),
            y: y.to_vec(),
            synthetic: 0,
            k_used: 0,
        });
    }
    let minority_label = u8::from(pos < neg);
    let minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    let m = minority.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "minority class has {m} row, SMOTE-NC needs at least 2"
        )));
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
    }
    let k = k_neighbors.min(m - 1);
    let needed = neg.max(pos) - m;

    let cont: Vec<usize> = (0..x.cols()).filter(|&j| !categorical[j]).collect();
    let penalty = if cont.is_empty() {
        1.0
    } else {
        let sds = cont
            .iter()
            .map(|&j| {
                let vals: Vec<f64> = minority.iter().map(|&i| x[(i, j)]).collect();
                let mean = vals.iter().sum::<f64>() / m as f64;
                libm::sqrt(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64)
            })
            .collect();
        let med = median(sds);
        med * med
    };
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        let mut d = 0.0;
        for j in 0..a.len() {
            if categorical[j] {
                if a[j].to_bits() != b[j].to_bits() {
                    d += penalty;
                }
            } else {
                let t = a[j] - b[j];
                d += t * t;
            }
        }
        d
    };
    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut cand: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&o| o != i)
                .map(|&o| (dist2(x.row(i), x.row(o)), o))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(_, o)| o).collect()
        })
        .collect();

    let mut out = x.clone();
    let mut labels = y.to_vec();
    let mut row = vec![0.0; x.cols()];
    for _ in 0..needed {
        let a = rng.random_range(0..m);
        let base = minority[a];
        let nb = neighbors[a][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        for j in 0..x.cols() {
            row[j] = if categorical[j] {
                most_frequent(neighbors[a].iter().map(|&o| x[(o, j)]))
            } else {
                let (u, v) = (x[(base, j)], x[(nb, j)]);
                u + lambda * (v - u)
            };
        }
        out.push_row(&row)?;
        labels.push(minority_label);
    }
    Ok(Balanced {
        x: out,
        y: labels,
        synthetic: needed,
        k_used: k,
    })
}

/// SMOTE-NC on a mixed-type labeled dataset.
pub fn smotenc_balance<R: Rng + ?Sized>(
    data: &TabularDataset,
    k_neighbors: usize,
    rng: &mut R,
) -> Result<TabularDataset> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::SchemaMismatch("SMOTE-NC needs labels".into()))?;
    let schema = &data.schema;
    // Category text -> index into the schema list; unseen text gets fresh codes.
    let mut extra: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    let mut x = Matrix::zeros(data.len(), schema.len());
    for (i, r) in data.rows.iter().enumerate() {
        for (j, (f, cell)) in schema.features().iter().zip(r).enumerate() {
            x[(i, j)] = match (&f.kind, cell) {
                (_, Cell::Missing) => {
                    return Err(Error::SchemaMismatch(format!(
                        "row {i}: `{}` is missing; SMOTE-NC needs complete data",
                        f.name
                    )))
                }
                (FeatureKind::Continuous, Cell::Number(v)) => *v,
                (FeatureKind::Categorical(levels), Cell::Category(s)) => {
                    match levels.iter().position(|l| l == s) {
                        Some(k) => k as f64,
                        None => {
                            let pos = match extra[j].iter().position(|e| e == s) {
                                Some(p) => p,
                                None => {
                                    extra[j].push(s.clone());
                                    extra[j].len() - 1
                                }
                            };
                            (levels.len() + pos) as f64
                        }
                    }
                }
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "row {i}: cell type does not match variable `{}`",
                        f.name
                    )))
                }
            };
        }
    }
    let flags: Vec<bool> = schema.features().iter().map(FeatureSpec::is_categorical).collect();
    let bal = smotenc_numeric(&x, labels, &flags, k_neighbors, rng)?;
    let mut rows = data.rows.clone();
    for i in data.len()..bal.x.rows() {
        let r = bal
            .x
            .row(i)
            .iter()
            .zip(schema.features())
            .enumerate()
            .map(|(j, (&v, f))| match &f.kind {
                FeatureKind::Continuous => Cell::Number(v),
                FeatureKind::Categorical(levels) => {
                    let code = v as usize;
                    Cell::Category(if code < levels.len() {
                        levels[code].clone()
                    } else {
                        extra[j][code - levels.len()].clone()
                    })
                }
            })
            .collect();
        rows.push(r);
    }
    TabularDataset::new(schema.clone(), rows, Some(bal.y))
}
