//! Sampling labeled synthetic cohorts from class distributions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::NumericTable;
use crate::error::{Error, Result};
use crate::evidence::ClassDistribution;
use crate::linalg::{self, Matrix};
use crate::rng;

/// Eigenvalue floor used by the pipeline's PSD repair.
pub const PSD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableSource {
    Literature,
    TrainSplit,
}

impl VariableSource {
    pub fn as_str(self) -> &'static str {
        match self {
            VariableSource::Literature => "literature",
            VariableSource::TrainSplit => "train-split",
        }
    }
}

/// Nearest PSD matrix by eigenvalue clipping: eigenvalues below `eps` are
/// raised to `eps` and the matrix is rebuilt in the original eigenbasis.
///
/// Matrices that already have every eigenvalue at or above `eps` are
/// returned unchanged.
pub fn nearest_psd(sigma: &Matrix, eps: f64) -> Result<Matrix> {
    if !sigma.is_square() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let tol = 1e-12 * sigma.max_abs().max(1.0);
    if !sigma.is_symmetric(tol) {
        return Err(Error::Shape("matrix is not symmetric".into()));
    }
    let n = sigma.rows();
    let (values, vectors) = linalg::symmetric_eigen(sigma);
    if values.iter().all(|&v| v >= eps) {
        return Ok(sigma.clone());
    }
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(eps)).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for (k, lam) in clipped.iter().enumerate() {
                s += vectors[(i, k)] * lam * vectors[(j, k)];
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

/// Lower-triangular `L` with `L·Lᵀ = sigma` for a PSD `sigma`.
///
/// Zero pivots (within round-off) are allowed, so degenerate distributions
/// still factor; a clearly negative pivot means PSD repair was skipped.
pub fn cholesky_lower(sigma: &Matrix) -> Result<Matrix> {
    let tol = 1e-10 * sigma.max_abs().max(1.0);
    linalg::cholesky_semidefinite(sigma, tol)
}

/// `n` draws of `mu + L·z`, one per row.
pub fn sample_mvnd<R: Rng + ?Sized>(
    dist: &ClassDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InsufficientData("cannot draw 0 samples".into()));
    }
    let l = cholesky_lower(&dist.sigma)?;
    let p = dist.dim();
    let mut out = Matrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        rng::fill_standard_normal(rng, &mut z);
        let row = out.row_mut(i);
        for a in 0..p {
            let mut v = dist.mu[a];
            for (b, zb) in z.iter().enumerate().take(a + 1) {
                v += l[(a, b)] * zb;
            }
            row[a] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCohort {
    pub features: Matrix,
    /// 1 for rows drawn from the positive distribution.
    pub labels: Vec<u8>,
    pub variables: Vec<String>,
    pub provenance: Vec<VariableSource>,
}

impl SimulatedCohort {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `n_per_class` rows from each distribution, labels them by source
/// (1 = `pos`) and shuffles the combined rows.
pub fn simulate_cohort<R: Rng + ?Sized>(
    pos: &ClassDistribution,
    neg: &ClassDistribution,
    n_per_class: usize,
    rng: &mut R,
) -> Result<SimulatedCohort> {
    if pos.variables != neg.variables {
        return Err(Error::SchemaMismatch(format!(
            "class distributions disagree on variables: {:?} vs {:?}",
            pos.variables, neg.variables
        )));
    }
    let a = sample_mvnd(pos, n_per_class, rng)?;
    let b = sample_mvnd(neg, n_per_class, rng)?;
    let stacked = a.vstack(&b)?;
    let mut order: Vec<usize> = (0..2 * n_per_class).collect();
    rng::shuffle(rng, &mut order);
    let features = stacked.select_rows(&order);
    let labels = order
        .iter()
        .map(|&i| u8::from(i < n_per_class))
        .collect();
    Ok(SimulatedCohort {
        features,
        labels,
        variables: pos.variables.clone(),
        provenance: pos.sources.clone(),
    })
}

/// All-features extension before PSD repair.
///
/// Means and covariances are estimated from `class_train` (the rows of one
/// outcome class) over `all_variables`; the block spanned by the literature
/// variables is then overwritten with `lit`.
pub fn extend_all_features_unrepaired(
    lit: &ClassDistribution,
    class_train: &NumericTable,
    all_variables: &[String],
) -> Result<ClassDistribution> {
    if class_train.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "class `{}` has {} training rows, at least 2 are needed",
            lit.group,
            class_train.rows()
        )));
    }
    let lit_pos: Vec<usize> = lit
        .variables
        .iter()
        .map(|v| {
            all_variables.iter().position(|a| a == v).ok_or_else(|| {
                Error::SchemaMismatch(format!("literature variable `{v}` not in the full feature list"))
            })
        })
        .collect::<Result<_>>()?;
    let cols = class_train.indices_of(all_variables)?;
    let x = class_train.values.select_columns(&cols);
    if x.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::SchemaMismatch(
            "training rows must be imputed before extension".into(),
        ));
    }
    let mut mu = linalg::column_means(&x);
    let mut sigma = linalg::sample_covariance(&x)?;
    for (a, &ia) in lit_pos.iter().enumerate() {
        mu[ia] = lit.mu[a];
        for (b, &ib) in lit_pos.iter().enumerate() {
            sigma[(ia, ib)] = lit.sigma[(a, b)];
        }
    }
    let mut sources = vec![VariableSource::TrainSplit; all_variables.len()];
    for (a, &ia) in lit_pos.iter().enumerate() {
        sources[ia] = lit.sources[a];
    }
    let mut dist = ClassDistribution::new(lit.group.clone(), all_variables.to_vec(), mu, sigma)?;
    dist.sources = sources;
    Ok(dist)
}

/// All-features extension followed by PSD repair at [`PSD_EPS`].
pub fn extend_all_features(
    lit: &ClassDistribution,
    class_train: &NumericTable,
    all_variables: &[String],
) -> Result<ClassDistribution> {
    let mut dist = extend_all_features_unrepaired(lit, class_train, all_variables)?;
    dist.sigma = nearest_psd(&dist.sigma, PSD_EPS)?;
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use alloc::string::ToString;

    fn dist(mu: Vec<f64>, sigma: Matrix) -> ClassDistribution {
        let vars = (0..mu.len()).map(|i| format!("v{i}")).collect();
        ClassDistribution::new("g", vars, mu, sigma).unwrap()
    }

    #[test]
    fn psd_of_identity_is_identity() {
        let i = Matrix::identity(4);
        assert_eq!(nearest_psd(&i, PSD_EPS).unwrap(), i);
    }

    #[test]
    fn psd_clips_negative_eigenvalue() {
        // eigenpairs: 3 on (1, 1)/√2, -1 on (1, -1)/√2
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let out = nearest_psd(&a, 1e-9).unwrap();
        let expected_diag = (3.0 + 1e-9) / 2.0;
        let expected_off = (3.0 - 1e-9) / 2.0;
        assert!((out[(0, 0)] - expected_diag).abs() < 1e-12);
        assert!((out[(1, 1)] - expected_diag).abs() < 1e-12);
        assert!((out[(0, 1)] - expected_off).abs() < 1e-12);
        assert_eq!(out[(0, 1)], out[(1, 0)]);
    }

    #[test]
    fn psd_leaves_positive_diagonal_alone() {
        let d = Matrix::diagonal(&[2.0, 0.5, 7.0]);
        assert_eq!(nearest_psd(&d, PSD_EPS).unwrap(), d);
    }

    #[test]
    fn psd_rejects_asymmetric() {
        let a = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(nearest_psd(&a, PSD_EPS), Err(Error::Shape(_))));
    }

    #[test]
    fn psd_is_idempotent() {
        let a = Matrix::from_rows(&[[2.0, -1.5, 0.9], [-1.5, 1.0, 0.8], [0.9, 0.8, 0.3]]).unwrap();
        let once = nearest_psd(&a, PSD_EPS).unwrap();
        let twice = nearest_psd(&once, PSD_EPS).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky_lower(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky_lower(&a).unwrap();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(1, 0)], 1.0);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 1)] - libm::sqrt(2.0)).abs() < 1e-15);
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-12);
        let bad = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_lower(&bad),
            Err(Error::NotPositiveSemidefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn degenerate_distribution_is_constant() {
        let d = dist(vec![3.0, 7.0], Matrix::zeros(2, 2));
        let x = sample_mvnd(&d, 25, &mut rng_from(1)).unwrap();
        assert!(x.iter_rows().all(|r| r == [3.0, 7.0]));
    }

    #[test]
    fn cross_covariance_is_recovered() {
        let sigma = Matrix::from_rows(&[[9.33 * 9.33, 26.124], [26.124, 5.60 * 5.60]]).unwrap();
        let d = dist(vec![0.0, 0.0], sigma);
        let x = sample_mvnd(&d, 200_000, &mut rng_from(11)).unwrap();
        let c = linalg::sample_covariance(&x).unwrap();
        assert!((c[(0, 1)] - 26.124).abs() < 0.5, "cov {}", c[(0, 1)]);
    }

    #[test]
    fn cohort_counts_and_shuffle() {
        let pos = dist(vec![1.0], Matrix::identity(1));
        let neg = dist(vec![-1.0], Matrix::identity(1));
        let c = simulate_cohort(&pos, &neg, 500, &mut rng_from(5)).unwrap();
        assert_eq!(c.len(), 1000);
        assert_eq!(c.labels.iter().filter(|&&l| l == 1).count(), 500);
        let concatenated: Vec<u8> = (0..1000).map(|i| u8::from(i < 500)).collect();
        assert_ne!(c.labels, concatenated);

        let tiny = simulate_cohort(&pos, &neg, 1, &mut rng_from(5)).unwrap();
        let mut l = tiny.labels.clone();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1]);

        let again = simulate_cohort(&pos, &neg, 500, &mut rng_from(5)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn shuffle_preserves_labeled_rows() {
        let pos = dist(vec![1.0, 2.0], Matrix::identity(2));
        let neg = dist(vec![-1.0, 0.0], Matrix::identity(2));
        let mut r1 = rng_from(9);
        let c = simulate_cohort(&pos, &neg, 50, &mut r1).unwrap();
        // Replay the same draws without the shuffle.
        let mut r2 = rng_from(9);
        let a = sample_mvnd(&pos, 50, &mut r2).unwrap();
        let b = sample_mvnd(&neg, 50, &mut r2).unwrap();
        let key = |row: &[f64], l: u8| {
            let mut k: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            k.push(u64::from(l));
            k
        };
        let mut before: Vec<Vec<u64>> = a
            .iter_rows()
            .map(|r| key(r, 1))
            .chain(b.iter_rows().map(|r| key(r, 0)))
            .collect();
        let mut after: Vec<Vec<u64>> = c
            .features
            .iter_rows()
            .zip(&c.labels)
            .map(|(r, &l)| key(r, l))
            .collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn variable_mismatch_is_rejected() {
        let pos = dist(vec![1.0], Matrix::identity(1));
        let mut neg = dist(vec![1.0], Matrix::identity(1));
        neg.variables = vec!["other".to_string()];
        assert!(matches!(
            simulate_cohort(&pos, &neg, 3, &mut rng_from(1)),
            Err(Error::SchemaMismatch(_))
        ));
    }

    fn table(cols: &[&str], rows: &[&[f64]]) -> NumericTable {
        NumericTable::continuous(
            cols.iter().map(|c| c.to_string()).collect(),
            Matrix::from_rows(rows).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn extension_without_extra_variables_is_identity() {
        let lit = ClassDistribution::new(
            "g",
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0],
            Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(),
        )
        .unwrap();
        let train = table(&["a", "b"], &[&[0.0, 1.0], &[1.0, 3.0], &[5.0, 2.0]]);
        let out = extend_all_features(&lit, &train, &lit.variables).unwrap();
        assert_eq!(out.mu, lit.mu);
        assert_eq!(out.sigma, lit.sigma);
    }

    #[test]
    fn constant_extra_column() {
        let lit = ClassDistribution::new("g", vec!["a".into()], vec![1.0], Matrix::identity(1))
            .unwrap();
        let train = table(&["a", "c"], &[&[0.0, 4.0], &[1.0, 4.0], &[3.0, 4.0]]);
        let all = vec!["a".to_string(), "c".to_string()];
        let out = extend_all_features(&lit, &train, &all).unwrap();
        assert_eq!(out.mu[1], 4.0);
        assert!(out.sigma[(1, 1)].abs() < 1e-8);
        assert!(out.sigma[(0, 1)].abs() < 1e-8);
        assert_eq!(out.sources, vec![VariableSource::Literature, VariableSource::TrainSplit]);
    }

    #[test]
    fn extension_keeps_train_covariance_for_extra_columns() {
        // x is not a literature variable; y = 2x, so cov(x, y) = 2 var(x)
        let lit = ClassDistribution::new("g", vec!["a".into()], vec![0.0], Matrix::identity(1))
            .unwrap();
        let train = table(
            &["a", "x", "y"],
            &[&[0.3, 1.0, 2.0], &[-0.2, 2.0, 4.0], &[1.1, 4.0, 8.0], &[0.5, 7.0, 14.0]],
        );
        let all: Vec<String> = ["a", "x", "y"].iter().map(|s| s.to_string()).collect();
        let raw = extend_all_features_unrepaired(&lit, &train, &all).unwrap();
        // var(x) over {1, 2, 4, 7}: mean 3.5, squared deviations 6.25+2.25+0.25+12.25 = 21, /3 = 7
        assert!((raw.sigma[(1, 1)] - 7.0).abs() < 1e-12);
        assert!((raw.sigma[(1, 2)] - 14.0).abs() < 1e-12);
        assert_eq!(raw.sigma[(0, 0)], 1.0);
        assert_eq!(raw.mu[0], 0.0);
        let repaired = extend_all_features(&lit, &train, &all).unwrap();
        assert!((repaired.sigma[(1, 2)] - 14.0).abs() < 1e-6);
    }

    #[test]
    fn extension_needs_two_rows() {
        let lit = ClassDistribution::new("g", vec!["a".into()], vec![0.0], Matrix::identity(1))
            .unwrap();
        let train = table(&["a"], &[&[1.0]]);
        assert!(matches!(
            extend_all_features(&lit, &train, &lit.variables),
            Err(Error::InsufficientData(_))
        ));
    }
}
