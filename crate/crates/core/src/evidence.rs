//! Study-level summary statistics and their sample-size-weighted pooling.
//!
//! Weights are always the overall study size, never the size of the
//! responder or non-responder subgroup, so a study with an unbalanced split
//! cannot pull one group's pooled mean away from the other.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cohort::VariableSource;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Reported mean and SD of one variable in one outcome group of one study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyMoment {
    pub study_id: String,
    pub variable: String,
    pub group: String,
    pub mean: f64,
    pub sd: f64,
    /// Overall study sample size.
    pub n_total: u32,
    /// Free-text provenance, e.g. an equivalent instrument version.
    pub note: Option<String>,
}

impl StudyMoment {
    pub fn new(
        study_id: impl Into<String>,
        variable: impl Into<String>,
        group: impl Into<String>,
        mean: f64,
        sd: f64,
        n_total: u32,
    ) -> Self {
        StudyMoment {
            study_id: study_id.into(),
            variable: variable.into(),
            group: group.into(),
            mean,
            sd,
            n_total,
            note: None,
        }
    }
}

/// A reported correlation between two variables (unordered pair).
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCorrelation {
    pub study_id: String,
    pub var_a: String,
    pub var_b: String,
    pub r: f64,
    pub n_total: u32,
}

impl StudyCorrelation {
    pub fn new(
        study_id: impl Into<String>,
        var_a: impl Into<String>,
        var_b: impl Into<String>,
        r: f64,
        n_total: u32,
    ) -> Self {
        StudyCorrelation {
            study_id: study_id.into(),
            var_a: var_a.into(),
            var_b: var_b.into(),
            r,
            n_total,
        }
    }

    fn joins(&self, a: &str, b: &str) -> bool {
        (self.var_a == a && self.var_b == b) || (self.var_a == b && self.var_b == a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceSet {
    variables: Vec<String>,
    groups: [String; 2],
    moments: Vec<StudyMoment>,
    correlations: Vec<StudyCorrelation>,
}

impl EvidenceSet {
    /// Validates and assembles an evidence set. `groups` lists the two class
    /// labels; the first is not privileged.
    pub fn new(
        variables: Vec<String>,
        groups: [String; 2],
        moments: Vec<StudyMoment>,
        correlations: Vec<StudyCorrelation>,
    ) -> Result<Self> {
        if groups[0] == groups[1] {
            return Err(Error::InvalidEvidence(format!(
                "the two groups must differ, both are `{}`",
                groups[0]
            )));
        }
        for (i, v) in variables.iter().enumerate() {
            if variables[..i].contains(v) {
                return Err(Error::InvalidEvidence(format!("duplicate variable `{v}`")));
            }
        }
        for (i, m) in moments.iter().enumerate() {
            if !variables.contains(&m.variable) {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}` reports unknown variable `{}`",
                    m.study_id, m.variable
                )));
            }
            if !groups.contains(&m.group) {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}` reports unknown group `{}`",
                    m.study_id, m.group
                )));
            }
            if !(m.sd >= 0.0) || !m.sd.is_finite() || !m.mean.is_finite() {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}`, `{}`/`{}`: mean {} and sd {} must be finite with sd >= 0",
                    m.study_id, m.variable, m.group, m.mean, m.sd
                )));
            }
            if m.n_total == 0 {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}` has n_total = 0",
                    m.study_id
                )));
            }
            if moments[..i].iter().any(|o| {
                o.study_id == m.study_id && o.variable == m.variable && o.group == m.group
            }) {
                return Err(Error::InvalidEvidence(format!(
                    "duplicate moment for study `{}`, `{}`/`{}`",
                    m.study_id, m.variable, m.group
                )));
            }
        }
        for (i, c) in correlations.iter().enumerate() {
            for v in [&c.var_a, &c.var_b] {
                if !variables.contains(v) {
                    return Err(Error::InvalidEvidence(format!(
                        "study `{}` correlates unknown variable `{v}`",
                        c.study_id
                    )));
                }
            }
            if c.var_a == c.var_b {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}` correlates `{}` with itself",
                    c.study_id, c.var_a
                )));
            }
            if !(c.r.abs() <= 1.0) {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}`: r = {} outside [-1, 1]",
                    c.study_id, c.r
                )));
            }
            if c.n_total == 0 {
                return Err(Error::InvalidEvidence(format!(
                    "study `{}` has n_total = 0",
                    c.study_id
                )));
            }
            if correlations[..i]
                .iter()
                .any(|o| o.study_id == c.study_id && o.joins(&c.var_a, &c.var_b))
            {
                return Err(Error::InvalidEvidence(format!(
                    "duplicate correlation for study `{}`, ({}, {})",
                    c.study_id, c.var_a, c.var_b
                )));
            }
        }
        Ok(EvidenceSet {
            variables,
            groups,
            moments,
            correlations,
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn groups(&self) -> &[String; 2] {
        &self.groups
    }

    pub fn moments(&self) -> &[StudyMoment] {
        &self.moments
    }

    pub fn correlations(&self) -> &[StudyCorrelation] {
        &self.correlations
    }

    /// Restriction to `variables` (in that order), keeping only records
    /// that mention nothing else.
    pub fn select(&self, variables: &[String]) -> Result<EvidenceSet> {
        if let Some(v) = variables.iter().find(|v| !self.variables.contains(v)) {
            return Err(Error::InvalidEvidence(format!(
                "variable `{v}` is not part of the evidence set"
            )));
        }
        Ok(EvidenceSet {
            variables: variables.to_vec(),
            groups: self.groups.clone(),
            moments: self
                .moments
                .iter()
                .filter(|m| variables.contains(&m.variable))
                .cloned()
                .collect(),
            correlations: self
                .correlations
                .iter()
                .filter(|c| variables.contains(&c.var_a) && variables.contains(&c.var_b))
                .cloned()
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledMoment {
    pub variable: String,
    pub group: String,
    pub mean: f64,
    pub variance: f64,
    /// Sum of contributing study sizes.
    pub effective_n: u64,
}

/// Weighted mean of study means and weighted mean of squared SDs, both
/// weighted by overall study size.
pub fn pool_moments(evidence: &EvidenceSet, variable: &str, group: &str) -> Result<PooledMoment> {
    let mut weight = 0u64;
    let mut mean_acc = 0.0;
    let mut var_acc = 0.0;
    for m in evidence
        .moments
        .iter()
        .filter(|m| m.variable == variable && m.group == group)
    {
        let n = f64::from(m.n_total);
        weight += u64::from(m.n_total);
        mean_acc += n * m.mean;
        var_acc += n * m.sd * m.sd;
    }
    if weight == 0 {
        return Err(Error::MissingEvidence {
            variable: variable.into(),
            group: group.into(),
        });
    }
    let w = weight as f64;
    Ok(PooledMoment {
        variable: variable.into(),
        group: group.into(),
        mean: mean_acc / w,
        variance: (var_acc / w).max(0.0),
        effective_n: weight,
    })
}

/// Sample-size-weighted correlation for an unordered pair, or `None` when no
/// study reports it.
pub fn pool_correlation(evidence: &EvidenceSet, var_a: &str, var_b: &str) -> Option<f64> {
    // Record order, not argument order, drives accumulation: (a, b) and (b, a) agree bit for bit.
    let mut weight = 0u64;
    let mut acc = 0.0;
    for c in evidence.correlations.iter().filter(|c| c.joins(var_a, var_b)) {
        weight += u64::from(c.n_total);
        acc += f64::from(c.n_total) * c.r;
    }
    if weight == 0 {
        return None;
    }
    Some((acc / weight as f64).clamp(-1.0, 1.0))
}

/// Mean vector and covariance matrix of one outcome group.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub group: String,
    pub variables: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    /// Where each variable's moments came from.
    pub sources: Vec<VariableSource>,
}

impl ClassDistribution {
    pub fn new(
        group: impl Into<String>,
        variables: Vec<String>,
        mu: Vec<f64>,
        sigma: Matrix,
    ) -> Result<Self> {
        let p = variables.len();
        if mu.len() != p || sigma.rows() != p || sigma.cols() != p {
            return Err(Error::Shape(format!(
                "{p} variables, {} means, {}x{} covariance",
                mu.len(),
                sigma.rows(),
                sigma.cols()
            )));
        }
        if !sigma.is_symmetric(0.0) {
            return Err(Error::Shape("covariance matrix is not symmetric".into()));
        }
        Ok(ClassDistribution {
            group: group.into(),
            sources: alloc::vec![VariableSource::Literature; p],
            variables,
            mu,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }
}

/// Builds the class distribution of `group` over all evidence variables.
///
/// Off-diagonal entries are `r̄ᵢⱼ·sdᵢ·sdⱼ` from the group's pooled variances
/// when a pooled correlation exists, else `fallback_cov[(i, j)]`.
pub fn build_class_distribution(
    evidence: &EvidenceSet,
    group: &str,
    fallback_cov: Option<&Matrix>,
) -> Result<ClassDistribution> {
    let vars = &evidence.variables;
    let p = vars.len();
    if let Some(fb) = fallback_cov {
        if fb.rows() != p || fb.cols() != p {
            return Err(Error::Shape(format!(
                "fallback covariance is {}x{}, expected {p}x{p}",
                fb.rows(),
                fb.cols()
            )));
        }
    }
    let pooled = vars
        .iter()
        .map(|v| pool_moments(evidence, v, group))
        .collect::<Result<Vec<_>>>()?;
    let sds: Vec<f64> = pooled.iter().map(|m| libm::sqrt(m.variance)).collect();
    let mut sigma = Matrix::zeros(p, p);
    for i in 0..p {
        sigma[(i, i)] = pooled[i].variance;
        for j in 0..i {
            let cov = match pool_correlation(evidence, &vars[i], &vars[j]) {
                Some(r) => r * sds[i] * sds[j],
                None => match fallback_cov {
                    Some(fb) => 0.5 * (fb[(i, j)] + fb[(j, i)]),
                    None => {
                        return Err(Error::MissingFallback {
                            var_a: vars[j].clone(),
                            var_b: vars[i].clone(),
                        })
                    }
                },
            };
            sigma[(i, j)] = cov;
            sigma[(j, i)] = cov;
        }
    }
    ClassDistribution::new(
        group,
        vars.clone(),
        pooled.iter().map(|m| m.mean).collect(),
        sigma,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn groups() -> [String; 2] {
        ["responder".to_string(), "non_responder".to_string()]
    }

    fn single_var(moments: Vec<StudyMoment>) -> EvidenceSet {
        EvidenceSet::new(vec!["BDI".into()], groups(), moments, vec![]).unwrap()
    }

    #[test]
    fn weighted_mean_anchor() {
        let ev = single_var(vec![
            StudyMoment::new("a", "BDI", "responder", 18.0, 1.0, 20),
            StudyMoment::new("b", "BDI", "responder", 24.0, 1.0, 40),
        ]);
        let m = pool_moments(&ev, "BDI", "responder").unwrap();
        assert_eq!(m.mean, 22.0);
        assert_eq!(m.effective_n, 60);
    }

    #[test]
    fn single_study_identity() {
        let ev = single_var(vec![StudyMoment::new("v", "BDI", "responder", 25.38, 5.60, 39)]);
        let m = pool_moments(&ev, "BDI", "responder").unwrap();
        assert_eq!(m.mean, 25.38);
        assert!((m.variance - 31.36).abs() < 1e-12);
    }

    #[test]
    fn pooled_variance_weights_squared_sds() {
        // (4·10 + 16·30) / 40 = 13
        let ev = single_var(vec![
            StudyMoment::new("a", "BDI", "responder", 0.0, 2.0, 10),
            StudyMoment::new("b", "BDI", "responder", 0.0, 4.0, 30),
        ]);
        assert_eq!(pool_moments(&ev, "BDI", "responder").unwrap().variance, 13.0);
    }

    #[test]
    fn missing_group_is_reported() {
        let ev = single_var(vec![StudyMoment::new("a", "BDI", "responder", 1.0, 1.0, 5)]);
        assert_eq!(
            pool_moments(&ev, "BDI", "non_responder"),
            Err(Error::MissingEvidence {
                variable: "BDI".into(),
                group: "non_responder".into()
            })
        );
    }

    fn pair_evidence(cors: Vec<StudyCorrelation>) -> EvidenceSet {
        EvidenceSet::new(
            vec!["OCI-R".into(), "Onset".into(), "YBOCS".into()],
            groups(),
            vec![],
            cors,
        )
        .unwrap()
    }

    #[test]
    fn pooled_correlation_examples() {
        let ev = pair_evidence(vec![
            StudyCorrelation::new("a", "YBOCS", "OCI-R", 0.2, 50),
            StudyCorrelation::new("b", "OCI-R", "YBOCS", 0.6, 150),
            StudyCorrelation::new("c", "YBOCS", "Onset", -0.3, 46),
        ]);
        let r = pool_correlation(&ev, "YBOCS", "OCI-R").unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(pool_correlation(&ev, "Onset", "YBOCS"), Some(-0.3));
        assert_eq!(pool_correlation(&ev, "OCI-R", "Onset"), None);
    }

    #[test]
    fn evidence_invariants_are_enforced() {
        let bad_r = EvidenceSet::new(
            vec!["a".into(), "b".into()],
            groups(),
            vec![],
            vec![StudyCorrelation::new("s", "a", "b", 1.2, 10)],
        );
        assert!(matches!(bad_r, Err(Error::InvalidEvidence(_))));
        let self_pair = EvidenceSet::new(
            vec!["a".into()],
            groups(),
            vec![],
            vec![StudyCorrelation::new("s", "a", "a", 0.2, 10)],
        );
        assert!(self_pair.is_err());
        let dup = EvidenceSet::new(
            vec!["a".into(), "b".into()],
            groups(),
            vec![],
            vec![
                StudyCorrelation::new("s", "a", "b", 0.2, 10),
                StudyCorrelation::new("s", "b", "a", 0.3, 10),
            ],
        );
        assert!(dup.is_err());
        let neg_sd = EvidenceSet::new(
            vec!["a".into()],
            groups(),
            vec![StudyMoment::new("s", "a", "responder", 1.0, -1.0, 3)],
            vec![],
        );
        assert!(neg_sd.is_err());
    }

    fn two_var(r: Option<f64>) -> EvidenceSet {
        let cors = r
            .map(|r| vec![StudyCorrelation::new("c", "BDI", "YBOCS", r, 100)])
            .unwrap_or_default();
        EvidenceSet::new(
            vec!["BDI".into(), "YBOCS".into()],
            groups(),
            vec![
                StudyMoment::new("s", "BDI", "responder", 16.80, 9.33, 50),
                StudyMoment::new("s", "YBOCS", "responder", 25.38, 5.60, 50),
                StudyMoment::new("s", "BDI", "non_responder", 22.53, 11.20, 50),
                StudyMoment::new("s", "YBOCS", "non_responder", 24.96, 5.82, 50),
            ],
            cors,
        )
        .unwrap()
    }

    #[test]
    fn covariance_from_pooled_correlation() {
        let d = build_class_distribution(&two_var(Some(0.5)), "responder", None).unwrap();
        // 0.5 · 9.33 · 5.60
        assert!((d.sigma[(0, 1)] - 26.124).abs() < 1e-9);
        assert_eq!(d.sigma[(0, 1)], d.sigma[(1, 0)]);
    }

    #[test]
    fn zero_correlation_gives_diagonal() {
        let d = build_class_distribution(&two_var(Some(0.0)), "responder", None).unwrap();
        assert_eq!(d.sigma[(0, 1)], 0.0);
        assert!((d.sigma[(0, 0)] - 9.33 * 9.33).abs() < 1e-12);
    }

    #[test]
    fn absent_correlation_needs_fallback() {
        let ev = two_var(None);
        assert!(matches!(
            build_class_distribution(&ev, "responder", None),
            Err(Error::MissingFallback { .. })
        ));
        let fb = Matrix::from_rows(&[[1.0, 3.5], [3.5, 1.0]]).unwrap();
        let d = build_class_distribution(&ev, "responder", Some(&fb)).unwrap();
        assert_eq!(d.sigma[(0, 1)], 3.5);
        assert!((d.sigma[(0, 0)] - 9.33 * 9.33).abs() < 1e-12);
    }

    #[test]
    fn groups_share_correlations_not_covariances() {
        let ev = two_var(Some(0.4));
        let a = build_class_distribution(&ev, "responder", None).unwrap();
        let b = build_class_distribution(&ev, "non_responder", None).unwrap();
        assert_ne!(a.sigma[(0, 1)], b.sigma[(0, 1)]);
        let ra = a.sigma[(0, 1)] / libm::sqrt(a.sigma[(0, 0)] * a.sigma[(1, 1)]);
        let rb = b.sigma[(0, 1)] / libm::sqrt(b.sigma[(0, 0)] * b.sigma[(1, 1)]);
        assert!((ra - rb).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pooling_is_weight_invariant_and_convex(
            studies in proptest::collection::vec((-50.0f64..50.0, 0.0f64..20.0, 1u32..500, -1.0f64..1.0), 1..8),
            scale in 1u32..20,
        ) {
            let build = |k: u32| {
                let moments = studies
                    .iter()
                    .enumerate()
                    .map(|(i, (m, s, n, _))| StudyMoment::new(format!("s{i}"), "v", "responder", *m, *s, n * k))
                    .collect();
                let cors = studies
                    .iter()
                    .enumerate()
                    .map(|(i, (_, _, n, r))| StudyCorrelation::new(format!("s{i}"), "v", "w", *r, n * k))
                    .collect();
                EvidenceSet::new(vec!["v".into(), "w".into()], groups(), moments, cors).unwrap()
            };
            let base = build(1);
            let scaled = build(scale);
            let a = pool_moments(&base, "v", "responder").unwrap();
            let b = pool_moments(&scaled, "v", "responder").unwrap();
            prop_assert!((a.mean - b.mean).abs() <= 1e-9 * (1.0 + a.mean.abs()));
            prop_assert!((a.variance - b.variance).abs() <= 1e-9 * (1.0 + a.variance));
            let ra = pool_correlation(&base, "v", "w").unwrap();
            let rb = pool_correlation(&scaled, "w", "v").unwrap();
            prop_assert!((ra - rb).abs() <= 1e-12);
            prop_assert_eq!(pool_correlation(&base, "v", "w"), pool_correlation(&base, "w", "v"));

            let lo = studies.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
            let hi = studies.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a.mean >= lo - 1e-9 && a.mean <= hi + 1e-9);
            let vlo = studies.iter().map(|s| s.1 * s.1).fold(f64::INFINITY, f64::min);
            let vhi = studies.iter().map(|s| s.1 * s.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a.variance >= vlo - 1e-9 && a.variance <= vhi + 1e-9);
            prop_assert!(ra.abs() <= 1.0);
        }
    }

    #[test]
    fn select_keeps_only_requested_variables() {
        let ev = two_var(Some(0.3));
        let sub = ev.select(&["YBOCS".to_string()]).unwrap();
        assert_eq!(sub.variables(), &["YBOCS".to_string()]);
        assert!(sub.correlations().is_empty());
        assert_eq!(sub.moments().len(), 2);
        assert!(ev.select(&["nope".to_string()]).is_err());
    }
}
