//! Classification metrics and the corrected resampled t-test.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn sensitivity(&self) -> Result<f64> {
        let p = self.tp + self.fn_;
        if p == 0 {
            return Err(Error::UndefinedRate("sensitivity"));
        }
        Ok(self.tp as f64 / p as f64)
    }

    pub fn specificity(&self) -> Result<f64> {
        let n = self.tn + self.fp;
        if n == 0 {
            return Err(Error::UndefinedRate("specificity"));
        }
        Ok(self.tn as f64 / n as f64)
    }

    pub fn balanced_accuracy(&self) -> Result<f64> {
        Ok(balanced_accuracy(self.sensitivity()?, self.specificity()?))
    }
}

pub fn balanced_accuracy(sensitivity: f64, specificity: f64) -> f64 {
    (sensitivity + specificity) / 2.0
}

fn check_binary(name: &str, v: &[u8]) -> Result<()> {
    if v.iter().any(|&x| x > 1) {
        return Err(Error::Shape(format!("{name} must be 0 or 1")));
    }
    Ok(())
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<Confusion> {
    if labels.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    check_binary("labels", labels)?;
    check_binary("predictions", predictions)?;
    let mut c = Confusion::default();
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fn_ += 1,
            (_, 1) => c.fp += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    check_binary("labels", labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Shape("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 {
        return Err(Error::UndefinedRate("auroc: no positive labels"));
    }
    if neg == 0 {
        return Err(Error::UndefinedRate("auroc: no negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann-Whitney U, kept integral
    let mut u2: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        u2 += 2 * gp * neg_below + gp * gn;
        neg_below += gn;
        i = j;
    }
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub approach_a: String,
    pub approach_b: String,
    /// Mean of `a − b` over paired iterations.
    pub mean_diff: f64,
    pub t_stat: f64,
    pub df: usize,
    /// Upper-tail probability of `t_stat` under Student's t with `df`.
    pub p_one_sided: f64,
}

/// Corrected resampled t-test on paired per-split differences.
///
/// The variance of the mean difference is inflated to
/// `(1/k + n_test/n_train)·s²` to account for overlapping training sets.
/// Approach names are left empty; [`crate::mccv::compare_best`] fills them.
pub fn corrected_resampled_ttest(diffs: &[f64], n_train: usize, n_test: usize) -> Result<ComparisonResult> {
    let k = diffs.len();
    if k < 2 {
        return Err(Error::InsufficientIterations(k));
    }
    if n_train == 0 {
        return Err(Error::InvalidConfig("n_train must be positive".into()));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Shape("non-finite difference".into()));
    }
    let kf = k as f64;
    let mean = diffs.iter().sum::<f64>() / kf;
    let s2 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (kf - 1.0);
    let df = k - 1;
    let (t, p) = if s2 == 0.0 {
        if mean != 0.0 {
            return Err(Error::DegenerateVariance);
        }
        (0.0, 0.5)
    } else {
        let t = mean / libm::sqrt((1.0 / kf + n_test as f64 / n_train as f64) * s2);
        (t, student_t_upper(t, df as f64))
    };
    Ok(ComparisonResult {
        approach_a: String::new(),
        approach_b: String::new(),
        mean_diff: mean,
        t_stat: t,
        df,
        p_one_sided: p,
    })
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_upper(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(x, df / 2.0, 0.5);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `I_x(a, b)` by Lentz's continued fraction, using the symmetry relation
/// where the fraction converges slowly.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn brute_auc(labels: &[u8], scores: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut pairs = 0u64;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1;
                    if scores[i] > scores[j] {
                        s += 1.0;
                    } else if scores[i] == scores[j] {
                        s += 0.5;
                    }
                }
            }
        }
        s / pairs as f64
    }

    #[test]
    fn rates() {
        let c = confusion(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c.balanced_accuracy().unwrap(), 1.0);
        let c = confusion(&[1, 1, 0, 0, 0], &[1; 5]).unwrap();
        assert_eq!(c.sensitivity().unwrap(), 1.0);
        assert_eq!(c.specificity().unwrap(), 0.0);
        assert_eq!(c.balanced_accuracy().unwrap(), 0.5);
        assert!((balanced_accuracy(0.924, 0.128) - 0.526).abs() < 5e-4);
        let c = confusion(&[1, 1], &[1, 0]).unwrap();
        assert_eq!(c.specificity(), Err(Error::UndefinedRate("specificity")));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auroc(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1]).unwrap(), 0.75);
        assert_eq!(auroc(&[0, 0, 1, 1], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auroc(&[0, 1, 1, 0], &[0.5; 4]).unwrap(), 0.5);
        assert!(matches!(auroc(&[1, 1], &[0.1, 0.2]), Err(Error::UndefinedRate(_))));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..2, 0u8..20), 2..200)
        ) {
            let labels: Vec<u8> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.1) / 19.0).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(auroc(&labels, &scores).unwrap(), brute_auc(&labels, &scores));
        }

        #[test]
        fn t_invariant_to_shift_of_both_scores(
            a in prop::collection::vec(0.3f64..0.7, 3..40),
            noise in prop::collection::vec(-0.05f64..0.05, 40),
            shift in -0.2f64..0.2,
        ) {
            let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
            let d1: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let d2: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + shift) - (y + shift)).collect();
            let r1 = corrected_resampled_ttest(&d1, 370, 93).unwrap();
            let r2 = corrected_resampled_ttest(&d2, 370, 93).unwrap();
            prop_assert!((r1.t_stat - r2.t_stat).abs() < 1e-6 * (1.0 + r1.t_stat.abs()));
        }
    }

    #[test]
    fn ttest_trivial_cases() {
        let r = corrected_resampled_ttest(&[0.0; 100], 370, 93).unwrap();
        assert_eq!((r.t_stat, r.df, r.p_one_sided), (0.0, 99, 0.5));
        assert_eq!(
            corrected_resampled_ttest(&[0.1], 10, 2),
            Err(Error::InsufficientIterations(1))
        );
        assert_eq!(
            corrected_resampled_ttest(&[0.1, 0.1], 10, 2),
            Err(Error::DegenerateVariance)
        );
    }

    #[test]
    fn ttest_hand_example() {
        let d = [0.01, 0.03, -0.01, 0.05];
        let r = corrected_resampled_ttest(&d, 400, 100).unwrap();
        // mean 0.02, s² = 0.0020/3
        let t = 0.02 / ((0.25f64 + 0.25) * (0.002 / 3.0)).sqrt();
        assert!((r.t_stat - t).abs() < 1e-12);
        assert_eq!(r.df, 3);
        // df = 3 has a closed form
        let x = t / 3f64.sqrt();
        let cdf = 0.5
            + (x / (1.0 + x * x) + x.atan()) / core::f64::consts::PI;
        assert!((r.p_one_sided - (1.0 - cdf)).abs() < 1e-12);
    }

    #[test]
    fn converges_to_paired_t() {
        let d: Vec<f64> = (0..30).map(|i| 0.01 * ((i * 7 % 11) as f64 - 4.0)).collect();
        let k = d.len() as f64;
        let m = d.iter().sum::<f64>() / k;
        let s2 = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
        let classical = m / (s2 / k).sqrt();
        let r = corrected_resampled_ttest(&d, 1_000_000_000, 1).unwrap();
        assert!((r.t_stat / classical - 1.0).abs() < 1e-6);
    }

    #[test]
    fn t_tail_values() {
        // df = 1 is Cauchy
        let t: f64 = 1.7;
        let p = 0.5 - t.atan() / core::f64::consts::PI;
        assert!((student_t_upper(t, 1.0) - p).abs() < 1e-14);
        assert!((student_t_upper(-t, 1.0) - (1.0 - p)).abs() < 1e-14);
        // df = 2: P(T > t) = (1 - t/sqrt(t²+2)) / 2
        for t in [0.1, 0.89, 2.04, 8.0] {
            let p = 0.5 * (1.0 - t / (t * t + 2.0f64).sqrt());
            assert!((student_t_upper(t, 2.0) - p).abs() < 1e-14, "t = {t}");
        }
    }
}
