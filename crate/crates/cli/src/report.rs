//! Output files of a run.

use std::fmt::Write as _;
use std::path::Path;

use simforest_core::mccv::{summarize, ApproachSummary, MccvReport};
use simforest_core::ComparisonResult;

use crate::error::CliResult;
use crate::io::write_text;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const TUNING_FILE: &str = "tuning.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Per-iteration metrics at full precision.
pub fn records_csv(report: &MccvReport) -> String {
    let mut s = String::from(
        "approach,iteration,seed,n_train,n_test,balanced_accuracy,auc,sensitivity,specificity\n",
    );
    for r in &report.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.approach,
            r.iteration,
            r.seed,
            r.n_train,
            r.n_test,
            r.balanced_accuracy,
            r.auc,
            r.sensitivity,
            r.specificity
        );
    }
    s
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Mean and SD per metric and approach, three decimals; `p` is filled on
/// the row of the approach selected by the comparison.
pub fn summary_csv(rows: &[ApproachSummary], comparison: Option<&ComparisonResult>) -> String {
    let mut s = String::from(
        "approach,label,iterations,acc_bal_mean,acc_bal_sd,auc_mean,auc_sd,sens_mean,sens_sd,spec_mean,spec_sd,p\n",
    );
    for r in rows {
        let p = match comparison {
            Some(c) if c.approach_a == r.approach => format!("{:.3}", c.p_one_sided),
            _ => "-".to_string(),
        };
        let _ = write!(s, "{},{},{}", quote(&r.approach), quote(&r.label), r.iterations);
        for j in 0..4 {
            let _ = write!(s, ",{:.3},{:.3}", r.mean[j], r.sd[j]);
        }
        let _ = writeln!(s, ",{p}");
    }
    s
}

pub fn comparison_csv(c: &ComparisonResult) -> String {
    format!(
        "approach_a,approach_b,mean_diff,t_stat,df,p_one_sided\n{},{},{},{},{},{}\n",
        quote(&c.approach_a),
        quote(&c.approach_b),
        c.mean_diff,
        c.t_stat,
        c.df,
        c.p_one_sided
    )
}

pub fn tuning_csv(report: &MccvReport) -> String {
    let mut s = String::from(
        "iteration,training_set,max_features,min_samples_leaf,max_samples,folds,score\n",
    );
    let mut rows: Vec<_> = report.tuning.iter().collect();
    rows.sort_by(|a, b| a.iteration.cmp(&b.iteration).then(a.training_set.cmp(&b.training_set)));
    for t in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.iteration,
            t.training_set,
            t.best.max_features,
            t.best.min_samples_leaf,
            t.best.max_samples_fraction,
            t.folds,
            t.score
        );
    }
    s
}

/// Writes records, summary, tuning and (when present) comparison files.
pub fn write_reports(
    dir: &Path,
    report: &MccvReport,
    comparison: Option<&ComparisonResult>,
    n_core: usize,
    n_extra: usize,
) -> CliResult<Vec<ApproachSummary>> {
    let summary = summarize(report, n_core, n_extra);
    write_text(&dir.join(RECORDS_FILE), &records_csv(report))?;
    write_text(&dir.join(SUMMARY_FILE), &summary_csv(&summary, comparison))?;
    write_text(&dir.join(TUNING_FILE), &tuning_csv(report))?;
    if let Some(c) = comparison {
        write_text(&dir.join(COMPARISON_FILE), &comparison_csv(c))?;
    }
    Ok(summary)
}
