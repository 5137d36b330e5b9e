//! Command implementations: run, validate and make-fixture.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use simforest_core::mccv::{input_findings, prepare, run_iteration, ApproachSummary, MccvReport};
use simforest_core::{compare_best, ComparisonResult, Error, EvidenceSet, RunConfig, TabularDataset};

use crate::config::{load_config, LoadedConfig};
use crate::error::{CliResult, CliStage, Failure};
use crate::fixture::{self, FixtureOptions};
use crate::io;
use crate::report::{self, MANIFEST_FILE};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Replaces the configured output directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Inputs {
    pub evidence: EvidenceSet,
    pub data: TabularDataset,
}

pub fn load_inputs(cfg: &LoadedConfig) -> CliResult<Inputs> {
    let f = &cfg.file;
    let schema = io::read_schema(&f.schema)?;
    let data = io::read_dataset(&f.dataset, &schema, &f.missing_token)?;
    let evidence = io::read_evidence(
        &f.evidence_moments,
        f.evidence_correlations.as_deref(),
        [cfg.run.positive_group.clone(), cfg.run.negative_group.clone()],
    )?;
    Ok(Inputs { evidence, data })
}

fn finding_stage(e: &Error) -> CliStage {
    match e {
        Error::InvalidConfig(_) | Error::InvalidWeight(_) | Error::InsufficientIterations(_) => {
            CliStage::Parse
        }
        _ => CliStage::Load,
    }
}

/// Every problem that would stop a run before its first iteration.
pub fn findings(cfg: &LoadedConfig, inputs: &Inputs) -> Vec<(CliStage, Error)> {
    let mut out: Vec<(CliStage, Error)> = input_findings(&cfg.run, &inputs.evidence, &inputs.data)
        .into_iter()
        .map(|e| (finding_stage(&e), e))
        .collect();
    if cfg.run.approach(&cfg.file.baseline).is_none() {
        out.push((
            CliStage::Parse,
            Error::InvalidConfig(format!("baseline `{}` is not a configured approach", cfg.file.baseline)),
        ));
    }
    if out.is_empty() {
        if let Err(e) = prepare(&cfg.run, &inputs.evidence, &inputs.data) {
            let stage = if e.stage().is_some() { CliStage::Label } else { CliStage::Load };
            out.push((stage, e));
        }
    }
    out
}

/// MCCV with iterations spread over a thread pool. Output does not depend
/// on the thread count.
pub fn run_parallel(
    run: &RunConfig,
    evidence: &EvidenceSet,
    data: &TabularDataset,
    threads: Option<usize>,
) -> CliResult<MccvReport> {
    let prepared = prepare(run, evidence, data)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::new(CliStage::Parse, format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        (0..run.iterations)
            .into_par_iter()
            .map(|i| run_iteration(run, evidence, &prepared, i, false))
            .collect::<simforest_core::Result<Vec<_>>>()
    })?;
    Ok(MccvReport::assemble(run, &prepared, outcomes)?)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub report: MccvReport,
    pub comparison: Option<ComparisonResult>,
    pub summary: Vec<ApproachSummary>,
}

pub fn execute_run(config_path: &Path, opts: &RunOptions) -> CliResult<RunOutput> {
    let cfg = load_config(config_path, opts.out.as_deref())?;
    if let Ok(level) = cfg.file.log_level.parse::<log::LevelFilter>() {
        log::set_max_level(level);
    }
    let inputs = load_inputs(&cfg)?;
    if let Some((stage, e)) = findings(&cfg, &inputs).into_iter().next() {
        let mut f = Failure::core(e);
        f.stage = stage;
        return Err(f);
    }
    let run = &cfg.run;
    info!(
        "{} rows, {} approaches, {} iterations, master seed {}",
        inputs.data.len(),
        run.approaches.len(),
        run.iterations,
        run.master_seed
    );
    let report = run_parallel(run, &inputs.evidence, &inputs.data, opts.threads)?;
    if report.n_dropped > 0 {
        warn!("{} rows dropped for a missing outcome score", report.n_dropped);
    }
    for w in &report.encoding_warnings {
        warn!("row {}: unseen category `{}` for `{}`", w.row, w.value, w.variable);
    }
    for a in &run.approaches {
        for r in report.records_for(&a.id) {
            info!(
                "iteration {:>3} {:<28} bacc {:.3} auc {:.3} sens {:.3} spec {:.3}",
                r.iteration, r.approach, r.balanced_accuracy, r.auc, r.sensitivity, r.specificity
            );
        }
    }
    let comparison = if run
        .approaches
        .iter()
        .any(|a| a.is_hybrid() && Some(a.balancing) == run.approach(&cfg.file.baseline).map(|b| b.balancing))
    {
        match compare_best(&report, &cfg.file.baseline) {
            Ok(c) => {
                info!(
                    "{} vs {}: mean diff {:.3}, t({}) = {:.2}, p = {:.3}",
                    c.approach_a, c.approach_b, c.mean_diff, c.df, c.t_stat, c.p_one_sided
                );
                Some(c)
            }
            Err(e) => {
                warn!("comparison skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    let out_dir = cfg.file.out_dir.clone();
    let summary = report::write_reports(
        &out_dir,
        &report,
        comparison.as_ref(),
        run.core_variables.len(),
        run.extra_variables.len(),
    )?;
    let manifest = format!(
        "# simforest run manifest; usable as a config to reproduce this run\n{}",
        cfg.file.to_toml()?
    );
    io::write_text(&out_dir.join(MANIFEST_FILE), &manifest)?;
    info!("reports written to {}", out_dir.display());
    Ok(RunOutput {
        out_dir,
        report,
        comparison,
        summary,
    })
}

/// All findings for a config, as printable lines. Empty means runnable.
pub fn execute_validate(config_path: &Path, opts: &RunOptions) -> Vec<String> {
    let cfg = match load_config(config_path, opts.out.as_deref()) {
        Ok(c) => c,
        Err(e) => return vec![e.to_string()],
    };
    let inputs = match load_inputs(&cfg) {
        Ok(i) => i,
        Err(e) => return vec![e.to_string()],
    };
    findings(&cfg, &inputs)
        .into_iter()
        .map(|(stage, e)| format!("[stage={stage}] {}: {e}", error_kind(&e)))
        .collect()
}

/// Variant name of a core error, for findings.
pub fn error_kind(e: &Error) -> &'static str {
    match e.root() {
        Error::MissingEvidence { .. } => "MissingEvidence",
        Error::MissingFallback { .. } => "MissingFallback",
        Error::InvalidEvidence(_) => "InvalidEvidence",
        Error::Shape(_) => "Shape",
        Error::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
        Error::SchemaMismatch(_) => "SchemaMismatch",
        Error::InsufficientData(_) => "InsufficientData",
        Error::EmptyColumn(_) => "EmptyColumn",
        Error::DegenerateReliability => "DegenerateReliability",
        Error::SingleClass => "SingleClass",
        Error::InvalidWeight(_) => "InvalidWeight",
        Error::EmptyData => "EmptyData",
        Error::Stratification { .. } => "Stratification",
        Error::UndefinedRate(_) => "UndefinedRate",
        Error::InsufficientIterations(_) => "InsufficientIterations",
        Error::DegenerateVariance => "DegenerateVariance",
        Error::Pairing(_) => "Pairing",
        Error::InvalidConfig(_) => "InvalidConfig",
        Error::Context { .. } => "Context",
    }
}

pub fn execute_make_fixture(out: &Path, opts: &FixtureOptions) -> CliResult<fixture::Fixture> {
    let f = fixture::generate(opts).map_err(|e| Failure::new(CliStage::Parse, e.to_string()))?;
    fixture::write_fixture(out, &f, opts.seed)?;
    info!("fixture with {} rows written to {}", f.dataset.len(), out.display());
    Ok(f)
}
