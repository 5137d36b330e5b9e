//! Synthetic pseudo-real dataset and literature evidence for desk runs.
//!
//! The dataset mimics an OCD treatment cohort: baseline symptom scores,
//! demographics, a few categorical covariates and a post-treatment YBOCS
//! score from which responder labels are derived. Feature distributions are
//! class-conditional normals; the evidence describes a related but not
//! identical population, as published summaries would.

use std::path::Path;

use rand::Rng;
use simforest_core::cohort::{nearest_psd, sample_mvnd, PSD_EPS};
use simforest_core::rng::{rng_from, shuffle, substream};
use simforest_core::{
    Cell, ClassDistribution, FeatureSchema, FeatureSpec, Matrix, StudyCorrelation, StudyMoment,
    TabularDataset,
};

use crate::error::CliResult;
use crate::io;

pub const SCORE_PRE: &str = "YBOCS";
pub const SCORE_POST: &str = "YBOCS_post";
pub const CORE_VARIABLES: [&str; 6] = ["YBOCS", "BDI-II", "GAF", "OCI-R", "Onset", "Age"];
pub const EXTRA_VARIABLES: [&str; 1] = ["MADRS"];
const OTHER_CONTINUOUS: [&str; 2] = ["Duration", "WSAS"];
pub const POSITIVE_GROUP: &str = "responder";
pub const NEGATIVE_GROUP: &str = "non_responder";

pub const DATASET_FILE: &str = "dataset.csv";
pub const SCHEMA_FILE: &str = "schema.csv";
pub const MOMENTS_FILE: &str = "evidence_moments.csv";
pub const CORRELATIONS_FILE: &str = "evidence_correlations.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOptions {
    pub seed: u64,
    pub rows: usize,
    /// Share of responders before label noise.
    pub prevalence: f64,
    /// Probability of flipping a row's outcome class after its features
    /// are drawn.
    pub label_noise: f64,
    /// MCAR probability per feature cell; outcome scores stay complete.
    pub missingness: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            seed: 463,
            rows: 463,
            prevalence: 0.72,
            label_noise: 0.0,
            missingness: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub dataset: TabularDataset,
    pub moments: Vec<StudyMoment>,
    pub correlations: Vec<StudyCorrelation>,
    /// Outcome class each row's features were drawn from.
    pub true_class: Vec<u8>,
}

// Generating moments of the pseudo-real data: (responder, non-responder)
// as (mean, sd), over CORE ++ EXTRA ++ OTHER_CONTINUOUS.
const DATA_MOMENTS: [((f64, f64), (f64, f64)); 9] = [
    ((23.70, 5.12), (20.84, 5.97)),
    ((18.63, 10.96), (18.05, 10.19)),
    ((55.46, 10.22), (56.12, 10.05)),
    ((27.36, 11.67), (27.40, 13.20)),
    ((18.14, 9.74), (18.28, 8.83)),
    ((32.85, 10.62), (32.94, 9.11)),
    ((21.00, 8.20), (22.60, 8.90)),
    ((13.90, 9.50), (14.70, 9.90)),
    ((21.50, 8.40), (23.00, 8.00)),
];

// Upper triangle of the generating correlation matrix, row by row.
const DATA_CORRELATIONS: [f64; 36] = [
    // YBOCS with BDI-II, GAF, OCI-R, Onset, Age, MADRS, Duration, WSAS
    0.35, -0.30, 0.45, -0.05, 0.05, 0.35, 0.10, 0.40,
    // BDI-II
    -0.40, 0.40, 0.00, 0.05, 0.70, 0.05, 0.45,
    // GAF
    -0.25, 0.05, 0.00, -0.45, -0.10, -0.50,
    // OCI-R
    -0.05, -0.10, 0.35, 0.05, 0.35,
    // Onset
    0.55, 0.00, -0.45, 0.00,
    // Age
    0.00, 0.60, 0.00,
    // MADRS
    0.05, 0.40,
    // Duration
    0.10,
];

// Literature moments: (responder, non-responder) for the core variables.
const LITERATURE_MOMENTS: [((f64, f64), (f64, f64)); 6] = [
    ((25.38, 5.60), (24.96, 5.82)),
    ((16.80, 9.33), (22.53, 11.20)),
    ((59.11, 7.08), (57.85, 8.28)),
    ((26.07, 12.12), (26.47, 12.93)),
    ((18.92, 8.00), (16.57, 8.76)),
    ((30.43, 8.98), (33.61, 10.76)),
];
const LITERATURE_N: u32 = 716;

fn continuous_names() -> Vec<String> {
    CORE_VARIABLES
        .iter()
        .chain(EXTRA_VARIABLES.iter())
        .chain(OTHER_CONTINUOUS.iter())
        .map(|s| s.to_string())
        .collect()
}

pub fn schema() -> FeatureSchema {
    let mut specs: Vec<FeatureSpec> = vec![FeatureSpec::continuous(SCORE_PRE), FeatureSpec::continuous(SCORE_POST)];
    specs.extend(continuous_names().into_iter().skip(1).map(FeatureSpec::continuous));
    specs.push(FeatureSpec::categorical("Sex", ["female", "male"]));
    specs.push(FeatureSpec::categorical("Comorbidity", ["none", "depression", "anxiety"]));
    specs.push(FeatureSpec::categorical("Medication", ["no", "yes"]));
    FeatureSchema::new(specs).expect("fixture schema is valid")
}

fn class_distribution(class: u8) -> simforest_core::Result<ClassDistribution> {
    let vars = continuous_names();
    let p = vars.len();
    let moments: Vec<(f64, f64)> = DATA_MOMENTS
        .iter()
        .map(|(r, n)| if class == 1 { *r } else { *n })
        .collect();
    let mut sigma = Matrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        sigma[(i, i)] = moments[i].1 * moments[i].1;
        for j in i + 1..p {
            let c = DATA_CORRELATIONS[k] * moments[i].1 * moments[j].1;
            sigma[(i, j)] = c;
            sigma[(j, i)] = c;
            k += 1;
        }
    }
    let sigma = nearest_psd(&sigma, PSD_EPS)?;
    let group = if class == 1 { POSITIVE_GROUP } else { NEGATIVE_GROUP };
    ClassDistribution::new(group, vars, moments.iter().map(|m| m.0).collect(), sigma)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn pick<R: Rng>(rng: &mut R, levels: &[&str], probs: &[f64]) -> String {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, p) in levels.iter().zip(probs) {
        acc += p;
        if u < acc {
            return l.to_string();
        }
    }
    levels[levels.len() - 1].to_string()
}

pub fn literature_moments() -> Vec<StudyMoment> {
    let mut out = Vec::new();
    for (v, (r, n)) in CORE_VARIABLES.iter().zip(LITERATURE_MOMENTS) {
        out.push(StudyMoment::new("pooled_literature", *v, POSITIVE_GROUP, r.0, r.1, LITERATURE_N));
        out.push(StudyMoment::new("pooled_literature", *v, NEGATIVE_GROUP, n.0, n.1, LITERATURE_N));
    }
    let note = Some("pharmacological treatment sample".to_string());
    for (group, mean, sd) in [(POSITIVE_GROUP, 20.40, 7.60), (NEGATIVE_GROUP, 24.90, 8.10)] {
        let mut m = StudyMoment::new("madrs_reference", "MADRS", group, mean, sd, 64);
        m.note = note.clone();
        out.push(m);
    }
    out
}

/// Pairwise correlations from three pseudo-studies. OCI-R is never
/// correlated with Onset or GAF, and MADRS only with YBOCS, BDI-II and GAF,
/// so those pairs fall back to the training split.
pub fn literature_correlations() -> Vec<StudyCorrelation> {
    let a = [
        ("YBOCS", "BDI-II", 0.38),
        ("YBOCS", "GAF", -0.28),
        ("YBOCS", "OCI-R", 0.41),
        ("BDI-II", "GAF", -0.43),
        ("BDI-II", "OCI-R", 0.44),
        ("Onset", "Age", 0.51),
        ("YBOCS", "Onset", -0.08),
        ("YBOCS", "Age", 0.02),
        ("BDI-II", "Age", 0.06),
        ("GAF", "Age", 0.03),
        ("OCI-R", "Age", -0.12),
    ];
    let b = [
        ("YBOCS", "BDI-II", 0.31),
        ("YBOCS", "OCI-R", 0.49),
        ("BDI-II", "Onset", 0.02),
        ("GAF", "Onset", 0.07),
        ("Onset", "Age", 0.60),
    ];
    let m = [("MADRS", "BDI-II", 0.72), ("MADRS", "YBOCS", 0.33), ("MADRS", "GAF", -0.41)];
    let mut out = Vec::new();
    for (study, n, pairs) in [("corr_a", 212, &a[..]), ("corr_b", 135, &b[..]), ("corr_madrs", 180, &m[..])] {
        for (x, y, r) in pairs {
            out.push(StudyCorrelation::new(study, *x, *y, *r, n));
        }
    }
    out
}

pub fn generate(opts: &FixtureOptions) -> simforest_core::Result<Fixture> {
    if !(opts.prevalence > 0.0 && opts.prevalence < 1.0) {
        return Err(simforest_core::Error::InvalidConfig(format!(
            "prevalence {} outside (0, 1)",
            opts.prevalence
        )));
    }
    for (name, p) in [("label_noise", opts.label_noise), ("missingness", opts.missingness)] {
        if !(0.0..1.0).contains(&p) {
            return Err(simforest_core::Error::InvalidConfig(format!("{name} {p} outside [0, 1)")));
        }
    }
    let n = opts.rows;
    let n_pos = ((opts.prevalence * n as f64).round() as usize).min(n);
    let mut true_class: Vec<u8> = (0..n).map(|i| u8::from(i < n_pos)).collect();
    shuffle(&mut rng_from(substream(opts.seed, "classes")), &mut true_class);

    let pos = class_distribution(1)?;
    let neg = class_distribution(0)?;
    let mut rng = rng_from(substream(opts.seed, "features"));
    let xp = sample_mvnd(&pos, n_pos, &mut rng)?;
    let xn = sample_mvnd(&neg, n - n_pos, &mut rng)?;

    let mut cat_rng = rng_from(substream(opts.seed, "categories"));
    let mut outcome_rng = rng_from(substream(opts.seed, "outcome"));
    let mut miss_rng = rng_from(substream(opts.seed, "missing"));
    let schema = schema();
    let (mut ip, mut ineg) = (0, 0);
    let mut rows = Vec::with_capacity(n);
    for &class in &true_class {
        let x = if class == 1 {
            ip += 1;
            xp.row(ip - 1)
        } else {
            ineg += 1;
            xn.row(ineg - 1)
        };
        let observed = if outcome_rng.random::<f64>() < opts.label_noise {
            1 - class
        } else {
            class
        };
        let pre = round2(x[0].max(0.0));
        let drop = if observed == 1 {
            9.0 + 7.0 * outcome_rng.random::<f64>()
        } else {
            4.0 * outcome_rng.random::<f64>()
        };
        let post = round2((pre - drop).max(0.0));
        let mut row = vec![Cell::Number(pre), Cell::Number(post)];
        row.extend(x[1..].iter().map(|&v| Cell::Number(round2(v))));
        let (comorb, med) = if class == 1 {
            ([0.60, 0.25, 0.15], 0.40)
        } else {
            ([0.45, 0.35, 0.20], 0.50)
        };
        row.push(Cell::Category(pick(&mut cat_rng, &["female", "male"], &[0.55, 0.45])));
        row.push(Cell::Category(pick(&mut cat_rng, &["none", "depression", "anxiety"], &comorb)));
        row.push(Cell::Category(pick(&mut cat_rng, &["no", "yes"], &[1.0 - med, med])));
        // outcome scores (columns 0 and 1) stay complete
        for cell in row.iter_mut().skip(2) {
            if miss_rng.random::<f64>() < opts.missingness {
                *cell = Cell::Missing;
            }
        }
        rows.push(row);
    }
    Ok(Fixture {
        dataset: TabularDataset::new(schema, rows, None)?,
        moments: literature_moments(),
        correlations: literature_correlations(),
        true_class,
    })
}

fn quoted_list(items: &[&str]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("\"{s}\"")).collect();
    format!("[{}]", inner.join(", "))
}

/// Desk-scale configuration: 10 iterations, 50 trees, the standard forest
/// and six hybrid approaches, all with SMOTE-NC.
pub fn desk_config(seed: u64) -> String {
    let mut s = format!(
        r#"# Desk-scale MCCV on the synthetic fixture.
dataset = "{DATASET_FILE}"
schema = "{SCHEMA_FILE}"
evidence_moments = "{MOMENTS_FILE}"
evidence_correlations = "{CORRELATIONS_FILE}"
out_dir = "out"

iterations = 10
test_fraction = 0.2
master_seed = {seed}
n_trees = 50
tuning_trees = 20
folds = 5

outcome = "response"
score_pre = "{SCORE_PRE}"
score_post = "{SCORE_POST}"
reliability = 0.8
rci_cutoff = 1.96

positive_group = "{POSITIVE_GROUP}"
negative_group = "{NEGATIVE_GROUP}"
core_variables = {core}
extra_variables = {extra}

baseline = "standard"

[[approach]]
mode = "standard"
balancing = "smote"
"#,
        core = quoted_list(&CORE_VARIABLES),
        extra = quoted_list(&EXTRA_VARIABLES),
    );
    for dataset in ["features_of_interest", "all_features"] {
        for weight in ["0.2", "0.5", "1.0"] {
            s.push_str(&format!(
                "\n[[approach]]\nmode = \"hybrid\"\ndataset = \"{dataset}\"\nweight = {weight}\nbalancing = \"smote\"\n"
            ));
        }
    }
    s
}

/// Writes dataset, schema, evidence files and the desk config into `dir`.
pub fn write_fixture(dir: &Path, fixture: &Fixture, seed: u64) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| crate::error::Failure::io(crate::error::CliStage::Write, dir, e))?;
    io::write_schema(&dir.join(SCHEMA_FILE), &fixture.dataset.schema)?;
    io::write_dataset(&dir.join(DATASET_FILE), &fixture.dataset, io::DEFAULT_MISSING_TOKEN)?;
    io::write_moments(&dir.join(MOMENTS_FILE), &fixture.moments)?;
    io::write_correlations(&dir.join(CORRELATIONS_FILE), &fixture.correlations)?;
    io::write_text(&dir.join(CONFIG_FILE), &desk_config(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fixture_shape() {
        let f = generate(&FixtureOptions::default()).unwrap();
        assert_eq!(f.dataset.len(), 463);
        assert_eq!(f.true_class.iter().filter(|&&c| c == 1).count(), 333);
        let missing = f
            .dataset
            .rows
            .iter()
            .flat_map(|r| r.iter().skip(2))
            .filter(|c| c.is_missing())
            .count();
        let cells = 463 * (f.dataset.schema.len() - 2);
        let rate = missing as f64 / cells as f64;
        assert!((rate - 0.05).abs() < 0.015, "missing rate {rate}");
        assert!(f.dataset.rows.iter().all(|r| !r[0].is_missing() && !r[1].is_missing()));
    }

    #[test]
    fn same_seed_same_fixture() {
        let o = FixtureOptions::default();
        assert_eq!(generate(&o).unwrap(), generate(&o).unwrap());
        let other = FixtureOptions { seed: 1, ..o };
        assert_ne!(generate(&other).unwrap().dataset, generate(&FixtureOptions::default()).unwrap().dataset);
    }
}
