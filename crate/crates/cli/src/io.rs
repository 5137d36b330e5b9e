//! Delimited-text formats for schemas, datasets and evidence.
//!
//! All files are comma-separated UTF-8 with a header row.
//!
//! | file | columns |
//! |------|---------|
//! | schema | `variable,kind,levels` (kind `continuous` or `categorical`, levels `|`-separated) |
//! | dataset | one column per schema variable, any order |
//! | moments | `study_id,variable,group,mean,sd,n_total,note` (`note` optional) |
//! | correlations | `study_id,var_a,var_b,r,n_total` |

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use simforest_core::{
    Cell, EvidenceSet, FeatureKind, FeatureSchema, FeatureSpec, StudyCorrelation, StudyMoment,
    TabularDataset,
};

use crate::error::{CliResult, CliStage, Failure};

pub const DEFAULT_MISSING_TOKEN: &str = "NA";

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::io(CliStage::Load, path, e))
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Failure::io(CliStage::Write, path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaRow {
    variable: String,
    kind: String,
    #[serde(default)]
    levels: String,
}

pub fn read_schema(path: &Path) -> CliResult<FeatureSchema> {
    let mut specs = Vec::new();
    for (i, row) in reader(path)?.deserialize::<SchemaRow>().enumerate() {
        let row = row.map_err(|e| Failure::io(CliStage::Load, path, e))?;
        let spec = match row.kind.as_str() {
            "continuous" => FeatureSpec::continuous(row.variable),
            "categorical" => FeatureSpec::categorical(
                row.variable,
                row.levels.split('|').map(str::trim).filter(|l| !l.is_empty()),
            ),
            other => {
                return Err(Failure::new(
                    CliStage::Load,
                    format!(
                        "{}: row {}: kind `{other}` is neither continuous nor categorical",
                        path.display(),
                        i + 2
                    ),
                ))
            }
        };
        specs.push(spec);
    }
    Ok(FeatureSchema::new(specs)?)
}

pub fn write_schema(path: &Path, schema: &FeatureSchema) -> CliResult<()> {
    let mut w = writer(path)?;
    for f in schema.features() {
        let (kind, levels) = match &f.kind {
            FeatureKind::Continuous => ("continuous", String::new()),
            FeatureKind::Categorical(l) => ("categorical", l.join("|")),
        };
        w.serialize(SchemaRow {
            variable: f.name.clone(),
            kind: kind.into(),
            levels,
        })
        .map_err(|e| Failure::io(CliStage::Write, path, e))?;
    }
    w.flush().map_err(|e| Failure::io(CliStage::Write, path, e))
}

/// Reads a dataset laid out by `schema`. Empty cells and `missing_token`
/// are missing.
pub fn read_dataset(path: &Path, schema: &FeatureSchema, missing_token: &str) -> CliResult<TabularDataset> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| Failure::io(CliStage::Load, path, e))?
        .clone();
    let mut positions = Vec::with_capacity(schema.len());
    for f in schema.features() {
        match header.iter().position(|h| h == f.name) {
            Some(p) => positions.push(p),
            None => {
                return Err(Failure::new(
                    CliStage::Load,
                    format!("{}: no column for variable `{}`", path.display(), f.name),
                ))
            }
        }
    }
    if let Some(extra) = header.iter().find(|h| schema.index_of(h).is_none()) {
        return Err(Failure::new(
            CliStage::Load,
            format!("{}: column `{extra}` is not in the schema", path.display()),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::io(CliStage::Load, path, e))?;
        let mut row = Vec::with_capacity(schema.len());
        for (f, &p) in schema.features().iter().zip(&positions) {
            let text = rec.get(p).unwrap_or("");
            let cell = if text.is_empty() || text == missing_token {
                Cell::Missing
            } else {
                match f.kind {
                    FeatureKind::Continuous => match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Number(v),
                        _ => {
                            return Err(Failure::new(
                                CliStage::Load,
                                format!(
                                    "{}: line {}: `{}` = `{text}` is not a finite number",
                                    path.display(),
                                    i + 2,
                                    f.name
                                ),
                            ))
                        }
                    },
                    FeatureKind::Categorical(_) => Cell::Category(text.to_string()),
                }
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Ok(TabularDataset::new(schema.clone(), rows, None)?)
}

pub fn write_dataset(path: &Path, data: &TabularDataset, missing_token: &str) -> CliResult<()> {
    let mut w = writer(path)?;
    let err = |e: csv::Error| Failure::io(CliStage::Write, path, e);
    w.write_record(data.schema.features().iter().map(|f| f.name.as_str()))
        .map_err(err)?;
    for row in &data.rows {
        w.write_record(row.iter().map(|c| match c {
            Cell::Number(v) => v.to_string(),
            Cell::Category(s) => s.clone(),
            Cell::Missing => missing_token.to_string(),
        }))
        .map_err(err)?;
    }
    w.flush().map_err(|e| Failure::io(CliStage::Write, path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct MomentRow {
    study_id: String,
    variable: String,
    group: String,
    mean: f64,
    sd: f64,
    n_total: u32,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrelationRow {
    study_id: String,
    var_a: String,
    var_b: String,
    r: f64,
    n_total: u32,
}

pub fn read_moments(path: &Path) -> CliResult<Vec<StudyMoment>> {
    reader(path)?
        .deserialize::<MomentRow>()
        .map(|r| {
            let r = r.map_err(|e| Failure::io(CliStage::Load, path, e))?;
            Ok(StudyMoment {
                study_id: r.study_id,
                variable: r.variable,
                group: r.group,
                mean: r.mean,
                sd: r.sd,
                n_total: r.n_total,
                note: r.note.filter(|n| !n.is_empty()),
            })
        })
        .collect()
}

pub fn read_correlations(path: &Path) -> CliResult<Vec<StudyCorrelation>> {
    reader(path)?
        .deserialize::<CorrelationRow>()
        .map(|r| {
            let r = r.map_err(|e| Failure::io(CliStage::Load, path, e))?;
            Ok(StudyCorrelation::new(r.study_id, r.var_a, r.var_b, r.r, r.n_total))
        })
        .collect()
}

/// Variables in order of first appearance across moments, then correlations.
pub fn evidence_from_records(
    groups: [String; 2],
    moments: Vec<StudyMoment>,
    correlations: Vec<StudyCorrelation>,
) -> CliResult<EvidenceSet> {
    let mut variables: Vec<String> = Vec::new();
    let names = moments
        .iter()
        .map(|m| &m.variable)
        .chain(correlations.iter().flat_map(|c| [&c.var_a, &c.var_b]));
    for v in names {
        if !variables.contains(v) {
            variables.push(v.clone());
        }
    }
    Ok(EvidenceSet::new(variables, groups, moments, correlations)?)
}

pub fn read_evidence(moments: &Path, correlations: Option<&Path>, groups: [String; 2]) -> CliResult<EvidenceSet> {
    let m = read_moments(moments)?;
    let c = match correlations {
        Some(p) => read_correlations(p)?,
        None => Vec::new(),
    };
    evidence_from_records(groups, m, c)
}

pub fn write_moments(path: &Path, moments: &[StudyMoment]) -> CliResult<()> {
    let mut w = writer(path)?;
    for m in moments {
        w.serialize(MomentRow {
            study_id: m.study_id.clone(),
            variable: m.variable.clone(),
            group: m.group.clone(),
            mean: m.mean,
            sd: m.sd,
            n_total: m.n_total,
            note: m.note.clone(),
        })
        .map_err(|e| Failure::io(CliStage::Write, path, e))?;
    }
    w.flush().map_err(|e| Failure::io(CliStage::Write, path, e))
}

pub fn write_correlations(path: &Path, correlations: &[StudyCorrelation]) -> CliResult<()> {
    let mut w = writer(path)?;
    for c in correlations {
        w.serialize(CorrelationRow {
            study_id: c.study_id.clone(),
            var_a: c.var_a.clone(),
            var_b: c.var_b.clone(),
            r: c.r,
            n_total: c.n_total,
        })
        .map_err(|e| Failure::io(CliStage::Write, path, e))?;
    }
    w.flush().map_err(|e| Failure::io(CliStage::Write, path, e))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(CliStage::Write, dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Failure::io(CliStage::Write, path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Failure::io(CliStage::Write, path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_and_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let schema = FeatureSchema::new(vec![
            FeatureSpec::continuous("a"),
            FeatureSpec::categorical("sex", ["f", "m"]),
        ])
        .unwrap();
        let data = TabularDataset::new(
            schema.clone(),
            vec![
                vec![Cell::Number(1.25), Cell::Category("f".into())],
                vec![Cell::Missing, Cell::Category("m".into())],
                vec![Cell::Number(-3.0), Cell::Missing],
            ],
            None,
        )
        .unwrap();
        let sp = dir.path().join("schema.csv");
        let dp = dir.path().join("data.csv");
        write_schema(&sp, &schema).unwrap();
        write_dataset(&dp, &data, "NA").unwrap();
        let schema2 = read_schema(&sp).unwrap();
        assert_eq!(schema2, schema);
        assert_eq!(read_dataset(&dp, &schema2, "NA").unwrap(), data);
    }

    #[test]
    fn bad_number_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let schema = FeatureSchema::new(vec![FeatureSpec::continuous("a")]).unwrap();
        let dp = dir.path().join("data.csv");
        std::fs::write(&dp, "a\n1\nabc\n").unwrap();
        let err = read_dataset(&dp, &schema, "NA").unwrap_err();
        assert_eq!(err.stage, CliStage::Load);
        assert!(err.message.contains("line 3"), "{}", err.message);
    }

    #[test]
    fn evidence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![
            StudyMoment::new("s", "x", "r", 1.0, 2.0, 10),
            StudyMoment::new("s", "x", "n", 1.5, 2.5, 10),
            StudyMoment::new("s", "y", "r", 1.0, 2.0, 10),
        ];
        let c = vec![StudyCorrelation::new("t", "x", "y", 0.25, 40)];
        let mp = dir.path().join("m.csv");
        let cp = dir.path().join("c.csv");
        write_moments(&mp, &m).unwrap();
        write_correlations(&cp, &c).unwrap();
        let ev = read_evidence(&mp, Some(&cp), ["r".into(), "n".into()]).unwrap();
        assert_eq!(ev.variables(), &["x".to_string(), "y".to_string()]);
        assert_eq!(ev.moments(), &m[..]);
        assert_eq!(ev.correlations(), &c[..]);
    }
}
