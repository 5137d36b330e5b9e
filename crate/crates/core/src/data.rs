//! Tabular data containers shared by preprocessing, simulation and the
//! MCCV driver.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Continuous,
    /// Ordered category list.
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical(categories.into_iter().map(Into::into).collect()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        for (i, f) in features.iter().enumerate() {
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate variable `{}`",
                    f.name
                )));
            }
            if let FeatureKind::Categorical(cats) = &f.kind {
                if cats.is_empty() {
                    return Err(Error::SchemaMismatch(format!(
                        "categorical variable `{}` has no categories",
                        f.name
                    )));
                }
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Category(String),
    Missing,
}

impl Cell {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Raw table in the variable space of a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<Cell>>,
    pub labels: Option<Vec<u8>>,
}

impl TabularDataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<Cell>>, labels: Option<Vec<u8>>) -> Result<Self> {
        let width = schema.len();
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::SchemaMismatch(format!(
                "row {i} has {} cells, schema has {width} variables",
                rows[i].len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::SchemaMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    rows.len()
                )));
            }
        }
        Ok(TabularDataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn select_rows(&self, indices: &[usize]) -> TabularDataset {
        TabularDataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Observed numeric values of a continuous variable.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown variable `{name}`")))?;
        if self.schema.features()[j].is_categorical() {
            return Err(Error::SchemaMismatch(format!(
                "variable `{name}` is categorical, expected continuous"
            )));
        }
        Ok(self.rows.iter().map(|r| r[j].as_number()).collect())
    }
}

/// Fully numeric table; `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub values: Matrix,
    /// `true` for indicator columns produced from a categorical variable.
    pub categorical: Vec<bool>,
}

impl NumericTable {
    pub fn new(columns: Vec<String>, values: Matrix, categorical: Vec<bool>) -> Result<Self> {
        if columns.len() != values.cols() || categorical.len() != values.cols() {
            return Err(Error::Shape(format!(
                "{} column names and {} flags for {} columns",
                columns.len(),
                categorical.len(),
                values.cols()
            )));
        }
        Ok(NumericTable {
            columns,
            values,
            categorical,
        })
    }

    pub fn continuous(columns: Vec<String>, values: Matrix) -> Result<Self> {
        let flags = alloc::vec![false; columns.len()];
        NumericTable::new(columns, values, flags)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column indices for `names`, in the order given.
    pub fn indices_of(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| Error::SchemaMismatch(format!("unknown column `{n}`")))
            })
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.values.as_slice().iter().any(|v| v.is_nan())
    }

    pub fn select_rows(&self, indices: &[usize]) -> NumericTable {
        NumericTable {
            columns: self.columns.clone(),
            values: self.values.select_rows(indices),
            categorical: self.categorical.clone(),
        }
    }

    pub fn select_columns(&self, indices: &[usize]) -> NumericTable {
        NumericTable {
            columns: indices.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select_columns(indices),
            categorical: indices.iter().map(|&j| self.categorical[j]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn schema_rejects_duplicates_and_empty_categories() {
        let dup = FeatureSchema::new(vec![
            FeatureSpec::continuous("a"),
            FeatureSpec::continuous("a"),
        ]);
        assert!(matches!(dup, Err(Error::SchemaMismatch(_))));
        let empty = FeatureSchema::new(vec![FeatureSpec::categorical::<&str>("c", [])]);
        assert!(matches!(empty, Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn dataset_checks_row_width() {
        let schema = FeatureSchema::new(vec![FeatureSpec::continuous("a")]).unwrap();
        let bad = TabularDataset::new(schema, vec![vec![Cell::Missing, Cell::Missing]], None);
        assert!(bad.is_err());
    }
}
