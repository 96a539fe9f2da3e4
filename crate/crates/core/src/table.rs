//! Column-oriented observation table feeding the model fitters.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::metrics::{H1Row, H2Row};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("column {0:?} not found")]
    NoSuchColumn(String),
    #[error("column {0:?} already exists")]
    DuplicateColumn(String),
    #[error("column {name:?} has {got} rows, table has {expected}")]
    LengthMismatch {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("column {0:?} is not numeric")]
    NotNumeric(String),
    #[error("column {0:?} is not categorical")]
    NotCategorical(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Long-format data: named columns of equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationTable {
    columns: Vec<(String, Column)>,
    rows: usize,
}

impl ObservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn push_column(&mut self, name: &str, column: Column) -> Result<(), TableError> {
        if self.columns.iter().any(|(n, _)| n == name) {
            return Err(TableError::DuplicateColumn(name.to_owned()));
        }
        if self.columns.is_empty() {
            self.rows = column.len();
        } else if column.len() != self.rows {
            return Err(TableError::LengthMismatch {
                name: name.to_owned(),
                got: column.len(),
                expected: self.rows,
            });
        }
        self.columns.push((name.to_owned(), column));
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&Column, TableError> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| TableError::NoSuchColumn(name.to_owned()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], TableError> {
        match self.column(name)? {
            Column::Numeric(values) => Ok(values),
            Column::Categorical(_) => Err(TableError::NotNumeric(name.to_owned())),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<&[String], TableError> {
        match self.column(name)? {
            Column::Categorical(values) => Ok(values),
            Column::Numeric(_) => Err(TableError::NotCategorical(name.to_owned())),
        }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    /// Distinct values of a categorical column, sorted.
    pub fn levels(&self, name: &str) -> Result<Vec<String>, TableError> {
        let values = self.categorical(name)?;
        let set: BTreeSet<&str> = values.iter().map(String::as_str).collect();
        Ok(set.into_iter().map(str::to_owned).collect())
    }

    /// Replace a numeric column's values (same length).
    pub fn replace_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<(), TableError> {
        if values.len() != self.rows {
            return Err(TableError::LengthMismatch {
                name: name.to_owned(),
                got: values.len(),
                expected: self.rows,
            });
        }
        for (n, column) in &mut self.columns {
            if n == name {
                return match column {
                    Column::Numeric(v) => {
                        *v = values;
                        Ok(())
                    }
                    Column::Categorical(_) => Err(TableError::NotNumeric(name.to_owned())),
                };
            }
        }
        Err(TableError::NoSuchColumn(name.to_owned()))
    }

    /// Table with columns `contention`, `entropy`, `topic_id`.
    pub fn from_h1_rows(rows: &[H1Row]) -> Self {
        let mut table = Self::new();
        table
            .push_column(
                "contention",
                Column::Numeric(rows.iter().map(|r| r.contention).collect()),
            )
            .expect("fresh table");
        table
            .push_column(
                "entropy",
                Column::Numeric(rows.iter().map(|r| r.entropy).collect()),
            )
            .expect("length matches");
        table
            .push_column(
                "topic_id",
                Column::Categorical(rows.iter().map(|r| r.topic_id.clone()).collect()),
            )
            .expect("length matches");
        table
    }

    /// Table with columns `alignment`, `group`, `topic_id`.
    pub fn from_h2_rows(rows: &[H2Row]) -> Self {
        let mut table = Self::new();
        table
            .push_column(
                "alignment",
                Column::Numeric(rows.iter().map(|r| r.alignment).collect()),
            )
            .expect("fresh table");
        table
            .push_column(
                "group",
                Column::Categorical(rows.iter().map(|r| r.group_id.clone()).collect()),
            )
            .expect("length matches");
        table
            .push_column(
                "topic_id",
                Column::Categorical(rows.iter().map(|r| r.topic_id.clone()).collect()),
            )
            .expect("length matches");
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_read_columns() {
        let mut table = ObservationTable::new();
        table
            .push_column("y", Column::Numeric(vec![1.0, 2.0]))
            .unwrap();
        table
            .push_column(
                "g",
                Column::Categorical(vec!["a".into(), "b".into()]),
            )
            .unwrap();
        assert_eq!(table.n_rows(), 2);
        assert_eq!(table.numeric("y").unwrap(), &[1.0, 2.0]);
        assert_eq!(table.levels("g").unwrap(), vec!["a", "b"]);
        assert!(table.numeric("g").is_err());
        assert!(table.column("missing").is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut table = ObservationTable::new();
        table
            .push_column("y", Column::Numeric(vec![1.0, 2.0]))
            .unwrap();
        let err = table
            .push_column("z", Column::Numeric(vec![1.0]))
            .unwrap_err();
        assert!(matches!(err, TableError::LengthMismatch { .. }));
    }
}
