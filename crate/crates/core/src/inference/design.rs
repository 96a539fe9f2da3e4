//! Model specification and design matrix construction with treatment
//! coding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::table::ObservationTable;

use super::InferenceError;

/// One fixed-effect term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixedEffect {
    /// Numeric column entering as-is.
    Covariate { column: String },
    /// Categorical column entering via treatment (dummy) coding: the
    /// reference level is absorbed into the intercept, every other level
    /// gets an offset coefficient named `<column><level>`.
    Factor {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
}

/// What to regress on what, plus the random-intercept grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub fixed: Vec<FixedEffect>,
    pub grouping: String,
}

impl ModelSpec {
    /// `response ~ covariate + (1|grouping)`
    pub fn covariate(response: &str, covariate: &str, grouping: &str) -> Self {
        Self {
            response: response.to_owned(),
            fixed: vec![FixedEffect::Covariate {
                column: covariate.to_owned(),
            }],
            grouping: grouping.to_owned(),
        }
    }

    /// `response ~ factor + (1|grouping)` with an explicit reference level.
    pub fn factor(response: &str, factor: &str, reference: &str, grouping: &str) -> Self {
        Self {
            response: response.to_owned(),
            fixed: vec![FixedEffect::Factor {
                column: factor.to_owned(),
                reference: Some(reference.to_owned()),
            }],
            grouping: grouping.to_owned(),
        }
    }

    /// `response ~ 1 + (1|grouping)`
    pub fn intercept_only(response: &str, grouping: &str) -> Self {
        Self {
            response: response.to_owned(),
            fixed: Vec::new(),
            grouping: grouping.to_owned(),
        }
    }
}

/// Materialized design: response, fixed-effect matrix and grouping indices.
#[derive(Debug, Clone)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub coef_names: Vec<String>,
    /// Group index per row.
    pub group_index: Vec<usize>,
    /// Level label per group index.
    pub group_levels: Vec<String>,
}

pub fn build_design(
    table: &ObservationTable,
    spec: &ModelSpec,
) -> Result<Design, InferenceError> {
    let n = table.n_rows();
    if n == 0 {
        return Err(InferenceError::Data("empty observation table".into()));
    }
    for effect in &spec.fixed {
        let column = match effect {
            FixedEffect::Covariate { column } | FixedEffect::Factor { column, .. } => column,
        };
        if *column == spec.grouping {
            return Err(InferenceError::Data(format!(
                "grouping column {:?} also appears as a fixed effect",
                spec.grouping
            )));
        }
    }

    let response = table.numeric(&spec.response)?;
    if response.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::Data(format!(
            "response column {:?} contains non-finite values",
            spec.response
        )));
    }
    let y = DVector::from_column_slice(response);

    let mut columns: Vec<(String, Vec<f64>)> = vec![("Constant".to_owned(), vec![1.0; n])];
    for effect in &spec.fixed {
        match effect {
            FixedEffect::Covariate { column } => {
                let values = table.numeric(column)?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(InferenceError::Data(format!(
                        "covariate column {column:?} contains non-finite values"
                    )));
                }
                columns.push((column.clone(), values.to_vec()));
            }
            FixedEffect::Factor { column, reference } => {
                let values = table.categorical(column)?;
                let levels = table.levels(column)?;
                let reference = match reference {
                    Some(level) => {
                        if !levels.iter().any(|l| l == level) {
                            return Err(InferenceError::Data(format!(
                                "reference level {level:?} not present in column {column:?}"
                            )));
                        }
                        level.clone()
                    }
                    None => levels[0].clone(),
                };
                for level in levels.iter().filter(|l| **l != reference) {
                    let indicator: Vec<f64> = values
                        .iter()
                        .map(|v| if v == level { 1.0 } else { 0.0 })
                        .collect();
                    columns.push((format!("{column}{level}"), indicator));
                }
            }
        }
    }

    let p = columns.len();
    if n <= p {
        return Err(InferenceError::Data(format!(
            "{n} observations cannot identify {p} fixed-effect coefficients"
        )));
    }
    let mut x = DMatrix::zeros(n, p);
    let mut coef_names = Vec::with_capacity(p);
    for (j, (name, values)) in columns.into_iter().enumerate() {
        for (i, value) in values.into_iter().enumerate() {
            x[(i, j)] = value;
        }
        coef_names.push(name);
    }

    // full-rank check on the fixed-effect design
    let svd = x.clone().svd(false, false);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < p {
        return Err(InferenceError::RankDeficient(format!(
            "design matrix rank {rank} < {p} columns (collinear fixed effects)"
        )));
    }

    let group_values = table.categorical(&spec.grouping)?;
    let group_levels = table.levels(&spec.grouping)?;
    let group_index = group_values
        .iter()
        .map(|v| {
            group_levels
                .iter()
                .position(|l| l == v)
                .expect("level list covers all values")
        })
        .collect();

    Ok(Design {
        y,
        x,
        coef_names,
        group_index,
        group_levels,
    })
}
