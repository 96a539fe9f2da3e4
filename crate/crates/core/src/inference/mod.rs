//! Single-random-intercept linear mixed models, from scratch.
//!
//! [`fit_lmm`] estimates variance components by REML over a profiled
//! one-dimensional criterion (see [`reml`]), then solves generalized least
//! squares for the fixed effects, with standard errors from the GLS
//! covariance and per-group random-intercept predictions as BLUPs.
//! [`fit_rank_lmm`] is the robust variant: the response is replaced by
//! mid-ranks before fitting. [`wald_tests`] and [`r_squared`] produce the
//! reporting statistics; [`diagnostics`] checks residual normality and
//! heteroscedasticity.

pub mod design;
pub mod diagnostics;
pub mod rank;
pub mod reml;
mod wald;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{ObservationTable, TableError};

pub use design::{build_design, FixedEffect, ModelSpec};
pub use diagnostics::{diagnostics, DiagnosticsReport, GroupSpread, TestStat};
pub use rank::midranks;
pub use reml::{BoundaryHit, Convergence};
pub use wald::{significance_stars, wald_tests, InferenceReport, InferenceRow, StarThresholds};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A fitted mixed model: estimates, variance components, predictions and
/// the convergence record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    pub response: String,
    pub coef_names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Random-intercept variance.
    pub sigma2_b: f64,
    /// Residual variance.
    pub sigma2_e: f64,
    /// Variance of the fixed-effect linear predictor over the data.
    pub sigma2_fixed: f64,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Predicted random intercept per grouping level.
    pub random_intercepts: Vec<(String, f64)>,
    pub n: usize,
    pub p: usize,
    pub convergence: Convergence,
    pub rank_based: bool,
    /// Free-form metadata: degrees-of-freedom method, policy notes.
    pub notes: Vec<String>,
}

impl FittedModel {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.coef_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.coef_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.std_errors[i])
    }

    /// Residual degrees of freedom `n - p`.
    pub fn df(&self) -> f64 {
        (self.n - self.p) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InferenceError> {
        serde_json::from_str(text)
            .map_err(|e| InferenceError::Data(format!("model file does not parse: {e}")))
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// Fit `response ~ fixed effects + (1 | grouping)` by profiled REML.
pub fn fit_lmm(table: &ObservationTable, spec: &ModelSpec) -> Result<FittedModel, InferenceError> {
    let design = build_design(table, spec)?;
    let workspace = reml::RemlWorkspace::new(&design);
    let (convergence, point) = reml::minimize_profile(&workspace)?;

    let n = workspace.n;
    let p = workspace.p;
    let df = (n - p) as f64;
    let sigma2_e = point.quad / df;
    let sigma2_b = convergence.lambda * sigma2_e;

    // GLS covariance of the estimates: sigma2_e * (X'W^-1X)^-1
    let cov = point.xtwx_chol.inverse() * sigma2_e;
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let estimates: Vec<f64> = point.beta.iter().copied().collect();

    let blups = workspace.blups(convergence.lambda, &point.beta);
    let fixed_predictor: Vec<f64> = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| design.x[(i, j)] * point.beta[j])
                .sum::<f64>()
        })
        .collect();
    let fitted: Vec<f64> = (0..n)
        .map(|i| fixed_predictor[i] + blups[design.group_index[i]])
        .collect();
    let residuals: Vec<f64> = (0..n).map(|i| design.y[i] - fitted[i]).collect();

    let mut notes = vec!["df method: residual (n - p)".to_owned()];
    if let Some(hit) = convergence.boundary {
        notes.push(match hit {
            BoundaryHit::Lower => {
                "lambda at lower search bound: random-intercept variance ~ 0".to_owned()
            }
            BoundaryHit::Upper => {
                "lambda at upper search bound: random intercept dominates".to_owned()
            }
        });
    }

    Ok(FittedModel {
        response: spec.response.clone(),
        coef_names: design.coef_names,
        estimates,
        std_errors,
        sigma2_b,
        sigma2_e,
        sigma2_fixed: sample_variance(&fixed_predictor),
        fitted,
        residuals,
        random_intercepts: design
            .group_levels
            .iter()
            .cloned()
            .zip(blups)
            .collect(),
        n,
        p,
        convergence,
        rank_based: false,
        notes,
    })
}

/// Robust variant: replace the response by mid-ranks (ties averaged), then
/// fit the same model.
pub fn fit_rank_lmm(
    table: &ObservationTable,
    spec: &ModelSpec,
) -> Result<FittedModel, InferenceError> {
    let response = table.numeric(&spec.response)?;
    if response.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::Data(format!(
            "response column {:?} contains non-finite values",
            spec.response
        )));
    }
    let ranks = midranks(response);
    let mut ranked = table.clone();
    ranked.replace_numeric(&spec.response, ranks)?;
    let mut model = fit_lmm(&ranked, spec)?;
    model.rank_based = true;
    model.notes.push("response rank-transformed (mid-ranks)".to_owned());
    Ok(model)
}

/// Marginal and conditional R²: variance explained by the fixed effects
/// alone, and by fixed plus random effects, as shares of the total
/// fixed + random-intercept + residual variance.
pub fn r_squared(model: &FittedModel) -> (f64, f64) {
    let total = model.sigma2_fixed + model.sigma2_b + model.sigma2_e;
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    (
        model.sigma2_fixed / total,
        (model.sigma2_fixed + model.sigma2_b) / total,
    )
}
