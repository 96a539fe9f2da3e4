//! Contention, normalized entropy and alignment, plus assembly of the
//! long-format observation tables that feed the two audit models.
//!
//! Contention of a stance distribution over `k >= 2` exclusive stances is
//! the pairwise-disagreement mass normalized to `[0, 1]`:
//!
//! ```text
//! contention = k * sum_{i<j} 2*|g_i|*|g_j| / ((k-1) * |omega|^2)
//! ```
//!
//! which for two stances with yes-share `p` collapses to `4p(1-p)`. Entropy
//! of a judgment distribution is Shannon entropy over the `N` classes
//! divided by `log2(N)`. Alignment of a model's implied yes-share with a
//! group's yes-share is one minus their absolute difference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{global_opinion, Corpus, CorpusError, GLOBAL_GROUP};
use crate::judge::{Judgment, JudgmentSet};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    /// All-neutral judgment under a policy that excludes the neutral class.
    #[error("degenerate judgment: {0}")]
    Degenerate(String),
    #[error("missing judgments for {} variation(s): {}", .0.len(), format_keys(.0))]
    MissingJudgments(Vec<(String, usize)>),
    #[error(transparent)]
    MissingData(#[from] CorpusError),
}

fn format_keys(keys: &[(String, usize)]) -> String {
    const SHOWN: usize = 5;
    let mut parts: Vec<String> = keys
        .iter()
        .take(SHOWN)
        .map(|(id, idx)| format!("{id}#{idx}"))
        .collect();
    if keys.len() > SHOWN {
        parts.push("...".into());
    }
    parts.join(", ")
}

/// A population split across `k` exclusive stances, as fractions or raw
/// group sizes. Contention is invariant under common scaling, so both deal
/// in the same arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceDistribution {
    shares: Vec<f64>,
    total: f64,
}

impl StanceDistribution {
    /// Shares summing to 1 within 1e-9.
    pub fn from_fractions(shares: &[f64]) -> Result<Self, MetricsError> {
        let dist = Self::from_weights(shares)?;
        if (dist.total - 1.0).abs() > 1e-9 {
            return Err(MetricsError::Domain(format!(
                "fractions sum to {}, expected 1 within 1e-9",
                dist.total
            )));
        }
        Ok(dist)
    }

    /// Raw group sizes with a population of at least one.
    pub fn from_counts(counts: &[u64]) -> Result<Self, MetricsError> {
        let shares: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let dist = Self::from_weights(&shares)?;
        if dist.total < 1.0 {
            return Err(MetricsError::Domain("empty population".into()));
        }
        Ok(dist)
    }

    fn from_weights(shares: &[f64]) -> Result<Self, MetricsError> {
        if shares.len() < 2 {
            return Err(MetricsError::Domain(format!(
                "need at least 2 stances, got {}",
                shares.len()
            )));
        }
        let mut total = 0.0;
        for &share in shares {
            if !share.is_finite() || share < 0.0 {
                return Err(MetricsError::Domain(format!(
                    "negative or non-finite share {share}"
                )));
            }
            total += share;
        }
        if total <= 0.0 {
            return Err(MetricsError::Domain("empty population".into()));
        }
        Ok(Self {
            shares: shares.to_vec(),
            total,
        })
    }

    pub fn k(&self) -> usize {
        self.shares.len()
    }
}

/// Pairwise-disagreement contention in `[0, 1]`.
pub fn contention(dist: &StanceDistribution) -> f64 {
    let k = dist.shares.len() as f64;
    let mut pair_mass = 0.0;
    for i in 1..dist.shares.len() {
        for j in 0..i {
            pair_mass += 2.0 * dist.shares[i] * dist.shares[j];
        }
    }
    (k * pair_mass) / ((k - 1.0) * dist.total * dist.total)
}

/// Binary-stance contention `4p(1-p)`.
pub fn contention_binary(p_yes: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&p_yes) || !p_yes.is_finite() {
        return Err(MetricsError::Domain(format!(
            "yes-share {p_yes} outside [0, 1]"
        )));
    }
    Ok(4.0 * p_yes * (1.0 - p_yes))
}

/// Shannon entropy of a probability vector divided by `log2(N)`.
///
/// Computed as `1 - KL(p || uniform)/log2(N)`, which lands exactly on 1 for
/// the uniform distribution and exactly on 0 for a point mass.
pub fn normalized_entropy(probs: &[f64]) -> Result<f64, MetricsError> {
    if probs.len() < 2 {
        return Err(MetricsError::Domain(format!(
            "need at least 2 classes, got {}",
            probs.len()
        )));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(MetricsError::Domain(format!(
                "negative or non-finite probability {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::Domain(format!(
            "probabilities sum to {sum}, expected 1 within 1e-9"
        )));
    }
    let n = probs.len() as f64;
    let mut kl = 0.0;
    for &p in probs {
        if p > 0.0 {
            kl += p * (p * n).log2();
        }
    }
    // KL divergence from uniform is mathematically nonnegative
    kl = kl.max(0.0);
    Ok((1.0 - kl / n.log2()).clamp(0.0, 1.0))
}

/// How the neutral class is folded into a binary yes-share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NeutralPolicy {
    /// `p_pos / (p_pos + p_neg)`: project the judgment onto the binary
    /// survey options.
    #[default]
    ExcludeNeutral,
    /// `p_pos` as-is.
    IncludeNeutral,
}

/// The model's implied yes-share for one judgment.
pub fn model_yes_share(judgment: &Judgment, policy: NeutralPolicy) -> Result<f64, MetricsError> {
    let [pos, neg, _neu] = judgment.class_probs;
    match policy {
        NeutralPolicy::ExcludeNeutral => {
            let mass = pos + neg;
            if mass == 0.0 {
                return Err(MetricsError::Degenerate(format!(
                    "all-neutral judgment for {}#{}",
                    judgment.statement_id, judgment.variation_index
                )));
            }
            Ok(pos / mass)
        }
        NeutralPolicy::IncludeNeutral => Ok(pos),
    }
}

/// One minus the absolute error between two yes-shares.
pub fn alignment(group_yes: f64, model_yes: f64) -> Result<f64, MetricsError> {
    for (name, value) in [("group", group_yes), ("model", model_yes)] {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(MetricsError::Domain(format!(
                "{name} yes-share {value} outside [0, 1]"
            )));
        }
    }
    Ok(1.0 - (group_yes - model_yes).abs())
}

/// One observation for the calibration model: per statement variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Row {
    pub topic_id: String,
    pub variation_index: usize,
    pub entropy: f64,
    pub contention: f64,
}

/// One observation for the alignment model: per variation x group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Row {
    pub topic_id: String,
    pub variation_index: usize,
    pub group_id: String,
    pub alignment: f64,
}

fn collect_judgments<'a>(
    corpus: &'a Corpus,
    judgments: &'a JudgmentSet,
) -> Result<Vec<(&'a crate::corpus::Statement, usize, &'a Judgment)>, MetricsError> {
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for statement in &corpus.statements {
        for index in 0..statement.variations.len() {
            match judgments.get(&statement.id, index) {
                Some(judgment) => rows.push((statement, index, judgment)),
                None => missing.push((statement.id.clone(), index)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(MetricsError::MissingJudgments(missing));
    }
    Ok(rows)
}

/// Entropy-vs-contention table: one row per statement variation, contention
/// taken from the topic's pooled population share.
pub fn build_h1_table(
    corpus: &Corpus,
    judgments: &JudgmentSet,
) -> Result<Vec<H1Row>, MetricsError> {
    let mut rows = Vec::new();
    for (statement, index, judgment) in collect_judgments(corpus, judgments)? {
        let entropy = normalized_entropy(&judgment.class_probs)?;
        let global = global_opinion(corpus, &statement.topic_id)?;
        rows.push(H1Row {
            topic_id: statement.topic_id.clone(),
            variation_index: index,
            entropy,
            contention: contention_binary(global.yes_fraction)?,
        });
    }
    Ok(rows)
}

/// Alignment table plus build notes.
#[derive(Debug, Clone, Default)]
pub struct H2Table {
    pub rows: Vec<H2Row>,
    /// Variations dropped because the judgment was all-neutral under
    /// [`NeutralPolicy::ExcludeNeutral`]; excluded rather than imputed.
    pub skipped_all_neutral: usize,
}

/// Alignment table: one row per variation x group, with the pooled
/// population included as group `"global"`.
pub fn build_h2_table(
    corpus: &Corpus,
    judgments: &JudgmentSet,
    policy: NeutralPolicy,
) -> Result<H2Table, MetricsError> {
    let mut table = H2Table::default();
    for (statement, index, judgment) in collect_judgments(corpus, judgments)? {
        let model_yes = match model_yes_share(judgment, policy) {
            Ok(value) => value,
            Err(MetricsError::Degenerate(_)) => {
                table.skipped_all_neutral += 1;
                continue;
            }
            Err(other) => return Err(other),
        };
        let global = global_opinion(corpus, &statement.topic_id)?;
        table.rows.push(H2Row {
            topic_id: statement.topic_id.clone(),
            variation_index: index,
            group_id: GLOBAL_GROUP.to_owned(),
            alignment: alignment(global.yes_fraction, model_yes)?,
        });
        for share in corpus.shares_for_topic(&statement.topic_id) {
            if share.group_id == GLOBAL_GROUP {
                continue;
            }
            table.rows.push(H2Row {
                topic_id: statement.topic_id.clone(),
                variation_index: index,
                group_id: share.group_id.clone(),
                alignment: alignment(share.yes_fraction, model_yes)?,
            });
        }
    }
    if table.skipped_all_neutral > 0 {
        log::info!(
            "h2 table: excluded {} all-neutral variation(s)",
            table.skipped_all_neutral
        );
    }
    log::info!("h2 table: {} observation rows", table.rows.len());
    Ok(table)
}

/// CSV with stable column order `topic_id,variation_index,entropy,contention`.
pub fn h1_to_csv(rows: &[H1Row]) -> String {
    let mut out = String::from("topic_id,variation_index,entropy,contention\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.topic_id, row.variation_index, row.entropy, row.contention
        ));
    }
    out
}

/// CSV with stable column order `topic_id,variation_index,group_id,alignment`.
pub fn h2_to_csv(rows: &[H2Row]) -> String {
    let mut out = String::from("topic_id,variation_index,group_id,alignment\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.topic_id, row.variation_index, row.group_id, row.alignment
        ));
    }
    out
}
