//! Uniform client contract for a three-class judgment model.
//!
//! A judge maps a statement to a probability distribution over
//! positive / negative / neutral. Implementations: a live HTTP endpoint
//! ([`http::HttpJudgeClient`]), a record/replay cassette
//! ([`ReplayJudgeClient`]), and the synthetic planted-bias judge in
//! [`crate::simulate`]. [`batch_judge`] drives any of them over a corpus,
//! persisting every judgment to an append-only cassette so runs are
//! resumable and replayable.

pub mod cassette;
pub mod http;

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::harvest::bucket::RateLimiter;
pub use cassette::{Cassette, CassetteRecord, ReplayJudgeClient};

/// Distributions whose probabilities sum to within this tolerance of 1 are
/// renormalized; anything worse is a broken endpoint, not float noise.
pub const SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum JudgeError {
    /// Transport failure or non-2xx status from a live endpoint, or a
    /// cassette miss during replay.
    #[error("endpoint error: {0}")]
    Endpoint(String),
    /// The endpoint payload lacks the configured probability fields.
    #[error("response mapping error: {0}")]
    ResponseMapping(String),
    /// Probabilities out of range or summing too far from 1.
    #[error("normalization error: {0}")]
    Normalization(String),
    /// Failure to persist a judgment; aborts a batch run.
    #[error("cassette write error: {0}")]
    CassetteWrite(String),
}

/// A normalized three-class judgment for one statement variation.
///
/// `class_probs` is ordered positive, negative, neutral and sums to 1
/// within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub statement_id: String,
    pub variation_index: usize,
    pub class_probs: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_label: Option<String>,
    pub model_id: String,
    pub timestamp_unix_ms: i64,
}

/// An un-keyed judge response: distribution plus audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgedResponse {
    pub class_probs: [f64; 3],
    pub raw_label: Option<String>,
    pub model_id: String,
    pub timestamp_unix_ms: i64,
}

/// Raw (pre-normalization) output of a judge implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawJudgeResponse {
    pub probs: [f64; 3],
    pub raw_label: Option<String>,
}

/// Something that can judge statement text. Implementations must be safe to
/// share across threads.
pub trait JudgeClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn judge_text(&self, statement: &str) -> Result<RawJudgeResponse, JudgeError>;
}

/// Validate and normalize a raw three-class distribution.
///
/// Distributions already summing to 1 within 1e-9 pass through untouched,
/// which keeps replayed judgments bit-identical to their recordings.
pub fn normalize_probs(probs: [f64; 3]) -> Result<[f64; 3], JudgeError> {
    for p in probs {
        if !p.is_finite() || p < 0.0 || p > 1.0 {
            return Err(JudgeError::Normalization(format!(
                "probability {p} outside [0, 1] in {probs:?}"
            )));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() <= 1e-9 {
        return Ok(probs);
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(JudgeError::Normalization(format!(
            "probabilities sum to {sum}, beyond tolerance {SUM_TOLERANCE}"
        )));
    }
    Ok([probs[0] / sum, probs[1] / sum, probs[2] / sum])
}

fn now_unix_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// Ask a judge for one statement and normalize the result.
pub fn judge_statement(
    client: &dyn JudgeClient,
    text: &str,
) -> Result<JudgedResponse, JudgeError> {
    if text.trim().is_empty() {
        return Err(JudgeError::Endpoint("empty statement text".into()));
    }
    let raw = client.judge_text(text)?;
    let class_probs = normalize_probs(raw.probs)?;
    Ok(JudgedResponse {
        class_probs,
        raw_label: raw.raw_label,
        model_id: client.model_id().to_owned(),
        timestamp_unix_ms: now_unix_ms(),
    })
}

/// Judgments keyed by (statement id, variation index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JudgmentSet {
    pub judgments: BTreeMap<(String, usize), Judgment>,
    pub model_id: String,
    /// True iff every variation of the corpus the set was built against is
    /// covered.
    pub complete: bool,
}

impl JudgmentSet {
    pub fn get(&self, statement_id: &str, variation_index: usize) -> Option<&Judgment> {
        self.judgments
            .get(&(statement_id.to_owned(), variation_index))
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Outcome of a batch run: the set plus what actually happened.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub set: JudgmentSet,
    /// Endpoint calls actually issued (cassette hits cost nothing).
    pub queried: usize,
    /// Per-item failures; the batch keeps going past them.
    pub failures: Vec<((String, usize), String)>,
}

/// Judge every variation in the corpus, writing through the cassette.
///
/// Keys already present in the cassette are not re-queried, so a complete
/// cassette makes the run free and a partial one resumes where it stopped.
/// Per-item endpoint errors are collected into the failure report; only a
/// cassette write failure aborts.
pub fn batch_judge(
    client: &dyn JudgeClient,
    corpus: &Corpus,
    limiter: Option<&RateLimiter>,
    cassette: &mut Cassette,
) -> Result<BatchOutcome, JudgeError> {
    let mut outcome = BatchOutcome {
        set: JudgmentSet {
            model_id: client.model_id().to_owned(),
            ..Default::default()
        },
        ..Default::default()
    };

    for statement in &corpus.statements {
        for (index, text) in statement.variations.iter().enumerate() {
            let key = (statement.id.clone(), index);
            if let Some(record) = cassette.get(&statement.id, index) {
                outcome.set.judgments.insert(key, record.to_judgment());
                continue;
            }
            if let Some(limiter) = limiter {
                limiter.acquire();
            }
            outcome.queried += 1;
            match judge_statement(client, text) {
                Ok(response) => {
                    let judgment = Judgment {
                        statement_id: statement.id.clone(),
                        variation_index: index,
                        class_probs: response.class_probs,
                        raw_label: response.raw_label,
                        model_id: response.model_id,
                        timestamp_unix_ms: response.timestamp_unix_ms,
                    };
                    cassette.append(&judgment, text)?;
                    outcome.set.judgments.insert(key, judgment);
                }
                Err(JudgeError::CassetteWrite(msg)) => {
                    return Err(JudgeError::CassetteWrite(msg))
                }
                Err(err) => outcome.failures.push((key, err.to_string())),
            }
        }
    }

    outcome.set.complete = corpus.statements.iter().all(|s| {
        (0..s.variations.len()).all(|i| outcome.set.judgments.contains_key(&(s.id.clone(), i)))
    });
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Test judge: fixed distribution, optionally failing on chosen texts.
    pub(crate) struct FixedJudge {
        pub probs: [f64; 3],
        pub fail_on: Vec<String>,
        pub calls: AtomicUsize,
    }

    impl FixedJudge {
        pub(crate) fn new(probs: [f64; 3]) -> Self {
            Self {
                probs,
                fail_on: Vec::new(),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl JudgeClient for FixedJudge {
        fn model_id(&self) -> &str {
            "fixed-judge"
        }

        fn judge_text(&self, statement: &str) -> Result<RawJudgeResponse, JudgeError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_on.iter().any(|t| t == statement) {
                return Err(JudgeError::Endpoint("synthetic outage".into()));
            }
            Ok(RawJudgeResponse {
                probs: self.probs,
                raw_label: None,
            })
        }
    }

    #[test]
    fn normalization_within_tolerance_renormalizes() {
        let probs = normalize_probs([0.5, 0.4995, 0.0]).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalization_beyond_tolerance_errors() {
        let err = normalize_probs([0.5, 0.5, 0.1]).unwrap_err();
        assert!(matches!(err, JudgeError::Normalization(_)), "{err}");
    }

    #[test]
    fn degenerate_plant_passes_through() {
        let judge = FixedJudge::new([1.0, 0.0, 0.0]);
        let response = judge_statement(&judge, "Statement.").unwrap();
        assert_eq!(response.class_probs, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_statement_rejected() {
        let judge = FixedJudge::new([1.0, 0.0, 0.0]);
        assert!(judge_statement(&judge, "  ").is_err());
    }

    #[test]
    fn batch_judge_covers_fixture_and_is_resumable() {
        let corpus = crate::corpus::Corpus::bundled_fixture();
        let judge = FixedJudge::new([0.6, 0.3, 0.1]);
        let mut cassette = Cassette::in_memory();

        let outcome = batch_judge(&judge, &corpus, None, &mut cassette).unwrap();
        assert_eq!(outcome.set.len(), 84);
        assert!(outcome.set.complete);
        assert_eq!(outcome.queried, 84);

        // Second run over the now-complete cassette issues zero calls.
        let rerun = batch_judge(&judge, &corpus, None, &mut cassette).unwrap();
        assert_eq!(rerun.queried, 0);
        assert_eq!(rerun.set.len(), 84);
        assert!(rerun.set.complete);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 84);
    }

    #[test]
    fn batch_judge_empty_corpus_is_complete() {
        let corpus = crate::corpus::Corpus::from_json(
            r#"{"topics": [], "statements": [], "opinions": []}"#,
        )
        .unwrap();
        let judge = FixedJudge::new([0.6, 0.3, 0.1]);
        let mut cassette = Cassette::in_memory();
        let outcome = batch_judge(&judge, &corpus, None, &mut cassette).unwrap();
        assert!(outcome.set.is_empty());
        assert!(outcome.set.complete);
    }

    #[test]
    fn batch_judge_partial_failure_reported() {
        let corpus = crate::corpus::Corpus::bundled_fixture();
        let mut judge = FixedJudge::new([0.6, 0.3, 0.1]);
        judge.fail_on = vec![corpus.statements[0].variations[2].clone()];
        let mut cassette = Cassette::in_memory();
        let outcome = batch_judge(&judge, &corpus, None, &mut cassette).unwrap();
        assert_eq!(outcome.set.len(), 83);
        assert!(!outcome.set.complete);
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.failures[0].0 .1, 2);
    }
}
