//! Opinion-data model: topics, statements with paraphrase variations, and
//! per-group opinion aggregates.
//!
//! A corpus is loaded from a JSON document with top-level keys `topics`,
//! `statements`, `opinions` and `metadata`. Fractions are decimals in
//! `[0, 1]`; respondent counts are optional. Only aggregate statistics are
//! ever stored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bundled fixture corpus: the transcribed statement corpus (21 topics, 4
/// variations each) with synthetic placeholder opinion aggregates.
pub const FIXTURE_CORPUS_JSON: &str = include_str!("../fixtures/appendix_a.json");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// The document is not syntactically valid JSON.
    #[error("parse error: {0}")]
    Parse(String),
    /// The document is valid JSON but does not match the corpus schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// The document matches the schema but violates a data invariant.
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// A requested value cannot be derived from the data present.
    #[error("missing data: {0}")]
    MissingData(String),
}

/// A polled topic with `k >= 2` exclusive stances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    pub title: String,
    pub stance_labels: Vec<String>,
}

/// An affirmative declarative statement about one topic, together with its
/// paraphrase variations. Variation 0 is always the base text.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub id: String,
    pub topic_id: String,
    pub base_text: String,
    pub variations: Vec<String>,
}

/// Aggregate yes-share of one group on one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionShare {
    pub topic_id: String,
    pub group_id: String,
    pub yes_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub respondent_count: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub retrieved: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// Group id carrying the pooled population share.
pub const GLOBAL_GROUP: &str = "global";

/// A validated opinion corpus. Immutable after load; safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub metadata: CorpusMetadata,
    pub topics: Vec<Topic>,
    pub statements: Vec<Statement>,
    pub opinions: Vec<OpinionShare>,
}

// On-disk schema. Statements store the base text plus paraphrases; the
// in-memory model prepends the base as variation 0.
#[derive(Debug, Serialize, Deserialize)]
struct RawCorpus {
    #[serde(default)]
    metadata: CorpusMetadata,
    topics: Vec<Topic>,
    statements: Vec<RawStatement>,
    opinions: Vec<OpinionShare>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawStatement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    topic_id: String,
    base_text: String,
    #[serde(default)]
    paraphrases: Vec<String>,
    /// Audit flag: the ingest pipeline does not attempt NLP, it trusts this
    /// marker placed during transcription.
    #[serde(default = "default_true")]
    affirmative: bool,
}

fn default_true() -> bool {
    true
}

impl Corpus {
    /// Parse and validate a corpus from a JSON string.
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let raw: RawCorpus = serde_json::from_str(text).map_err(|e| {
            if e.classify() == serde_json::error::Category::Data {
                CorpusError::Schema(e.to_string())
            } else {
                CorpusError::Parse(e.to_string())
            }
        })?;
        Corpus::from_raw(raw)
    }

    /// The corpus bundled with the crate.
    pub fn bundled_fixture() -> Self {
        Corpus::from_json(FIXTURE_CORPUS_JSON).expect("bundled fixture corpus is valid")
    }

    fn from_raw(raw: RawCorpus) -> Result<Self, CorpusError> {
        let mut topic_ids = BTreeSet::new();
        for topic in &raw.topics {
            if topic.id.is_empty() {
                return Err(CorpusError::Invariant("topic with empty id".into()));
            }
            if !topic_ids.insert(topic.id.clone()) {
                return Err(CorpusError::Invariant(format!(
                    "duplicate topic id {:?}",
                    topic.id
                )));
            }
            if topic.stance_labels.len() < 2 {
                return Err(CorpusError::Invariant(format!(
                    "topic {:?} has {} stance labels, need at least 2",
                    topic.id,
                    topic.stance_labels.len()
                )));
            }
        }

        let mut statements = Vec::with_capacity(raw.statements.len());
        let mut statement_ids = BTreeSet::new();
        let mut per_topic_seq: BTreeMap<String, usize> = BTreeMap::new();
        for rs in raw.statements {
            if !topic_ids.contains(&rs.topic_id) {
                return Err(CorpusError::Invariant(format!(
                    "statement references unknown topic {:?}",
                    rs.topic_id
                )));
            }
            if !rs.affirmative {
                return Err(CorpusError::Invariant(format!(
                    "statement for topic {:?} is flagged non-affirmative",
                    rs.topic_id
                )));
            }
            // Derived ids stay stable: first statement of a topic takes the
            // topic id, later ones get a numeric suffix.
            let id = match rs.id {
                Some(id) => id,
                None => {
                    let seq = per_topic_seq.entry(rs.topic_id.clone()).or_insert(0);
                    *seq += 1;
                    if *seq == 1 {
                        rs.topic_id.clone()
                    } else {
                        format!("{}#{}", rs.topic_id, seq)
                    }
                }
            };
            if !statement_ids.insert(id.clone()) {
                return Err(CorpusError::Invariant(format!(
                    "duplicate statement id {:?}",
                    id
                )));
            }
            let mut variations = Vec::with_capacity(1 + rs.paraphrases.len());
            variations.push(rs.base_text.clone());
            variations.extend(rs.paraphrases);
            let mut seen = BTreeSet::new();
            for text in &variations {
                if text.trim().is_empty() {
                    return Err(CorpusError::Invariant(format!(
                        "statement {:?} has an empty variation text",
                        id
                    )));
                }
                if !seen.insert(text.as_str()) {
                    return Err(CorpusError::Invariant(format!(
                        "statement {:?} has duplicate variation text {:?}",
                        id, text
                    )));
                }
            }
            statements.push(Statement {
                id,
                topic_id: rs.topic_id,
                base_text: rs.base_text,
                variations,
            });
        }

        let mut seen_shares = BTreeSet::new();
        for share in &raw.opinions {
            if !topic_ids.contains(&share.topic_id) {
                return Err(CorpusError::Invariant(format!(
                    "opinion row references unknown topic {:?}",
                    share.topic_id
                )));
            }
            if !share.yes_fraction.is_finite()
                || share.yes_fraction < 0.0
                || share.yes_fraction > 1.0
            {
                return Err(CorpusError::Invariant(format!(
                    "opinion row ({}, {}) has yes_fraction {} outside [0, 1]",
                    share.topic_id, share.group_id, share.yes_fraction
                )));
            }
            if let Some(count) = share.respondent_count {
                if count == 0 {
                    return Err(CorpusError::Invariant(format!(
                        "opinion row ({}, {}) has respondent_count 0",
                        share.topic_id, share.group_id
                    )));
                }
            }
            if !seen_shares.insert((share.topic_id.clone(), share.group_id.clone())) {
                return Err(CorpusError::Invariant(format!(
                    "duplicate opinion row for ({}, {})",
                    share.topic_id, share.group_id
                )));
            }
        }

        let corpus = Corpus {
            metadata: raw.metadata,
            topics: raw.topics,
            statements,
            opinions: raw.opinions,
        };

        // Every topic must expose a pooled population share, either as an
        // explicit "global" row or via count-weighted pooling.
        for topic in &corpus.topics {
            global_opinion(&corpus, &topic.id).map_err(|e| match e {
                CorpusError::MissingData(msg) => CorpusError::Invariant(msg),
                other => other,
            })?;
        }
        Ok(corpus)
    }

    pub fn to_json(&self) -> String {
        let raw = RawCorpus {
            metadata: self.metadata.clone(),
            topics: self.topics.clone(),
            statements: self
                .statements
                .iter()
                .map(|s| RawStatement {
                    id: Some(s.id.clone()),
                    topic_id: s.topic_id.clone(),
                    base_text: s.base_text.clone(),
                    paraphrases: s.variations[1..].to_vec(),
                    affirmative: true,
                })
                .collect(),
            opinions: self.opinions.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("corpus serializes")
    }

    pub fn topic(&self, topic_id: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == topic_id)
    }

    pub fn statements_for_topic<'a>(&'a self, topic_id: &'a str) -> impl Iterator<Item = &'a Statement> {
        self.statements.iter().filter(move |s| s.topic_id == topic_id)
    }

    /// Opinion rows for one topic, in file order.
    pub fn shares_for_topic<'a>(&'a self, topic_id: &'a str) -> impl Iterator<Item = &'a OpinionShare> {
        self.opinions.iter().filter(move |o| o.topic_id == topic_id)
    }

    pub fn share(&self, topic_id: &str, group_id: &str) -> Option<&OpinionShare> {
        self.opinions
            .iter()
            .find(|o| o.topic_id == topic_id && o.group_id == group_id)
    }

    /// All group ids appearing in the corpus, sorted, excluding the global
    /// pool.
    pub fn group_ids(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .opinions
            .iter()
            .map(|o| o.group_id.as_str())
            .filter(|g| *g != GLOBAL_GROUP)
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Total number of statement variations (base texts included).
    pub fn variation_count(&self) -> usize {
        self.statements.iter().map(|s| s.variations.len()).sum()
    }
}

/// Load a corpus file from disk.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::from_json(&text)
}

/// Write a corpus back to disk in the schema accepted by [`load_corpus`].
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    std::fs::write(path, corpus.to_json()).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Pooled population share for a topic.
///
/// An explicit `"global"` row wins; otherwise the count-weighted mean over
/// the topic's subgroup rows is returned, which requires every subgroup row
/// to carry a respondent count.
pub fn global_opinion(corpus: &Corpus, topic_id: &str) -> Result<OpinionShare, CorpusError> {
    if corpus.topic(topic_id).is_none() {
        return Err(CorpusError::MissingData(format!(
            "unknown topic {:?}",
            topic_id
        )));
    }
    if let Some(row) = corpus.share(topic_id, GLOBAL_GROUP) {
        return Ok(row.clone());
    }
    let mut weighted = 0.0;
    let mut total: u64 = 0;
    let mut rows = 0;
    for share in corpus.shares_for_topic(topic_id) {
        rows += 1;
        match share.respondent_count {
            Some(count) => {
                weighted += share.yes_fraction * count as f64;
                total += count;
            }
            None => {
                return Err(CorpusError::MissingData(format!(
                    "topic {:?} has no global opinion row and subgroup ({}) lacks a respondent count",
                    topic_id, share.group_id
                )))
            }
        }
    }
    if rows == 0 || total == 0 {
        return Err(CorpusError::MissingData(format!(
            "topic {:?} has no opinion rows to pool a global share from",
            topic_id
        )));
    }
    Ok(OpinionShare {
        topic_id: topic_id.to_owned(),
        group_id: GLOBAL_GROUP.to_owned(),
        yes_fraction: weighted / total as f64,
        respondent_count: Some(total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

/// Result of [`validate_corpus`]: findings only, the corpus is never
/// mutated.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub topic_count: usize,
    pub statement_count: usize,
    pub variation_count: usize,
    pub duplicate_statements: usize,
}

impl ValidationReport {
    pub fn errors(&self) -> usize {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} topics, {} variations",
            self.topic_count, self.variation_count
        )?;
        for finding in &self.findings {
            writeln!(
                f,
                "{}: {}",
                match finding.severity {
                    Severity::Warning => "warning",
                    Severity::Error => "error",
                },
                finding.message
            )?;
        }
        Ok(())
    }
}

/// Cross-checks beyond the hard load-time invariants: duplicate statement
/// texts, topics lacking variations or statements, and groups missing for
/// some topics.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport {
        topic_count: corpus.topics.len(),
        statement_count: corpus.statements.len(),
        variation_count: corpus.variation_count(),
        ..Default::default()
    };

    let mut by_text: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for statement in &corpus.statements {
        by_text
            .entry(statement.base_text.as_str())
            .or_default()
            .push(statement.id.as_str());
    }
    for (text, ids) in by_text {
        if ids.len() > 1 {
            report.duplicate_statements += ids.len() - 1;
            report.findings.push(Finding {
                severity: Severity::Error,
                message: format!(
                    "duplicate statement text {:?} shared by {}",
                    text,
                    ids.join(", ")
                ),
            });
        }
    }

    for statement in &corpus.statements {
        if statement.variations.len() < 2 {
            report.findings.push(Finding {
                severity: Severity::Warning,
                message: format!(
                    "low variation count: statement {:?} has only {} variation(s)",
                    statement.id,
                    statement.variations.len()
                ),
            });
        }
    }

    let groups = corpus.group_ids();
    for topic in &corpus.topics {
        if corpus.statements_for_topic(&topic.id).next().is_none() {
            report.findings.push(Finding {
                severity: Severity::Warning,
                message: format!("topic {:?} has no statements", topic.id),
            });
        }
        let present: BTreeSet<&str> = corpus
            .shares_for_topic(&topic.id)
            .map(|s| s.group_id.as_str())
            .collect();
        let missing: Vec<&str> = groups
            .iter()
            .map(String::as_str)
            .filter(|g| !present.contains(g))
            .collect();
        if !missing.is_empty() {
            report.findings.push(Finding {
                severity: Severity::Warning,
                message: format!(
                    "topic {:?} lacks opinion rows for group(s): {}",
                    topic.id,
                    missing.join(", ")
                ),
            });
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(yes_fraction: f64) -> String {
        format!(
            r#"{{
              "topics": [{{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]}}],
              "statements": [{{"topic_id": "t1", "base_text": "Base.", "paraphrases": ["P1.", "P2."]}}],
              "opinions": [{{"topic_id": "t1", "group_id": "global", "yes_fraction": {yes_fraction}}}]
            }}"#
        )
    }

    #[test]
    fn fixture_has_21_topics_and_84_variations() {
        let corpus = Corpus::bundled_fixture();
        assert_eq!(corpus.topics.len(), 21);
        assert_eq!(corpus.statements.len(), 21);
        assert_eq!(corpus.variation_count(), 84);
        for statement in &corpus.statements {
            assert_eq!(statement.variations.len(), 4);
            assert_eq!(statement.variations[0], statement.base_text);
        }
    }

    #[test]
    fn fixture_has_twelve_groups_plus_global() {
        let corpus = Corpus::bundled_fixture();
        assert_eq!(corpus.group_ids().len(), 12);
        for topic in &corpus.topics {
            assert!(corpus.share(&topic.id, GLOBAL_GROUP).is_some());
        }
    }

    #[test]
    fn empty_topic_list_is_valid() {
        let corpus =
            Corpus::from_json(r#"{"topics": [], "statements": [], "opinions": []}"#).unwrap();
        assert!(corpus.topics.is_empty());
        assert_eq!(corpus.variation_count(), 0);
    }

    #[test]
    fn out_of_range_fraction_is_invariant_error() {
        let err = Corpus::from_json(&minimal_json(1.3)).unwrap_err();
        assert!(matches!(err, CorpusError::Invariant(_)), "{err}");
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let err = Corpus::from_json("{not json").unwrap_err();
        assert!(matches!(err, CorpusError::Parse(_)), "{err}");
    }

    #[test]
    fn missing_field_is_schema_error() {
        let err = Corpus::from_json(r#"{"topics": []}"#).unwrap_err();
        assert!(matches!(err, CorpusError::Schema(_)), "{err}");
    }

    #[test]
    fn single_stance_topic_rejected() {
        let text = r#"{"topics": [{"id": "t", "title": "T", "stance_labels": ["yes"]}],
                       "statements": [], "opinions": []}"#;
        let err = Corpus::from_json(text).unwrap_err();
        assert!(matches!(err, CorpusError::Invariant(_)));
    }

    #[test]
    fn non_affirmative_statement_rejected() {
        let text = r#"{
            "topics": [{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]}],
            "statements": [{"topic_id": "t1", "base_text": "Base?", "affirmative": false}],
            "opinions": [{"topic_id": "t1", "group_id": "global", "yes_fraction": 0.5}]
        }"#;
        let err = Corpus::from_json(text).unwrap_err();
        assert!(matches!(err, CorpusError::Invariant(_)));
    }

    #[test]
    fn global_opinion_passthrough() {
        let text = r#"{
            "topics": [{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]}],
            "statements": [],
            "opinions": [
              {"topic_id": "t1", "group_id": "global", "yes_fraction": 0.63},
              {"topic_id": "t1", "group_id": "a", "yes_fraction": 0.9, "respondent_count": 10}
            ]
        }"#;
        let corpus = Corpus::from_json(text).unwrap();
        let share = global_opinion(&corpus, "t1").unwrap();
        assert_eq!(share.yes_fraction, 0.63);
    }

    #[test]
    fn global_opinion_symmetric_pooling() {
        let text = r#"{
            "topics": [{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]}],
            "statements": [],
            "opinions": [
              {"topic_id": "t1", "group_id": "a", "yes_fraction": 0.8, "respondent_count": 100},
              {"topic_id": "t1", "group_id": "b", "yes_fraction": 0.2, "respondent_count": 100}
            ]
        }"#;
        let corpus = Corpus::from_json(text).unwrap();
        let share = global_opinion(&corpus, "t1").unwrap();
        assert_eq!(share.yes_fraction, 0.5);
        assert_eq!(share.respondent_count, Some(200));
    }

    #[test]
    fn global_opinion_weighted_pooling() {
        let text = r#"{
            "topics": [{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]}],
            "statements": [],
            "opinions": [
              {"topic_id": "t1", "group_id": "a", "yes_fraction": 0.9, "respondent_count": 300},
              {"topic_id": "t1", "group_id": "b", "yes_fraction": 0.1, "respondent_count": 100}
            ]
        }"#;
        let corpus = Corpus::from_json(text).unwrap();
        let share = global_opinion(&corpus, "t1").unwrap();
        assert!((share.yes_fraction - 0.7).abs() < 1e-12);
    }

    #[test]
    fn pooling_without_counts_is_rejected_at_load() {
        let text = r#"{
            "topics": [{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]}],
            "statements": [],
            "opinions": [{"topic_id": "t1", "group_id": "a", "yes_fraction": 0.8}]
        }"#;
        let err = Corpus::from_json(text).unwrap_err();
        assert!(matches!(err, CorpusError::Invariant(_)), "{err}");
    }

    #[test]
    fn validate_flags_duplicates_and_low_variation() {
        let text = r#"{
            "topics": [{"id": "t1", "title": "T1", "stance_labels": ["yes", "no"]},
                       {"id": "t2", "title": "T2", "stance_labels": ["yes", "no"]}],
            "statements": [
              {"topic_id": "t1", "base_text": "Same text."},
              {"topic_id": "t2", "base_text": "Same text."}
            ],
            "opinions": [
              {"topic_id": "t1", "group_id": "global", "yes_fraction": 0.4},
              {"topic_id": "t2", "group_id": "global", "yes_fraction": 0.6}
            ]
        }"#;
        let corpus = Corpus::from_json(text).unwrap();
        let report = validate_corpus(&corpus);
        assert_eq!(report.duplicate_statements, 1);
        assert!(report
            .findings
            .iter()
            .any(|f| f.message.contains("low variation count")));
    }

    #[test]
    fn validate_fixture_is_clean() {
        let report = validate_corpus(&Corpus::bundled_fixture());
        assert_eq!(report.duplicate_statements, 0);
        assert_eq!(report.errors(), 0);
        assert_eq!(report.variation_count, 84);
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        let corpus = Corpus::bundled_fixture();
        save_corpus(&corpus, &path).unwrap();
        let reloaded = load_corpus(&path).unwrap();
        assert_eq!(corpus, reloaded);
    }

    #[test]
    fn pooled_global_lies_between_group_extremes() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(
                &proptest::collection::vec((0.0f64..=1.0, 1u64..10_000), 1..8),
                |groups| {
                    let opinions: Vec<String> = groups
                        .iter()
                        .enumerate()
                        .map(|(i, (f, c))| {
                            format!(
                                r#"{{"topic_id": "t", "group_id": "g{i}", "yes_fraction": {f}, "respondent_count": {c}}}"#
                            )
                        })
                        .collect();
                    let text = format!(
                        r#"{{"topics": [{{"id": "t", "title": "T", "stance_labels": ["yes", "no"]}}],
                            "statements": [], "opinions": [{}]}}"#,
                        opinions.join(",")
                    );
                    let corpus = Corpus::from_json(&text).unwrap();
                    let pooled = global_opinion(&corpus, "t").unwrap().yes_fraction;
                    let lo = groups.iter().map(|(f, _)| *f).fold(f64::INFINITY, f64::min);
                    let hi = groups.iter().map(|(f, _)| *f).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(pooled >= lo - 1e-12 && pooled <= hi + 1e-12);
                    Ok(())
                },
            )
            .unwrap();
    }
}
