//! Append-only judgment cassette: one JSON object per line.
//!
//! The cassette is both the persistence layer for batch runs and the data
//! source for deterministic replay. Records carry the statement text so a
//! replay client can serve bare-text lookups.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{JudgeClient, JudgeError, Judgment, RawJudgeResponse};

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub statement_id: String,
    pub variation_index: usize,
    pub statement_text: String,
    pub class_probs: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_label: Option<String>,
    pub model_id: String,
    pub timestamp_unix_ms: i64,
}

impl CassetteRecord {
    pub fn to_judgment(&self) -> Judgment {
        Judgment {
            statement_id: self.statement_id.clone(),
            variation_index: self.variation_index,
            class_probs: self.class_probs,
            raw_label: self.raw_label.clone(),
            model_id: self.model_id.clone(),
            timestamp_unix_ms: self.timestamp_unix_ms,
        }
    }
}

enum Backend {
    File { path: PathBuf, writer: Option<File> },
    Memory,
}

/// Keyed view over an append-only record log.
pub struct Cassette {
    backend: Backend,
    records: BTreeMap<(String, usize), CassetteRecord>,
}

impl Cassette {
    /// Open (or create) a cassette file and load its existing records.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        let mut records = BTreeMap::new();
        if path.exists() {
            let file = File::open(path)
                .map_err(|e| JudgeError::CassetteWrite(format!("open {}: {e}", path.display())))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| {
                    JudgeError::CassetteWrite(format!("read {}: {e}", path.display()))
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CassetteRecord = serde_json::from_str(&line).map_err(|e| {
                    JudgeError::CassetteWrite(format!(
                        "corrupt cassette line {} in {}: {e}",
                        lineno + 1,
                        path.display()
                    ))
                })?;
                records.insert(
                    (record.statement_id.clone(), record.variation_index),
                    record,
                );
            }
        }
        Ok(Self {
            backend: Backend::File {
                path: path.to_owned(),
                writer: None,
            },
            records,
        })
    }

    /// A cassette that lives only in memory. Same record format, no file.
    pub fn in_memory() -> Self {
        Self {
            backend: Backend::Memory,
            records: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, statement_id: &str, variation_index: usize) -> Option<&CassetteRecord> {
        self.records
            .get(&(statement_id.to_owned(), variation_index))
    }

    pub fn records(&self) -> impl Iterator<Item = &CassetteRecord> {
        self.records.values()
    }

    /// Append one judgment. Writes are flushed line by line so a crashed run
    /// loses at most the in-flight record.
    pub fn append(&mut self, judgment: &Judgment, statement_text: &str) -> Result<(), JudgeError> {
        let record = CassetteRecord {
            statement_id: judgment.statement_id.clone(),
            variation_index: judgment.variation_index,
            statement_text: statement_text.to_owned(),
            class_probs: judgment.class_probs,
            raw_label: judgment.raw_label.clone(),
            model_id: judgment.model_id.clone(),
            timestamp_unix_ms: judgment.timestamp_unix_ms,
        };
        if let Backend::File { path, writer } = &mut self.backend {
            if writer.is_none() {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent).map_err(|e| {
                            JudgeError::CassetteWrite(format!(
                                "create {}: {e}",
                                parent.display()
                            ))
                        })?;
                    }
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&*path)
                    .map_err(|e| {
                        JudgeError::CassetteWrite(format!("open {}: {e}", path.display()))
                    })?;
                *writer = Some(file);
            }
            let line = serde_json::to_string(&record)
                .map_err(|e| JudgeError::CassetteWrite(e.to_string()))?;
            let file = writer.as_mut().expect("writer just opened");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| JudgeError::CassetteWrite(format!("write {}: {e}", path.display())))?;
        }
        self.records.insert(
            (record.statement_id.clone(), record.variation_index),
            record,
        );
        Ok(())
    }
}

/// Serves recorded distributions by exact statement text; never touches the
/// network. Two replays of the same cassette are bit-identical.
pub struct ReplayJudgeClient {
    by_text: BTreeMap<String, CassetteRecord>,
    model_id: String,
}

impl ReplayJudgeClient {
    pub fn from_cassette(cassette: &Cassette) -> Self {
        let mut by_text = BTreeMap::new();
        let mut model_id = String::from("replay");
        for record in cassette.records() {
            model_id = record.model_id.clone();
            by_text.insert(record.statement_text.clone(), record.clone());
        }
        Self { by_text, model_id }
    }
}

impl JudgeClient for ReplayJudgeClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn judge_text(&self, statement: &str) -> Result<RawJudgeResponse, JudgeError> {
        match self.by_text.get(statement) {
            Some(record) => Ok(RawJudgeResponse {
                probs: record.class_probs,
                raw_label: record.raw_label.clone(),
            }),
            None => Err(JudgeError::Endpoint(format!(
                "cassette has no recording for statement {statement:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::judge_statement;

    fn sample_judgment(id: &str, index: usize, probs: [f64; 3]) -> Judgment {
        Judgment {
            statement_id: id.to_owned(),
            variation_index: index,
            class_probs: probs,
            raw_label: Some("good".into()),
            model_id: "m1".into(),
            timestamp_unix_ms: 1_700_000_000_000,
        }
    }

    #[test]
    fn file_round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");
        {
            let mut cassette = Cassette::open(&path).unwrap();
            cassette
                .append(&sample_judgment("s1", 0, [0.7, 0.2, 0.1]), "Text one.")
                .unwrap();
            cassette
                .append(&sample_judgment("s1", 1, [0.1, 0.8, 0.1]), "Text two.")
                .unwrap();
        }
        let reopened = Cassette::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(
            reopened.get("s1", 0).unwrap().class_probs,
            [0.7, 0.2, 0.1]
        );
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn replay_returns_recorded_distribution_bit_identical() {
        let mut cassette = Cassette::in_memory();
        let probs = [0.123456789012345, 0.654321098765432, 0.222222112222223];
        cassette
            .append(
                &sample_judgment("s1", 0, probs),
                "I support the example statement.",
            )
            .unwrap();
        let replay = ReplayJudgeClient::from_cassette(&cassette);
        let response = judge_statement(&replay, "I support the example statement.").unwrap();
        assert_eq!(response.class_probs, probs);
    }

    #[test]
    fn replay_miss_is_endpoint_error() {
        let cassette = Cassette::in_memory();
        let replay = ReplayJudgeClient::from_cassette(&cassette);
        let err = replay.judge_text("Unrecorded.").unwrap_err();
        assert!(matches!(err, JudgeError::Endpoint(_)));
    }
}
