//! Live HTTP judge client.
//!
//! The endpoint shape is configuration, not code: a request template with a
//! `{statement}` placeholder and dotted paths into the JSON response for the
//! three class probabilities. Mapping a model's own label vocabulary onto
//! positive / negative / neutral therefore happens entirely in the config.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{JudgeClient, JudgeError, RawJudgeResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    #[default]
    Post,
}

/// Dotted paths into the response payload, one per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponsePaths {
    pub positive: String,
    pub negative: String,
    pub neutral: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpJudgeConfig {
    pub endpoint: String,
    #[serde(default)]
    pub method: HttpMethod,
    /// Body template (POST) or URL template (GET). `{statement}` is replaced
    /// with the statement, JSON-escaped for bodies and percent-encoded for
    /// URLs.
    pub request_template: String,
    pub response_paths: ResponsePaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_label_path: Option<String>,
    pub model_id: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

pub struct HttpJudgeClient {
    config: HttpJudgeConfig,
    agent: ureq::Agent,
}

impl HttpJudgeClient {
    pub fn new(config: HttpJudgeConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(config.timeout_secs)))
            .build()
            .new_agent();
        Self { config, agent }
    }
}

/// Walk a dotted path (`scores.yes`, `outputs.0.p`) through a JSON value.
fn lookup_path<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    let mut current = value;
    for segment in path.split('.') {
        current = match current {
            Value::Object(map) => map.get(segment)?,
            Value::Array(items) => items.get(segment.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(current)
}

fn lookup_prob(value: &Value, path: &str) -> Result<f64, JudgeError> {
    lookup_path(value, path)
        .and_then(Value::as_f64)
        .ok_or_else(|| {
            JudgeError::ResponseMapping(format!("no numeric field at path {path:?} in payload"))
        })
}

fn percent_encode(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for byte in text.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

impl JudgeClient for HttpJudgeClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn judge_text(&self, statement: &str) -> Result<RawJudgeResponse, JudgeError> {
        let response = match self.config.method {
            HttpMethod::Post => {
                // serde_json string encoding, minus the surrounding quotes
                let encoded = serde_json::to_string(statement)
                    .map_err(|e| JudgeError::Endpoint(e.to_string()))?;
                let body = self
                    .config
                    .request_template
                    .replace("{statement}", &encoded[1..encoded.len() - 1]);
                self.agent
                    .post(&self.config.endpoint)
                    .content_type("application/json")
                    .send(body)
            }
            HttpMethod::Get => {
                let url = self
                    .config
                    .request_template
                    .replace("{statement}", &percent_encode(statement));
                self.agent.get(&url).call()
            }
        }
        .map_err(|e| JudgeError::Endpoint(format!("transport: {e}")))?;

        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(JudgeError::Endpoint(format!("HTTP status {status}")));
        }
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| JudgeError::Endpoint(format!("body read: {e}")))?;
        let payload: Value = serde_json::from_str(&text)
            .map_err(|e| JudgeError::ResponseMapping(format!("payload not JSON: {e}")))?;

        let paths = &self.config.response_paths;
        let probs = [
            lookup_prob(&payload, &paths.positive)?,
            lookup_prob(&payload, &paths.negative)?,
            lookup_prob(&payload, &paths.neutral)?,
        ];
        let raw_label = self
            .config
            .raw_label_path
            .as_deref()
            .and_then(|path| lookup_path(&payload, path))
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            });
        Ok(RawJudgeResponse { probs, raw_label })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_path_lookup() {
        let payload = json!({"scores": {"yes": 0.7, "nested": [{"p": 0.1}]}});
        assert_eq!(lookup_prob(&payload, "scores.yes").unwrap(), 0.7);
        assert_eq!(lookup_prob(&payload, "scores.nested.0.p").unwrap(), 0.1);
        assert!(lookup_prob(&payload, "scores.missing").is_err());
    }

    #[test]
    fn percent_encoding_covers_spaces_and_quotes() {
        assert_eq!(percent_encode("a b\"c"), "a%20b%22c");
    }
}
