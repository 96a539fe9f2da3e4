//! Respectful acquisition of aggregate opinion pages.
//!
//! A [`Fetcher`] combines a leaky-bucket [`bucket::RateLimiter`], an on-disk
//! [`PageCache`] and optional robots.txt enforcement. Extraction of opinion
//! records out of fetched HTML is config-driven ([`extract`]); there is no
//! site-specific code. Only aggregate statistics are ever persisted.

pub mod bucket;
pub mod extract;
pub mod robots;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use bucket::RateLimiter;
use robots::RobotsRules;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("robots rules disallow {0}")]
    RobotsDisallowed(String),
    #[error("html parse error: {0}")]
    HtmlParse(String),
    #[error("field parse error for selector {selector:?}: {message}")]
    FieldParse { selector: String, message: String },
    #[error("invalid harvest config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A fetched page plus enough metadata to audit it later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedDocument {
    pub url: String,
    #[serde(skip)]
    pub body: Vec<u8>,
    pub fetched_unix: u64,
    /// Hex SHA-256 of the body.
    pub content_hash: String,
}

impl CachedDocument {
    pub fn body_text(&self) -> Result<&str, HarvestError> {
        std::str::from_utf8(&self.body)
            .map_err(|e| HarvestError::HtmlParse(format!("body is not UTF-8: {e}")))
    }
}

pub fn content_hash(body: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(body);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    body_file: String,
    fetched_unix: u64,
    content_hash: String,
}

/// Directory cache: one body file per url hash plus an `index.json`.
pub struct PageCache {
    dir: PathBuf,
    ttl: Duration,
    index: BTreeMap<String, IndexEntry>,
}

impl PageCache {
    pub fn open(dir: &Path, ttl: Duration) -> Result<Self, HarvestError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarvestError::Io(format!("create cache dir {}: {e}", dir.display())))?;
        let index_path = dir.join("index.json");
        let index = if index_path.exists() {
            let text = std::fs::read_to_string(&index_path)
                .map_err(|e| HarvestError::Io(format!("read cache index: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| HarvestError::Io(format!("corrupt cache index: {e}")))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            dir: dir.to_owned(),
            ttl,
            index,
        })
    }

    fn persist_index(&self) -> Result<(), HarvestError> {
        let text = serde_json::to_string_pretty(&self.index)
            .map_err(|e| HarvestError::Io(e.to_string()))?;
        std::fs::write(self.dir.join("index.json"), text)
            .map_err(|e| HarvestError::Io(format!("write cache index: {e}")))
    }

    /// Fresh cache hit, if any. Entries whose body no longer matches the
    /// recorded hash are treated as misses.
    pub fn lookup(&self, url: &str, now_unix: u64) -> Option<CachedDocument> {
        let entry = self.index.get(url)?;
        if now_unix.saturating_sub(entry.fetched_unix) >= self.ttl.as_secs() {
            return None;
        }
        let body = std::fs::read(self.dir.join(&entry.body_file)).ok()?;
        if content_hash(&body) != entry.content_hash {
            return None;
        }
        Some(CachedDocument {
            url: url.to_owned(),
            body,
            fetched_unix: entry.fetched_unix,
            content_hash: entry.content_hash.clone(),
        })
    }

    pub fn store(
        &mut self,
        url: &str,
        body: Vec<u8>,
        now_unix: u64,
    ) -> Result<CachedDocument, HarvestError> {
        let hash = content_hash(&body);
        let body_file = format!("{}.body", content_hash(url.as_bytes()));
        std::fs::write(self.dir.join(&body_file), &body)
            .map_err(|e| HarvestError::Io(format!("write cache body: {e}")))?;
        self.index.insert(
            url.to_owned(),
            IndexEntry {
                body_file,
                fetched_unix: now_unix,
                content_hash: hash.clone(),
            },
        );
        self.persist_index()?;
        Ok(CachedDocument {
            url: url.to_owned(),
            body,
            fetched_unix: now_unix,
            content_hash: hash,
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Transport abstraction so tests can run against canned pages.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, user_agent: &str) -> Result<HttpResponse, HarvestError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, user_agent: &str) -> Result<HttpResponse, HarvestError> {
        let response = self
            .agent
            .get(url)
            .header("user-agent", user_agent)
            .call()
            .map_err(|e| HarvestError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .into_body()
            .with_config()
            .limit(16 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| HarvestError::Network(format!("body read: {e}")))?;
        Ok(HttpResponse { status, body })
    }
}

fn split_url(url: &str) -> Result<(String, String, String), HarvestError> {
    let (scheme, rest) = url
        .split_once("://")
        .ok_or_else(|| HarvestError::Config(format!("url {url:?} has no scheme")))?;
    let (host, path) = match rest.split_once('/') {
        Some((host, path)) => (host, format!("/{path}")),
        None => (rest, "/".to_owned()),
    };
    if host.is_empty() {
        return Err(HarvestError::Config(format!("url {url:?} has no host")));
    }
    Ok((scheme.to_owned(), host.to_owned(), path))
}

/// Rate-limited, caching, robots-aware page fetcher.
pub struct Fetcher {
    transport: Box<dyn Transport>,
    limiter: Arc<RateLimiter>,
    cache: Mutex<PageCache>,
    respect_robots: bool,
    user_agent: String,
    robots: Mutex<BTreeMap<String, RobotsRules>>,
}

impl Fetcher {
    pub fn new(
        transport: Box<dyn Transport>,
        limiter: Arc<RateLimiter>,
        cache: PageCache,
        respect_robots: bool,
        user_agent: impl Into<String>,
    ) -> Self {
        Self {
            transport,
            limiter,
            cache: Mutex::new(cache),
            respect_robots,
            user_agent: user_agent.into(),
            robots: Mutex::new(BTreeMap::new()),
        }
    }

    /// Fetch a url now. Cache hits within TTL cost no permit; misses consume
    /// exactly one permit and are stored on success.
    pub fn fetch(&self, url: &str) -> Result<CachedDocument, HarvestError> {
        let now_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.fetch_at(url, now_unix)
    }

    /// Same as [`Fetcher::fetch`] with an explicit cache clock, so TTL
    /// behaviour is testable.
    pub fn fetch_at(&self, url: &str, now_unix: u64) -> Result<CachedDocument, HarvestError> {
        let (scheme, host, path) = split_url(url)?;
        if let Some(doc) = self.cache.lock().unwrap().lookup(url, now_unix) {
            return Ok(doc);
        }
        if self.respect_robots && !self.robots_allow(&scheme, &host, &path, now_unix)? {
            return Err(HarvestError::RobotsDisallowed(url.to_owned()));
        }
        self.limiter.acquire();
        let response = self.transport.get(url, &self.user_agent)?;
        if !(200..300).contains(&response.status) {
            return Err(HarvestError::HttpStatus(response.status));
        }
        self.cache
            .lock()
            .unwrap()
            .store(url, response.body, now_unix)
    }

    fn robots_allow(
        &self,
        scheme: &str,
        host: &str,
        path: &str,
        now_unix: u64,
    ) -> Result<bool, HarvestError> {
        {
            let robots = self.robots.lock().unwrap();
            if let Some(rules) = robots.get(host) {
                return Ok(rules.is_allowed(path));
            }
        }
        let robots_url = format!("{scheme}://{host}/robots.txt");
        let cached = self.cache.lock().unwrap().lookup(&robots_url, now_unix);
        let body = match cached {
            Some(doc) => Some(doc.body),
            None => {
                self.limiter.acquire();
                match self.transport.get(&robots_url, &self.user_agent) {
                    Ok(response) if (200..300).contains(&response.status) => {
                        let stored = self.cache.lock().unwrap().store(
                            &robots_url,
                            response.body,
                            now_unix,
                        )?;
                        Some(stored.body)
                    }
                    // no robots file (or unreachable): nothing to enforce
                    Ok(_) | Err(_) => None,
                }
            }
        };
        let rules = match body {
            Some(bytes) => RobotsRules::parse(
                std::str::from_utf8(&bytes).unwrap_or(""),
                &self.user_agent,
            ),
            None => RobotsRules::default(),
        };
        let allowed = rules.is_allowed(path);
        self.robots.lock().unwrap().insert(host.to_owned(), rules);
        Ok(allowed)
    }
}
