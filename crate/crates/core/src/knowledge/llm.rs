//! Chat-completions client with a content-addressed response cache.
//!
//! Cache entries live in `<cache_dir>/<sha256(template_id, category, model)>.json`
//! and carry the rendered prompt, so a changed template text under an old id
//! is treated as a miss. The API key is read from an environment variable at
//! request time and never stored.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KnowledgeError;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Serve from cache only; a miss is a transport error.
    pub offline: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            temperature: 0.0,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60,
            offline: false,
        }
    }
}

/// One prompt sent for one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest<'a> {
    pub template_id: &'a str,
    pub category: &'a str,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub template_id: String,
    pub category: String,
    pub model: String,
    pub prompt: String,
    pub response: String,
    pub captured_at: DateTime<Utc>,
    /// Where the text came from, e.g. `live` or a fixture note.
    pub provenance: String,
}

pub fn cache_key(template_id: &str, category: &str, model: &str) -> String {
    let mut h = Sha256::new();
    for part in [template_id, category, model] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Directory of cached answers. Many readers, one writer at a time.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into(), write_lock: Mutex::new(()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, req: &PromptRequest<'_>, model: &str) -> Result<Option<CacheEntry>, KnowledgeError> {
        let path = self.path_for(&cache_key(req.template_id, req.category, model));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(KnowledgeError::Io { path, source }),
        };
        let entry: CacheEntry = serde_json::from_str(&text)
            .map_err(|e| KnowledgeError::Cache(format!("{}: {e}", path.display())))?;
        Ok((entry.prompt == req.prompt).then_some(entry))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), KnowledgeError> {
        let _guard = self.write_lock.lock().expect("cache lock");
        fs::create_dir_all(&self.dir)
            .map_err(|source| KnowledgeError::Io { path: self.dir.clone(), source })?;
        let path = self.path_for(&cache_key(&entry.template_id, &entry.category, &entry.model));
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(entry).expect("serializable") + "\n";
        fs::write(&tmp, body).map_err(|source| KnowledgeError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, &path).map_err(|source| KnowledgeError::Io { path, source })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Sends prompts to a chat-completions endpoint, cache first.
#[derive(Debug)]
pub struct LlmClient {
    cfg: LlmConfig,
    cache: ResponseCache,
    network_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl LlmClient {
    pub fn new(cfg: LlmConfig, cache: ResponseCache) -> Self {
        LlmClient { cfg, cache, network_calls: AtomicUsize::new(0), cache_hits: AtomicUsize::new(0) }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Returns the model's answer, from the cache when possible.
    pub fn query(&self, req: &PromptRequest<'_>) -> Result<String, KnowledgeError> {
        self.query_entry(req).map(|e| e.response)
    }

    /// Like [`query`](Self::query) but returns the full cache record.
    pub fn query_entry(&self, req: &PromptRequest<'_>) -> Result<CacheEntry, KnowledgeError> {
        if let Some(entry) = self.cache.get(req, &self.cfg.model)? {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry);
        }
        if self.cfg.offline {
            return Err(KnowledgeError::Transport(format!(
                "offline mode and no cached response for `{}`",
                req.category
            )));
        }
        let response = self.post(req.prompt)?;
        let entry = CacheEntry {
            template_id: req.template_id.to_string(),
            category: req.category.to_string(),
            model: self.cfg.model.clone(),
            prompt: req.prompt.to_string(),
            response,
            captured_at: Utc::now(),
            provenance: format!("live: {} temperature={}", self.cfg.endpoint, self.cfg.temperature),
        };
        self.cache.put(&entry)?;
        Ok(entry)
    }

    fn post(&self, prompt: &str) -> Result<String, KnowledgeError> {
        let key = std::env::var(&self.cfg.api_key_env).map_err(|_| {
            KnowledgeError::Transport(format!(
                "no cached response and API key variable {} is not set",
                self.cfg.api_key_env
            ))
        })?;
        self.network_calls.fetch_add(1, Ordering::Relaxed);
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.cfg.timeout_secs))
            .build()
            .map_err(|e| KnowledgeError::Transport(e.to_string()))?;
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: self.cfg.temperature,
        };
        let resp = client
            .post(&self.cfg.endpoint)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| KnowledgeError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(KnowledgeError::Transport(format!("endpoint returned HTTP {status}")));
        }
        let parsed: ChatResponse =
            resp.json().map_err(|e| KnowledgeError::Transport(format!("malformed response: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(KnowledgeError::EmptyResponse);
        }
        Ok(content)
    }
}

/// Free-function form of [`LlmClient::query`].
pub fn query_llm(client: &LlmClient, req: &PromptRequest<'_>) -> Result<String, KnowledgeError> {
    client.query(req)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(prompt: &'a str) -> PromptRequest<'a> {
        PromptRequest { template_id: "designed-v1", category: "Tuberculosis", prompt }
    }

    #[test]
    fn cache_key_separates_fields() {
        assert_ne!(cache_key("a", "bc", "m"), cache_key("ab", "c", "m"));
        assert_eq!(cache_key("a", "b", "m").len(), 64);
    }

    #[test]
    fn warm_cache_serves_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let entry = CacheEntry {
            template_id: "designed-v1".into(),
            category: "Tuberculosis".into(),
            model: DEFAULT_MODEL.into(),
            prompt: "Q?".into(),
            response: "1. Cavitation\n2. Upper lobe infiltrates".into(),
            captured_at: Utc::now(),
            provenance: "test".into(),
        };
        cache.put(&entry).unwrap();
        let cfg = LlmConfig { endpoint: "http://127.0.0.1:9/unreachable".into(), ..Default::default() };
        let client = LlmClient::new(cfg, ResponseCache::new(dir.path()));
        let a = client.query(&req("Q?")).unwrap();
        let b = client.query(&req("Q?")).unwrap();
        assert_eq!(a, entry.response);
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert_eq!(client.network_calls(), 0);
        assert_eq!(client.cache_hits(), 2);
    }

    #[test]
    fn prompt_change_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        cache
            .put(&CacheEntry {
                template_id: "designed-v1".into(),
                category: "Tuberculosis".into(),
                model: "m".into(),
                prompt: "old".into(),
                response: "x".into(),
                captured_at: Utc::now(),
                provenance: "test".into(),
            })
            .unwrap();
        assert!(cache.get(&req("old"), "m").unwrap().is_some());
        assert!(cache.get(&req("new"), "m").unwrap().is_none());
        assert!(cache.get(&req("old"), "other-model").unwrap().is_none());
    }

    #[test]
    fn offline_miss_is_transport_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LlmConfig { offline: true, ..Default::default() };
        let client = LlmClient::new(cfg, ResponseCache::new(dir.path()));
        assert!(matches!(client.query(&req("Q?")), Err(KnowledgeError::Transport(_))));
    }
}
