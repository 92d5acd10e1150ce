//! Chat-completions client with an on-disk response cache.
//!
//! Cache entries live at `<cache_dir>/<sha256(prompt)>.json`. A warm cache
//! makes reruns network-free and byte-stable.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::PositionLabel;
use crate::error::{Error, Result};

pub const URL_ENV: &str = "POSITIONFORGE_LLM_URL";
pub const KEY_ENV: &str = "POSITIONFORGE_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    pub cache_dir: PathBuf,
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    4
}
fn default_in_flight() -> usize {
    4
}
fn default_rpm() -> u32 {
    60
}
fn default_backoff() -> u64 {
    500
}

impl LlmConfig {
    pub fn new(
        endpoint_url: impl Into<String>,
        model_name: impl Into<String>,
        cache_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_retries: default_retries(),
            cache_dir: cache_dir.into(),
            api_key: None,
            max_in_flight: default_in_flight(),
            requests_per_minute: default_rpm(),
            backoff_ms: default_backoff(),
        }
    }

    /// Endpoint and key from `POSITIONFORGE_LLM_URL` / `POSITIONFORGE_LLM_KEY`.
    pub fn from_env(model_name: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        let mut c = Self::new(
            std::env::var(URL_ENV).unwrap_or_default(),
            model_name,
            cache_dir,
        );
        c.api_key = std::env::var(KEY_ENV).ok();
        c
    }
}

/// Maps a free-text completion to a label: the first word (ignoring case
/// and punctuation) that names one of the five positions.
pub fn parse_label(response: &str) -> Result<PositionLabel> {
    response
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .find_map(|w| w.parse::<PositionLabel>().ok())
        .ok_or_else(|| Error::Unparseable(response.to_string()))
}

/// Blocking JSON POST.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
    ) -> std::result::Result<Value, String>;
}

#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
    ) -> std::result::Result<Value, String> {
        let mut req = ureq::post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req
                .header("Authorization", &format!("Bearer {key}"))
                .header("api-key", key);
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    prompt: String,
    model: String,
    response: String,
}

/// Bounds concurrent requests and requests per rolling minute.
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    window: Mutex<VecDeque<Instant>>,
}

impl Limiter {
    fn new() -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            window: Mutex::new(VecDeque::new()),
        }
    }

    fn acquire(&self, max_in_flight: usize, per_minute: u32) {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= max_in_flight.max(1) {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        drop(n);
        if per_minute == 0 {
            return;
        }
        loop {
            let mut w = self.window.lock().expect("limiter poisoned");
            let now = Instant::now();
            while w
                .front()
                .is_some_and(|t| now.duration_since(*t) >= Duration::from_secs(60))
            {
                w.pop_front();
            }
            if w.len() < per_minute as usize {
                w.push_back(now);
                return;
            }
            let wait = Duration::from_secs(60) - now.duration_since(w[0]);
            drop(w);
            std::thread::sleep(wait);
        }
    }

    fn release(&self) {
        *self.in_flight.lock().expect("limiter poisoned") -= 1;
        self.freed.notify_one();
    }
}

pub struct LlmClient<T: Transport = HttpTransport> {
    config: LlmConfig,
    transport: T,
    limiter: Limiter,
}

impl LlmClient<HttpTransport> {
    pub fn new(config: LlmConfig) -> Self {
        Self::with_transport(config, HttpTransport)
    }
}

impl<T: Transport> LlmClient<T> {
    pub fn with_transport(config: LlmConfig, transport: T) -> Self {
        Self {
            config,
            transport,
            limiter: Limiter::new(),
        }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn cache_path(&self, prompt: &str) -> PathBuf {
        self.config
            .cache_dir
            .join(format!("{}.json", prompt_key(prompt)))
    }

    /// Classifies one prompt, returning the label and the raw completion.
    pub fn classify(&self, prompt: &str) -> Result<(PositionLabel, String)> {
        let path = self.cache_path(prompt);
        if let Some(entry) = read_cache(&path)? {
            let label = parse_label(&entry.response)?;
            return Ok((label, entry.response));
        }
        let response = self.request(prompt)?;
        let label = parse_label(&response)?;
        let entry = CacheEntry {
            prompt: prompt.to_string(),
            model: self.config.model_name.clone(),
            response: response.clone(),
        };
        write_atomic(&path, &serde_json::to_vec_pretty(&entry)?)?;
        Ok((label, response))
    }

    fn request(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let attempts = self.config.max_retries + 1;
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << (attempt - 1).min(16),
                ));
            }
            self.limiter
                .acquire(self.config.max_in_flight, self.config.requests_per_minute);
            let res = self.transport.post_json(
                &self.config.endpoint_url,
                self.config.api_key.as_deref(),
                &body,
            );
            self.limiter.release();
            match res {
                Ok(v) => match v
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                {
                    Some(text) => return Ok(text.to_string()),
                    None => last_err = format!("response without choices[0].message.content: {v}"),
                },
                Err(e) => last_err = e,
            }
        }
        Err(Error::Transport {
            attempts,
            message: last_err,
        })
    }
}

pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn read_cache(path: &Path) -> Result<Option<CacheEntry>> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Writes via a sibling temp file and rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Canned {
        reply: Option<String>,
        calls: AtomicUsize,
    }

    impl Transport for Canned {
        fn post_json(
            &self,
            _url: &str,
            _key: Option<&str>,
            body: &Value,
        ) -> std::result::Result<Value, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            assert_eq!(body["temperature"], json!(0.0));
            assert_eq!(body["messages"][0]["role"], "user");
            match &self.reply {
                Some(r) => {
                    Ok(json!({"choices": [{"message": {"role": "assistant", "content": r}}]}))
                }
                None => Err("connection refused".into()),
            }
        }
    }

    fn client(dir: &Path, reply: Option<&str>) -> LlmClient<Canned> {
        let mut cfg = LlmConfig::new("http://unused", "gpt-test", dir);
        cfg.backoff_ms = 1;
        cfg.max_retries = 2;
        LlmClient::with_transport(
            cfg,
            Canned {
                reply: reply.map(str::to_string),
                calls: AtomicUsize::new(0),
            },
        )
    }

    #[test]
    fn parse_label_tolerates_decoration() {
        // every label under every decoration
        let decorations = [
            "{}",
            " {}",
            "{}.",
            " {}.\n",
            "\"{}\"",
            "**{}**",
            "Answer: {}",
            "{}!",
        ];
        for label in PositionLabel::ALL {
            for d in decorations {
                for text in [
                    label.as_str().to_string(),
                    label.as_str().to_lowercase(),
                    label.as_str().to_uppercase(),
                ] {
                    let s = d.replace("{}", &text);
                    assert_eq!(parse_label(&s).unwrap(), label, "{s:?}");
                }
            }
        }
        assert!(matches!(parse_label("I think…"), Err(Error::Unparseable(t)) if t == "I think…"));
    }

    #[test]
    fn caches_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), Some(" oppose."));
        let (label, raw) = c.classify("prompt-1").unwrap();
        assert_eq!(label, PositionLabel::Oppose);
        assert_eq!(raw, " oppose.");
        let bytes = std::fs::read(c.cache_path("prompt-1")).unwrap();
        assert_eq!(c.transport.calls.load(Ordering::SeqCst), 1);

        // a client with a dead transport replays from cache
        let offline = client(dir.path(), None);
        assert_eq!(
            offline.classify("prompt-1").unwrap().0,
            PositionLabel::Oppose
        );
        assert_eq!(offline.transport.calls.load(Ordering::SeqCst), 0);
        assert_eq!(std::fs::read(c.cache_path("prompt-1")).unwrap(), bytes);
    }

    #[test]
    fn retries_then_fails() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), None);
        match c.classify("p") {
            Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn unparseable_is_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), Some("I think it depends"));
        assert!(matches!(c.classify("p"), Err(Error::Unparseable(_))));
        assert!(!c.cache_path("p").exists());
    }

    #[test]
    fn key_is_sha256_hex() {
        assert_eq!(
            prompt_key(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
