//! Concrete oracles: a translation file on disk, a JSON-over-HTTP service
//! and the synthetic translator, all behind a persistent cache.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use seqmia_core::corpus::{tokenize, PairKey, SentencePair};
use seqmia_core::translator::{Oracle, SyntheticTranslator, Translation};
use seqmia_core::Error as CoreError;

use crate::cache::{parse_cache, TranslationCache};
use crate::error::{Result, ToolError};

/// Receives each translation as soon as it exists, with its input position.
pub type Sink<'a> = dyn Fn(usize, &Translation) -> seqmia_core::Result<()> + Sync + 'a;

/// Translations prepared elsewhere, in cache-file format.
#[derive(Debug)]
pub struct FileCacheOracle {
    id: String,
    entries: std::collections::BTreeMap<PairKey, Translation>,
}

impl FileCacheOracle {
    /// `id` defaults to the oracle id found on the first line.
    pub fn load(path: &Path, id: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
        let id = match id {
            Some(id) => id.to_string(),
            None => text.split('\t').next().unwrap_or_default().to_string(),
        };
        if id.is_empty() {
            return Err(ToolError::corrupt(
                path,
                "empty translation file and no oracle id configured",
            ));
        }
        let entries = parse_cache(path, &text, &id)?;
        Ok(FileCacheOracle { id, entries })
    }
}

impl Oracle for FileCacheOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> seqmia_core::Result<Vec<Translation>> {
        let missing: Vec<String> = pairs
            .iter()
            .filter(|p| !self.entries.contains_key(&p.key()))
            .map(|p| p.key().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CoreError::MissingTranslation(missing));
        }
        Ok(pairs.iter().map(|p| self.entries[&p.key()].clone()).collect())
    }
}

#[derive(Debug, Serialize)]
struct HttpRequest<'a> {
    source: &'a str,
}

#[derive(Debug, Deserialize)]
struct HttpResponse {
    hypothesis: String,
    score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub endpoint: String,
    pub token: Option<String>,
    /// Pairs handed to the worker pool at a time.
    pub batch_size: usize,
    pub requests_per_second: f64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt up to `max_backoff`.
    pub backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpSettings {
            endpoint: endpoint.into(),
            token: None,
            batch_size: 32,
            requests_per_second: 10.0,
            max_in_flight: 4,
            max_retries: 3,
            backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(10),
            timeout: Duration::from_secs(60),
        }
    }
}

/// Spaces request starts at least `1 / rps` apart.
struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(rps: f64) -> Self {
        let interval = if rps > 0.0 && rps.is_finite() {
            Duration::from_secs_f64(1.0 / rps)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let slot = (*next).max(Instant::now());
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

enum Attempt {
    Done(Translation),
    Retry(String),
    Fatal(String),
}

/// One request per sentence; `POST {"source": ...}` answered by
/// `{"hypothesis": ..., "score": ...}`.
pub struct HttpOracle {
    id: String,
    settings: HttpSettings,
    agent: ureq::Agent,
}

impl HttpOracle {
    pub fn new(id: impl Into<String>, settings: HttpSettings) -> Result<Self> {
        if settings.batch_size == 0 || settings.max_in_flight == 0 {
            return Err(ToolError::Config(
                "http oracle needs a positive batch size and in-flight limit".into(),
            ));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpOracle {
            id: id.into(),
            settings,
            agent,
        })
    }

    fn attempt(&self, source: &str) -> Attempt {
        let mut req = self.agent.post(&self.settings.endpoint);
        if let Some(t) = &self.settings.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(HttpRequest { source }) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(format!("HTTP {status}"));
        }
        match resp.body_mut().read_json::<HttpResponse>() {
            Ok(r) => Attempt::Done(Translation {
                hypothesis: tokenize(&r.hypothesis),
                model_score: r.score,
                origin: self.id.clone(),
            }),
            Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
        }
    }

    fn translate_one(&self, limiter: &RateLimiter, source: &str) -> std::result::Result<Translation, String> {
        let mut delay = self.settings.backoff;
        let mut attempt = 0;
        loop {
            limiter.acquire();
            match self.attempt(source) {
                Attempt::Done(t) => return Ok(t),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.settings.max_retries => {
                    return Err(format!("{e} (gave up after {} attempts)", attempt + 1))
                }
                Attempt::Retry(e) => {
                    log::debug!("{}: retrying after {e}", self.id);
                    thread::sleep(delay);
                    delay = (delay * 2).min(self.settings.max_backoff);
                    attempt += 1;
                }
            }
        }
    }

    /// Translates every pair, handing each success to `sink` as it lands.
    /// If any pair fails the error lists every failed key; successes have
    /// already been delivered.
    pub fn translate_each(&self, pairs: &[SentencePair], sink: &Sink<'_>) -> seqmia_core::Result<Vec<Translation>> {
        let limiter = RateLimiter::new(self.settings.requests_per_second);
        let results: Vec<Mutex<Option<std::result::Result<Translation, String>>>> =
            pairs.iter().map(|_| Mutex::new(None)).collect();
        for (wave, chunk) in pairs.chunks(self.settings.batch_size).enumerate() {
            let offset = wave * self.settings.batch_size;
            let next = AtomicUsize::new(0);
            thread::scope(|s| {
                for _ in 0..self.settings.max_in_flight.min(chunk.len()) {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(pair) = chunk.get(i) else { break };
                        let source = seqmia_core::corpus::detokenize(&pair.source);
                        let r = self.translate_one(&limiter, &source).and_then(|t| {
                            sink(offset + i, &t).map_err(|e| e.to_string())?;
                            Ok(t)
                        });
                        *results[offset + i].lock().unwrap_or_else(|p| p.into_inner()) = Some(r);
                    });
                }
            });
        }
        let mut out = Vec::with_capacity(pairs.len());
        let mut failed = Vec::new();
        let mut reason = String::new();
        for (pair, slot) in pairs.iter().zip(results) {
            match slot.into_inner().unwrap_or_else(|p| p.into_inner()) {
                Some(Ok(t)) => out.push(t),
                Some(Err(e)) => {
                    if reason.is_empty() {
                        reason = e;
                    }
                    failed.push(pair.key().to_string());
                }
                None => failed.push(pair.key().to_string()),
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(CoreError::PartialTranslation { failed, reason })
        }
    }
}

impl Oracle for HttpOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> seqmia_core::Result<Vec<Translation>> {
        self.translate_each(pairs, &|_, _| Ok(()))
    }
}

pub enum Backend {
    Synthetic(SyntheticTranslator),
    File(FileCacheOracle),
    Http(HttpOracle),
}

impl Backend {
    fn translate_each(&mut self, pairs: &[SentencePair], sink: &Sink<'_>) -> seqmia_core::Result<Vec<Translation>> {
        let out = match self {
            Backend::Http(h) => return h.translate_each(pairs, sink),
            Backend::Synthetic(s) => s.translate_batch(pairs)?,
            Backend::File(f) => f.translate_batch(pairs)?,
        };
        for (i, t) in out.iter().enumerate() {
            sink(i, t)?;
        }
        Ok(out)
    }
}

/// Serves from the cache, sends only misses to the backend, and records
/// what the backend returns. `calls` counts pairs sent to the backend.
pub struct CachedOracle {
    backend: Backend,
    cache: TranslationCache,
    calls: u64,
}

impl CachedOracle {
    pub fn new(backend: Backend, cache: TranslationCache) -> Self {
        CachedOracle {
            backend,
            cache,
            calls: 0,
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn cache(&self) -> &TranslationCache {
        &self.cache
    }
}

impl Oracle for CachedOracle {
    fn id(&self) -> &str {
        self.cache.oracle_id()
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> seqmia_core::Result<Vec<Translation>> {
        let mut seen = BTreeSet::new();
        let misses: Vec<SentencePair> = pairs
            .iter()
            .filter(|p| !self.cache.contains(&p.key()) && seen.insert(p.key()))
            .cloned()
            .collect();
        if !misses.is_empty() {
            self.calls += misses.len() as u64;
            let cache = &self.cache;
            let sink = |i: usize, t: &Translation| {
                cache
                    .append(&misses[i].key(), t)
                    .map_err(|e| CoreError::Oracle(e.to_string()))
            };
            let fresh = self.backend.translate_each(&misses, &sink)?;
            for (p, t) in misses.iter().zip(fresh) {
                self.cache.remember(p.key(), t);
            }
        }
        pairs
            .iter()
            .map(|p| {
                self.cache
                    .get(&p.key())
                    .cloned()
                    .ok_or_else(|| CoreError::MissingTranslation(vec![p.key().to_string()]))
            })
            .collect()
    }
}
