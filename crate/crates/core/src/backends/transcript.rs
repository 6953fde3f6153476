//! Recording of backend exchanges and their offline replay.
//!
//! Every call made through a [`Recorder`] is logged under a scope (one per
//! model and question) with a running sequence number. A transcript is a
//! JSONL file of [`TranscriptLine`]s; [`ReplaySource`] serves the recorded
//! responses back, checking that each request digest matches.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Backend, BackendError, ComponentHealth, DetectionBackend, DetectionBox, EmbeddingBackend, MultimodalBackend,
    TextGenBackend,
};
use crate::renderer::SampledView;

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    EmbedText,
    EmbedImage,
    Detect,
    Generate,
    GenerateMultimodal,
}

impl Endpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::EmbedText => "embed_text",
            Endpoint::EmbedImage => "embed_image",
            Endpoint::Detect => "detect",
            Endpoint::Generate => "generate",
            Endpoint::GenerateMultimodal => "generate_multimodal",
        }
    }
}

/// SHA-256 over the endpoint, the text argument, the raw RGB of each view
/// and any numeric parameters.
pub fn request_digest(endpoint: Endpoint, text: &str, views: &[&SampledView], params: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.as_str().as_bytes());
    h.update((text.len() as u64).to_le_bytes());
    h.update(text.as_bytes());
    for v in views {
        h.update(v.width.to_le_bytes());
        h.update(v.height.to_le_bytes());
        h.update(&v.rgb);
    }
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeResponse {
    Embedding(Vec<f32>),
    Detections(Vec<DetectionBox>),
    Text(String),
    Error(BackendError),
}

impl ExchangeResponse {
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("responses serialize");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub scope: String,
    pub seq: u64,
    pub endpoint: Endpoint,
    pub request_digest: String,
    pub response_digest: String,
    pub latency_ms: u64,
    pub response: ExchangeResponse,
}

/// A model taking part in a recorded session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptModel {
    pub label: String,
    pub source: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TranscriptLine {
    Header {
        version: u32,
        session_id: String,
        created_at: String,
        backend: String,
        models: Vec<TranscriptModel>,
    },
    Question {
        row_id: String,
        question: String,
    },
    Exchange(Exchange),
    RowDigest {
        row_id: String,
        digest: String,
    },
}

impl TranscriptLine {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("transcript lines serialize");
        s.push('\n');
        s
    }
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptLine>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("transcript line {}: {e}", i + 1)))
        .collect()
}

type ScopeFactory = dyn Fn(&str) -> Arc<dyn Backend> + Send + Sync;

/// Hands out per-scope backends that log every exchange.
#[derive(Clone)]
pub struct Recorder {
    factory: Arc<ScopeFactory>,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        Self::with_factory(Arc::new(move |_| inner.clone()))
    }

    /// Records on top of a replayed transcript, for verification runs.
    pub fn replaying(source: Arc<ReplaySource>) -> Self {
        Self::with_factory(Arc::new(move |scope| Arc::new(source.backend(scope)) as Arc<dyn Backend>))
    }

    fn with_factory(factory: Arc<ScopeFactory>) -> Self {
        Self { factory, log: Arc::new(Mutex::new(Vec::new())) }
    }

    pub fn scoped(&self, scope: &str) -> Arc<dyn Backend> {
        Arc::new(ScopedRecorder {
            inner: (self.factory)(scope),
            scope: scope.to_string(),
            seq: AtomicU64::new(0),
            last_latency: Mutex::new(None),
            log: self.log.clone(),
        })
    }

    /// Removes and returns the exchanges of the given scopes, each scope in
    /// call order, scopes in the order given.
    pub fn take(&self, scopes: &[String]) -> Vec<Exchange> {
        let mut log = self.log.lock().unwrap();
        let (mut taken, rest): (Vec<_>, Vec<_>) = log.drain(..).partition(|e| scopes.contains(&e.scope));
        *log = rest;
        taken.sort_by_key(|e| (scopes.iter().position(|s| *s == e.scope), e.seq));
        taken
    }
}

struct ScopedRecorder {
    inner: Arc<dyn Backend>,
    scope: String,
    seq: AtomicU64,
    last_latency: Mutex<Option<u64>>,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl ScopedRecorder {
    fn record<T>(
        &self,
        endpoint: Endpoint,
        digest: String,
        call: impl FnOnce() -> Result<T, BackendError>,
        wrap: impl FnOnce(&T) -> ExchangeResponse,
    ) -> Result<T, BackendError> {
        let start = Instant::now();
        let result = call();
        let latency_ms = self.inner.reported_latency_ms().unwrap_or_else(|| start.elapsed().as_millis() as u64);
        let response = match &result {
            Ok(v) => wrap(v),
            Err(e) => ExchangeResponse::Error(e.clone()),
        };
        *self.last_latency.lock().unwrap() = Some(latency_ms);
        let exchange = Exchange {
            scope: self.scope.clone(),
            seq: self.seq.fetch_add(1, Ordering::SeqCst),
            endpoint,
            request_digest: digest,
            response_digest: response.digest(),
            latency_ms,
            response,
        };
        self.log.lock().unwrap().push(exchange);
        result
    }
}

impl EmbeddingBackend for ScopedRecorder {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let d = request_digest(Endpoint::EmbedText, text, &[], &[]);
        self.record(Endpoint::EmbedText, d, || self.inner.embed_text(text), |v| ExchangeResponse::Embedding(v.clone()))
    }

    fn embed_image(&self, view: &SampledView) -> Result<Vec<f32>, BackendError> {
        let d = request_digest(Endpoint::EmbedImage, "", &[view], &[]);
        self.record(Endpoint::EmbedImage, d, || self.inner.embed_image(view), |v| ExchangeResponse::Embedding(v.clone()))
    }
}

impl DetectionBackend for ScopedRecorder {
    fn detect(
        &self,
        view: &SampledView,
        phrase: &str,
        box_threshold: f64,
        text_threshold: f64,
    ) -> Result<Vec<DetectionBox>, BackendError> {
        let d = request_digest(Endpoint::Detect, phrase, &[view], &[box_threshold, text_threshold]);
        self.record(
            Endpoint::Detect,
            d,
            || self.inner.detect(view, phrase, box_threshold, text_threshold),
            |v| ExchangeResponse::Detections(v.clone()),
        )
    }
}

impl TextGenBackend for ScopedRecorder {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let d = request_digest(Endpoint::Generate, prompt, &[], &[]);
        self.record(Endpoint::Generate, d, || self.inner.generate(prompt), |v| ExchangeResponse::Text(v.clone()))
    }
}

impl MultimodalBackend for ScopedRecorder {
    fn generate_multimodal(&self, views: &[&SampledView], prompt: &str) -> Result<String, BackendError> {
        let d = request_digest(Endpoint::GenerateMultimodal, prompt, views, &[]);
        self.record(
            Endpoint::GenerateMultimodal,
            d,
            || self.inner.generate_multimodal(views, prompt),
            |v| ExchangeResponse::Text(v.clone()),
        )
    }
}

impl Backend for ScopedRecorder {
    fn reported_latency_ms(&self) -> Option<u64> {
        *self.last_latency.lock().unwrap()
    }

    fn health(&self) -> Vec<ComponentHealth> {
        self.inner.health()
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// A parsed transcript.
#[derive(Debug, Clone, Default)]
pub struct ReplaySource {
    pub lines: Vec<TranscriptLine>,
    scopes: HashMap<String, Vec<Exchange>>,
}

impl ReplaySource {
    pub fn new(lines: Vec<TranscriptLine>) -> Self {
        let mut scopes: HashMap<String, Vec<Exchange>> = HashMap::new();
        for line in &lines {
            if let TranscriptLine::Exchange(e) = line {
                scopes.entry(e.scope.clone()).or_default().push(e.clone());
            }
        }
        for v in scopes.values_mut() {
            v.sort_by_key(|e| e.seq);
        }
        Self { lines, scopes }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        parse_transcript(text).map(Self::new)
    }

    pub fn header(&self) -> Option<&TranscriptLine> {
        self.lines.iter().find(|l| matches!(l, TranscriptLine::Header { .. }))
    }

    /// `(row_id, question)` in recorded order.
    pub fn questions(&self) -> Vec<(String, String)> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                TranscriptLine::Question { row_id, question } => Some((row_id.clone(), question.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn row_digests(&self) -> BTreeMap<String, String> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                TranscriptLine::RowDigest { row_id, digest } => Some((row_id.clone(), digest.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn backend(&self, scope: &str) -> ReplayBackend {
        ReplayBackend {
            scope: scope.to_string(),
            exchanges: self.scopes.get(scope).cloned().unwrap_or_default(),
            used: Mutex::new(Vec::new()),
            last_latency: Mutex::new(None),
        }
    }
}

/// Serves one scope's recorded responses. A request is answered by the
/// first unused exchange with the same endpoint and request digest.
pub struct ReplayBackend {
    scope: String,
    exchanges: Vec<Exchange>,
    used: Mutex<Vec<usize>>,
    last_latency: Mutex<Option<u64>>,
}

impl ReplayBackend {
    fn answer(&self, endpoint: Endpoint, digest: &str) -> Result<ExchangeResponse, BackendError> {
        let mut used = self.used.lock().unwrap();
        let found = self
            .exchanges
            .iter()
            .enumerate()
            .find(|(i, e)| e.endpoint == endpoint && e.request_digest == digest && !used.contains(i));
        let Some((i, e)) = found else {
            return Err(BackendError::Replay(format!(
                "no recorded {} exchange in scope {} for request {}",
                endpoint.as_str(),
                self.scope,
                &digest[..12.min(digest.len())]
            )));
        };
        used.push(i);
        *self.last_latency.lock().unwrap() = Some(e.latency_ms);
        if e.response.digest() != e.response_digest {
            return Err(BackendError::Replay(format!("response digest mismatch at {}#{}", e.scope, e.seq)));
        }
        match &e.response {
            ExchangeResponse::Error(err) => Err(err.clone()),
            r => Ok(r.clone()),
        }
    }

    fn unexpected(&self, endpoint: Endpoint) -> BackendError {
        BackendError::Replay(format!("recorded {} response has the wrong type", endpoint.as_str()))
    }

    fn embedding(&self, endpoint: Endpoint, digest: String) -> Result<Vec<f32>, BackendError> {
        match self.answer(endpoint, &digest)? {
            ExchangeResponse::Embedding(v) => Ok(v),
            _ => Err(self.unexpected(endpoint)),
        }
    }

    fn text(&self, endpoint: Endpoint, digest: String) -> Result<String, BackendError> {
        match self.answer(endpoint, &digest)? {
            ExchangeResponse::Text(v) => Ok(v),
            _ => Err(self.unexpected(endpoint)),
        }
    }
}

impl EmbeddingBackend for ReplayBackend {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        self.embedding(Endpoint::EmbedText, request_digest(Endpoint::EmbedText, text, &[], &[]))
    }

    fn embed_image(&self, view: &SampledView) -> Result<Vec<f32>, BackendError> {
        self.embedding(Endpoint::EmbedImage, request_digest(Endpoint::EmbedImage, "", &[view], &[]))
    }
}

impl DetectionBackend for ReplayBackend {
    fn detect(
        &self,
        view: &SampledView,
        phrase: &str,
        box_threshold: f64,
        text_threshold: f64,
    ) -> Result<Vec<DetectionBox>, BackendError> {
        let d = request_digest(Endpoint::Detect, phrase, &[view], &[box_threshold, text_threshold]);
        match self.answer(Endpoint::Detect, &d)? {
            ExchangeResponse::Detections(v) => Ok(v),
            _ => Err(self.unexpected(Endpoint::Detect)),
        }
    }
}

impl TextGenBackend for ReplayBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        self.text(Endpoint::Generate, request_digest(Endpoint::Generate, prompt, &[], &[]))
    }
}

impl MultimodalBackend for ReplayBackend {
    fn generate_multimodal(&self, views: &[&SampledView], prompt: &str) -> Result<String, BackendError> {
        self.text(
            Endpoint::GenerateMultimodal,
            request_digest(Endpoint::GenerateMultimodal, prompt, views, &[]),
        )
    }
}

impl Backend for ReplayBackend {
    fn reported_latency_ms(&self) -> Option<u64> {
        *self.last_latency.lock().unwrap()
    }

    fn health(&self) -> Vec<ComponentHealth> {
        Vec::new()
    }

    fn name(&self) -> &str {
        "replay"
    }
}
