//! Model-backend protocol: embedding, detection, text and multimodal
//! generation. Engine code only talks to these traits; the mock, the HTTP
//! client and transcript replay are interchangeable behind them.

mod mock;
mod remote;
mod transcript;
pub mod wire;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::renderer::SampledView;

pub use mock::{MockBackend, Vocabulary, DEFAULT_VOCABULARY, MIN_DETECTABLE_PIXELS, STYLE_COLORS};
pub use remote::RemoteBackend;
pub use transcript::{
    parse_transcript, TranscriptModel, TRANSCRIPT_VERSION,
    request_digest, Endpoint, Exchange, ExchangeResponse, Recorder, ReplayBackend, ReplaySource, TranscriptLine,
};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum BackendError {
    #[error("backend timeout: {0}")]
    Timeout(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("backend failure: {0}")]
    Remote(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("transcript replay mismatch: {0}")]
    Replay(String),
}

/// One detected box in pixel coordinates (end-exclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub confidence: f64,
    pub phrase: String,
}

impl DetectionBox {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, o: &DetectionBox) -> f64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        let inter = w * h;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

pub trait EmbeddingBackend: Send + Sync {
    /// Unit-norm embedding of a text prompt.
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError>;
    /// Unit-norm embedding of a view's RGB image, in the text space.
    fn embed_image(&self, view: &SampledView) -> Result<Vec<f32>, BackendError>;
}

pub trait DetectionBackend: Send + Sync {
    /// Boxes for `phrase` whose confidence reaches `box_threshold` and whose
    /// phrase match reaches `text_threshold`.
    fn detect(
        &self,
        view: &SampledView,
        phrase: &str,
        box_threshold: f64,
        text_threshold: f64,
    ) -> Result<Vec<DetectionBox>, BackendError>;
}

pub trait TextGenBackend: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, BackendError>;
}

pub trait MultimodalBackend: Send + Sync {
    fn generate_multimodal(&self, views: &[&SampledView], prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Embedding,
    Detection,
    TextGen,
    Multimodal,
}

impl BackendKind {
    pub const ALL: [BackendKind; 4] =
        [BackendKind::Embedding, BackendKind::Detection, BackendKind::TextGen, BackendKind::Multimodal];
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Embedding => "embedding",
            BackendKind::Detection => "detection",
            BackendKind::TextGen => "text_gen",
            BackendKind::Multimodal => "multimodal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentHealth {
    pub kind: BackendKind,
    pub endpoint: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// All four roles plus bookkeeping used by the recorder.
pub trait Backend: EmbeddingBackend + DetectionBackend + TextGenBackend + MultimodalBackend {
    /// Latency to record for the call that just returned, when the backend
    /// defines it itself (mock: zero; replay: the recorded value).
    fn reported_latency_ms(&self) -> Option<u64> {
        None
    }

    fn health(&self) -> Vec<ComponentHealth>;

    fn name(&self) -> &str;
}

/// Where a backend lives and how patiently to call it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Base URL, or "mock".
    pub endpoint: String,
    pub timeout_s: f64,
    pub retry: u32,
}

pub const DEFAULT_TIMEOUT_S: f64 = 60.0;
pub const DEFAULT_RETRIES: u32 = 2;

impl BackendDescriptor {
    pub fn new(kind: BackendKind, endpoint: impl Into<String>) -> Self {
        Self { kind, endpoint: endpoint.into(), timeout_s: DEFAULT_TIMEOUT_S, retry: DEFAULT_RETRIES }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s > 0.0) {
            return Err(format!("{} backend timeout must be positive", self.kind));
        }
        if !self.is_mock() && !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(format!("{} backend endpoint must be an http(s) URL or \"mock\"", self.kind));
        }
        Ok(())
    }
}

pub const ENV_MOCK: &str = "SWEEPER_MOCK";
pub const ENV_BACKEND_URL: &str = "SWEEPER_BACKEND_URL";

/// Backend selection for a whole run: the deterministic mock or one
/// descriptor per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock,
    Remote { descriptors: Vec<BackendDescriptor> },
}

impl BackendConfig {
    pub fn remote(url: &str) -> Self {
        BackendConfig::Remote {
            descriptors: BackendKind::ALL.iter().map(|&k| BackendDescriptor::new(k, url)).collect(),
        }
    }

    /// `SWEEPER_MOCK=1` wins over `SWEEPER_BACKEND_URL`; `None` when neither is set.
    pub fn from_env() -> Option<Self> {
        if std::env::var(ENV_MOCK).is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true")) {
            return Some(BackendConfig::Mock);
        }
        std::env::var(ENV_BACKEND_URL).ok().filter(|u| !u.is_empty()).map(|u| Self::remote(&u))
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, BackendConfig::Mock)
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            BackendConfig::Mock => Ok(()),
            BackendConfig::Remote { descriptors } => {
                for kind in BackendKind::ALL {
                    let d = descriptors
                        .iter()
                        .find(|d| d.kind == kind)
                        .ok_or_else(|| format!("no descriptor for the {kind} backend"))?;
                    d.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Instantiates the backend. The mock's vocabulary is the default one
    /// extended with `labels` (the object names of the models in play).
    pub fn build(&self, labels: &[String]) -> Result<Arc<dyn Backend>, String> {
        self.validate()?;
        Ok(match self {
            BackendConfig::Mock => Arc::new(MockBackend::new(Vocabulary::default().extended(labels))),
            BackendConfig::Remote { descriptors } => Arc::new(RemoteBackend::new(descriptors.clone())?),
        })
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identity_and_orthogonality() {
        assert!((cosine(&[0.6, 0.8], &[0.6, 0.8]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn iou_of_boxes() {
        let b = |x0, y0, x1, y1| DetectionBox { x0, y0, x1, y1, confidence: 1.0, phrase: String::new() };
        assert_eq!(b(0.0, 0.0, 10.0, 10.0).iou(&b(0.0, 0.0, 10.0, 10.0)), 1.0);
        assert_eq!(b(0.0, 0.0, 10.0, 10.0).iou(&b(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert!((b(0.0, 0.0, 10.0, 10.0).iou(&b(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn descriptors_validate() {
        let mut d = BackendDescriptor::new(BackendKind::Detection, "http://localhost:9000");
        assert!(d.validate().is_ok());
        d.timeout_s = 0.0;
        assert!(d.validate().is_err());
        assert!(BackendDescriptor::new(BackendKind::TextGen, "ftp://x").validate().is_err());
        assert!(BackendConfig::Remote { descriptors: vec![] }.validate().is_err());
        assert!(BackendConfig::remote("http://h").validate().is_ok());
    }
}
