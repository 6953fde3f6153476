//! Blocking HTTP client for the backend protocol.

use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    DetectRequest, DetectResponse, EmbedImageRequest, EmbedTextRequest, EmbeddingResponse, ErrorBody,
    GenerateMultimodalRequest, GenerateRequest, TextResponse,
};
use super::{
    Backend, BackendDescriptor, BackendError, BackendKind, ComponentHealth, DetectionBackend, DetectionBox,
    EmbeddingBackend, MultimodalBackend, TextGenBackend,
};
use crate::renderer::SampledView;

const BACKOFF_BASE: Duration = Duration::from_millis(100);

struct Route {
    descriptor: BackendDescriptor,
    agent: ureq::Agent,
}

pub struct RemoteBackend {
    routes: Vec<Route>,
}

fn png_base64(view: &SampledView) -> String {
    base64::engine::general_purpose::STANDARD.encode(view.png_bytes())
}

enum Attempt {
    Retry(BackendError),
    Fail(BackendError),
}

impl RemoteBackend {
    pub fn new(descriptors: Vec<BackendDescriptor>) -> Result<Self, String> {
        let mut routes = Vec::new();
        for kind in BackendKind::ALL {
            let descriptor = descriptors
                .iter()
                .find(|d| d.kind == kind)
                .cloned()
                .ok_or_else(|| format!("no descriptor for the {kind} backend"))?;
            descriptor.validate()?;
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(descriptor.timeout_s)))
                .http_status_as_error(false)
                .build()
                .into();
            routes.push(Route { descriptor, agent });
        }
        Ok(Self { routes })
    }

    fn route(&self, kind: BackendKind) -> &Route {
        self.routes.iter().find(|r| r.descriptor.kind == kind).expect("one route per kind")
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(route: &Route, url: &str, body: &Req) -> Result<Resp, Attempt> {
        let mut resp = match route.agent.post(url).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(Attempt::Retry(BackendError::Timeout(format!("{url}: {t}")))),
            Err(e) => return Err(Attempt::Retry(BackendError::Unavailable(format!("{url}: {e}")))),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(t)) => return Err(Attempt::Retry(BackendError::Timeout(format!("{url}: {t}")))),
            Err(e) => return Err(Attempt::Retry(BackendError::Unavailable(format!("{url}: {e}")))),
        };
        if (200..300).contains(&status) {
            return serde_json::from_str(&text)
                .map_err(|e| Attempt::Fail(BackendError::Malformed(format!("{url}: {e}"))));
        }
        let error = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or_else(|_| BackendError::Remote(format!("{url}: HTTP {status}")));
        if status >= 500 {
            Err(Attempt::Retry(error))
        } else {
            Err(Attempt::Fail(error))
        }
    }

    /// POSTs `body`, retrying transport failures and 5xx replies with
    /// exponential backoff.
    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        kind: BackendKind,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let route = self.route(kind);
        let url = format!("{}/{}", route.descriptor.endpoint.trim_end_matches('/'), path);
        let mut last = None;
        for attempt in 0..=route.descriptor.retry {
            if attempt > 0 {
                std::thread::sleep(BACKOFF_BASE * 2u32.pow(attempt - 1));
            }
            match Self::attempt(route, &url, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    tracing::warn!(%url, attempt, error = %e, "backend call failed");
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

impl EmbeddingBackend for RemoteBackend {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let r: EmbeddingResponse =
            self.call(BackendKind::Embedding, "embed_text", &EmbedTextRequest { text: text.to_string() })?;
        Ok(r.embedding)
    }

    fn embed_image(&self, view: &SampledView) -> Result<Vec<f32>, BackendError> {
        let r: EmbeddingResponse = self.call(
            BackendKind::Embedding,
            "embed_image",
            &EmbedImageRequest { image_png_base64: png_base64(view) },
        )?;
        Ok(r.embedding)
    }
}

impl DetectionBackend for RemoteBackend {
    fn detect(
        &self,
        view: &SampledView,
        phrase: &str,
        box_threshold: f64,
        text_threshold: f64,
    ) -> Result<Vec<DetectionBox>, BackendError> {
        let r: DetectResponse = self.call(
            BackendKind::Detection,
            "detect",
            &DetectRequest {
                image_png_base64: png_base64(view),
                phrase: phrase.to_string(),
                box_threshold,
                text_threshold,
            },
        )?;
        Ok(r.boxes)
    }
}

impl TextGenBackend for RemoteBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let r: TextResponse =
            self.call(BackendKind::TextGen, "generate", &GenerateRequest { prompt: prompt.to_string() })?;
        Ok(r.text)
    }
}

impl MultimodalBackend for RemoteBackend {
    fn generate_multimodal(&self, views: &[&SampledView], prompt: &str) -> Result<String, BackendError> {
        let r: TextResponse = self.call(
            BackendKind::Multimodal,
            "generate_multimodal",
            &GenerateMultimodalRequest {
                images_png_base64: views.iter().map(|v| png_base64(v)).collect(),
                prompt: prompt.to_string(),
            },
        )?;
        Ok(r.text)
    }
}

impl Backend for RemoteBackend {
    fn health(&self) -> Vec<ComponentHealth> {
        self.routes
            .iter()
            .map(|route| {
                let url = format!("{}/healthz", route.descriptor.endpoint.trim_end_matches('/'));
                let (status, detail) = match route.agent.get(&url).call() {
                    Ok(r) if r.status().is_success() => ("ok", None),
                    Ok(r) => ("unreachable", Some(format!("HTTP {}", r.status().as_u16()))),
                    Err(e) => ("unreachable", Some(e.to_string())),
                };
                ComponentHealth {
                    kind: route.descriptor.kind,
                    endpoint: route.descriptor.endpoint.clone(),
                    status: status.to_string(),
                    detail,
                }
            })
            .collect()
    }

    fn name(&self) -> &str {
        "remote"
    }
}
