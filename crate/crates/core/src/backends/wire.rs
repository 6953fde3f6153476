//! JSON bodies of the backend HTTP protocol.
//!
//! `POST /embed_text`, `/embed_image`, `/detect`, `/generate` and
//! `/generate_multimodal`; images travel as base64-encoded PNG. Failures
//! answer with a non-2xx status and an [`ErrorBody`].

use serde::{Deserialize, Serialize};

use super::{BackendError, DetectionBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedImageRequest {
    pub image_png_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image_png_base64: String,
    pub phrase: String,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub boxes: Vec<DetectionBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateMultimodalRequest {
    pub images_png_base64: Vec<String>,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: BackendError,
}
