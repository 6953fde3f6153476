//! Drives the HTTP client against a bridge that serves the in-process mock,
//! validating every request and response against the published schema.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use base64::Engine;
use serde_json::{json, Value};
use sweeper_core::backends::wire::*;
use sweeper_core::backends::{Backend, BackendConfig, BackendDescriptor, BackendError, BackendKind, RemoteBackend};
use sweeper_core::fixtures;
use sweeper_core::reasoning::answer_question;
use sweeper_core::renderer::SampledView;
use sweeper_core::session::{object_labels, PreparedModel};

const SCHEMA: &str = include_str!("../../../schema/backend-wire.schema.json");

fn validator(def: &str) -> jsonschema::Validator {
    let mut schema: Value = serde_json::from_str(SCHEMA).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    jsonschema::validator_for(&schema).unwrap()
}

struct Bridge {
    mock: Arc<dyn Backend>,
    views: Vec<SampledView>,
    by_png: HashMap<String, usize>,
    validators: HashMap<&'static str, jsonschema::Validator>,
    violations: Mutex<Vec<String>>,
    calls: Mutex<usize>,
}

impl Bridge {
    fn check(&self, def: &str, v: &Value) {
        let errors: Vec<String> = self.validators[def].iter_errors(v).map(|e| e.to_string()).collect();
        if !errors.is_empty() {
            self.violations.lock().unwrap().push(format!("{def}: {}", errors.join("; ")));
        }
    }

    fn view(&self, b64: &str) -> &SampledView {
        &self.views[self.by_png[b64]]
    }

    fn answer(&self, path: &str, body: &str) -> (u16, Value) {
        *self.calls.lock().unwrap() += 1;
        let req: Value = serde_json::from_str(body).unwrap();
        let result: Result<Value, BackendError> = match path {
            "/embed_text" => {
                self.check("EmbedTextRequest", &req);
                let r: EmbedTextRequest = serde_json::from_value(req).unwrap();
                self.mock.embed_text(&r.text).map(|embedding| json!(EmbeddingResponse { embedding }))
            }
            "/embed_image" => {
                self.check("EmbedImageRequest", &req);
                let r: EmbedImageRequest = serde_json::from_value(req).unwrap();
                self.mock.embed_image(self.view(&r.image_png_base64)).map(|embedding| json!(EmbeddingResponse { embedding }))
            }
            "/detect" => {
                self.check("DetectRequest", &req);
                let r: DetectRequest = serde_json::from_value(req).unwrap();
                self.mock
                    .detect(self.view(&r.image_png_base64), &r.phrase, r.box_threshold, r.text_threshold)
                    .map(|boxes| json!(DetectResponse { boxes }))
            }
            "/generate" => {
                self.check("GenerateRequest", &req);
                let r: GenerateRequest = serde_json::from_value(req).unwrap();
                self.mock.generate(&r.prompt).map(|text| json!(TextResponse { text }))
            }
            "/generate_multimodal" => {
                self.check("GenerateMultimodalRequest", &req);
                let r: GenerateMultimodalRequest = serde_json::from_value(req).unwrap();
                let views: Vec<&SampledView> = r.images_png_base64.iter().map(|b| self.view(b)).collect();
                self.mock.generate_multimodal(&views, &r.prompt).map(|text| json!(TextResponse { text }))
            }
            _ => Err(BackendError::Malformed(format!("no route {path}"))),
        };
        let (status, reply, def) = match result {
            Ok(v) => {
                let def = match path {
                    "/embed_text" | "/embed_image" => "EmbeddingResponse",
                    "/detect" => "DetectResponse",
                    _ => "TextResponse",
                };
                (200, v, def)
            }
            Err(error) => (400, json!(ErrorBody { error }), "ErrorBody"),
        };
        self.check(def, &reply);
        (status, reply)
    }
}

fn serve(bridge: Arc<Bridge>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let bridge = bridge.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let mut len = 0usize;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h == "\r\n" || h.is_empty() {
                        break;
                    }
                    if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let (status, reply) = bridge.answer(&path, std::str::from_utf8(&body).unwrap());
                let text = reply.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            });
        }
    });
    format!("http://{addr}")
}

#[test]
fn remote_client_over_the_wire_matches_the_in_process_mock() {
    let model = PreparedModel::new(0, fixtures::desk_scene(2)).unwrap();
    let labels = object_labels(std::slice::from_ref(&model.mesh));
    let mock = BackendConfig::Mock.build(&labels).unwrap();
    let b64 = base64::engine::general_purpose::STANDARD;
    let by_png = model.views.iter().enumerate().map(|(i, v)| (b64.encode(v.png_bytes()), i)).collect();
    let validators = [
        "EmbedTextRequest",
        "EmbedImageRequest",
        "EmbeddingResponse",
        "DetectRequest",
        "DetectResponse",
        "GenerateRequest",
        "GenerateMultimodalRequest",
        "TextResponse",
        "ErrorBody",
    ]
    .into_iter()
    .map(|d| (d, validator(d)))
    .collect();
    let bridge = Arc::new(Bridge {
        mock: mock.clone(),
        views: model.views.clone(),
        by_png,
        validators,
        violations: Mutex::new(Vec::new()),
        calls: Mutex::new(0),
    });
    let url = serve(bridge.clone());
    let remote = RemoteBackend::new(
        BackendKind::ALL.iter().map(|&k| BackendDescriptor { timeout_s: 10.0, ..BackendDescriptor::new(k, &url) }).collect(),
    )
    .unwrap();

    for question in ["how many displays are on the desk?", "What color is the lamp?"] {
        let local = answer_question(&model.views, &model.grid, question, mock.as_ref()).unwrap();
        let wire = answer_question(&model.views, &model.grid, question, &remote).unwrap();
        assert_eq!(serde_json::to_string(&local).unwrap(), serde_json::to_string(&wire).unwrap(), "{question}");
    }
    assert!(*bridge.calls.lock().unwrap() > 84);
    let violations = bridge.violations.lock().unwrap();
    assert!(violations.is_empty(), "{violations:#?}");
}

#[test]
fn schema_rejects_malformed_bodies() {
    assert!(!validator("DetectRequest").is_valid(&json!({ "phrase": "mug" })));
    assert!(!validator("DetectionBox").is_valid(&json!({ "x0": 0, "y0": 0, "x1": 1, "y1": 1, "confidence": 1.5, "phrase": "" })));
    assert!(!validator("ErrorBody").is_valid(&json!({ "error": { "kind": "oops", "message": "" } })));
    assert!(validator("ErrorBody").is_valid(&json!(ErrorBody { error: BackendError::Timeout("slow".into()) })));
}
