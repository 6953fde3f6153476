//! Multi-model sessions: the question table, its persistence and export,
//! backend transcripts and their replay.
//!
//! On-disk layout under a store root:
//! `<id>/session.jsonl`, `<id>/transcript.jsonl`, `<id>/views/model-<n>/<index>.png`.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assets::{compute_aabb, load_mesh, AssetError, MeshFormat, MeshModel};
use crate::backends::{
    Backend, BackendConfig, Exchange, Recorder, ReplaySource, TranscriptLine, TranscriptModel, TRANSCRIPT_VERSION,
};
use crate::reasoning::{answer_question, summarize_comparison, ComparisonSummary, ModelAnswer, PipelineError};
use crate::renderer::{render_grid, SampledView};
use crate::viewgrid::{build_view_grid, ViewGrid};

pub const MAX_MODELS: usize = 4;
pub const FROZEN_CLOCK: &str = "1970-01-01T00:00:00Z";
pub const SESSION_FILE: &str = "session.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("a session holds 1 to {MAX_MODELS} models, got {0}")]
    TooManyModels(usize),
    #[error("a session needs at least one model")]
    NoModels,
    #[error("the question is empty")]
    EmptyQuestion,
    #[error("model {source_name}: {error}")]
    Model { source_name: String, error: AssetError },
    #[error("unknown fixture {0}")]
    UnknownFixture(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("corrupt session data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a model comes from: a mesh file or a named built-in scene
/// (`fixture:desk:3`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Path(PathBuf),
    Fixture(String),
}

impl ModelSource {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("fixture:") {
            Some(name) => ModelSource::Fixture(name.to_string()),
            None => ModelSource::Path(PathBuf::from(s)),
        }
    }

    pub fn load(&self) -> Result<MeshModel, SessionError> {
        match self {
            ModelSource::Path(p) => {
                let err = |error| SessionError::Model { source_name: self.to_string(), error };
                let format = MeshFormat::from_path(p)
                    .ok_or_else(|| err(AssetError::UnsupportedFeature("file extension must be .obj or .glb".into())))?;
                load_mesh(p, format).map_err(err)
            }
            ModelSource::Fixture(name) => {
                crate::fixtures::by_name(name).ok_or_else(|| SessionError::UnknownFixture(name.clone()))
            }
        }
    }
}

impl std::fmt::Display for ModelSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelSource::Path(p) => write!(f, "{}", p.display()),
            ModelSource::Fixture(n) => write!(f, "fixture:{n}"),
        }
    }
}

/// SHA-256 over a mesh's geometry, colors and object partition.
pub fn mesh_digest(mesh: &MeshModel) -> String {
    let mut h = Sha256::new();
    for (tri, (cols, id)) in mesh.triangles().iter().zip(mesh.colors().iter().zip(mesh.object_ids())) {
        for v in tri {
            for c in v.to_array() {
                h.update(c.to_le_bytes());
            }
        }
        for c in cols {
            h.update(c);
        }
        h.update(id.to_le_bytes());
    }
    for name in mesh.object_names() {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn model_label(index: usize) -> String {
    format!("Model {}", index + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionModel {
    /// 1-based.
    pub model_index: usize,
    pub label: String,
    pub name: String,
    pub source: String,
    pub digest: String,
    pub triangles: usize,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum Cell {
    Pending,
    Answer { text: String },
    LowConfidence { text: String },
    Error { message: String },
}

impl Cell {
    pub fn answer_text(&self) -> Option<&str> {
        match self {
            Cell::Answer { text } | Cell::LowConfidence { text } => Some(text),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Cell::Pending => "pending",
            Cell::Answer { .. } => "answer",
            Cell::LowConfidence { .. } => "lowConfidence",
            Cell::Error { .. } => "error",
        }
    }

    pub fn is_final(&self) -> bool {
        !matches!(self, Cell::Pending)
    }

    pub fn display(&self) -> String {
        match self {
            Cell::Pending => "Pending".to_string(),
            Cell::Answer { text } => text.clone(),
            Cell::LowConfidence { text } => format!("{text} (low confidence)"),
            Cell::Error { message } => format!("Error: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableRow {
    pub row_id: String,
    pub question: String,
    pub cells: Vec<Cell>,
    pub similarities: Option<String>,
    pub differences: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_error: Option<String>,
    /// Backend time per cell.
    pub timing_ms: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelTrace {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<ModelAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<PipelineError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RowTrace {
    pub row_id: String,
    pub question: String,
    pub models: Vec<ModelTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSummary>,
}

pub fn row_digest(row: &TableRow, trace: &RowTrace) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(row).expect("rows serialize"));
    h.update(serde_json::to_vec(trace).expect("traces serialize"));
    hex::encode(h.finalize())
}

/// The serializable part of a session: everything a table, an export or a
/// reload needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionData {
    pub id: String,
    pub created_at: String,
    pub backend: String,
    pub models: Vec<SessionModel>,
    pub rows: Vec<TableRow>,
    pub traces: Vec<RowTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "camelCase")]
enum SessionEvent {
    Created {
        id: String,
        #[serde(rename = "createdAt")]
        created_at: String,
        backend: String,
        models: Vec<SessionModel>,
    },
    Row {
        row: TableRow,
        trace: RowTrace,
    },
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("session events serialize");
    s.push('\n');
    s
}

fn append(path: &Path, text: &str) -> Result<(), SessionError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableCell {
    pub model_index: usize,
    pub label: String,
    /// `pending`, `answer`, `lowConfidence` or `error`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Display text, as read out.
    pub text: String,
    pub aria_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableRowView {
    pub row_id: String,
    pub question: String,
    pub question_aria_label: String,
    pub cells: Vec<TableCell>,
    pub similarities: Option<String>,
    pub differences: Option<String>,
    pub similarities_aria_label: String,
    pub differences_aria_label: String,
    pub pending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableModel {
    pub model_index: usize,
    pub label: String,
    pub name: String,
}

/// The table as served to the frontend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionTable {
    pub session_id: String,
    pub columns: Vec<String>,
    pub models: Vec<TableModel>,
    pub comparison_enabled: bool,
    pub rows: Vec<TableRowView>,
}

impl SessionData {
    pub fn comparison_enabled(&self) -> bool {
        self.models.len() >= 2
    }

    pub fn columns(&self) -> Vec<String> {
        let mut c = vec!["Question".to_string()];
        c.extend(self.models.iter().map(|m| m.label.clone()));
        c.push("Similarities".into());
        c.push("Differences".into());
        c
    }

    /// Completed rows followed by placeholder rows for queued questions.
    pub fn table(&self, queued: &[(String, String)]) -> SessionTable {
        let view = |row: &TableRow, pending: bool| {
            let cells = row
                .cells
                .iter()
                .zip(&self.models)
                .map(|(cell, m)| {
                    let text = cell.display();
                    TableCell {
                        model_index: m.model_index,
                        label: m.label.clone(),
                        status: cell.status().to_string(),
                        answer: cell.answer_text().map(str::to_string),
                        message: match cell {
                            Cell::Error { message } => Some(message.clone()),
                            _ => None,
                        },
                        aria_label: format!("{}: {text}", m.label),
                        text,
                    }
                })
                .collect();
            let aria = |name: &str, v: &Option<String>| match v {
                Some(t) => format!("{name}: {t}"),
                None if pending => format!("{name}: pending"),
                None => format!("{name}: not available"),
            };
            TableRowView {
                row_id: row.row_id.clone(),
                question: row.question.clone(),
                question_aria_label: format!("Question: {}", row.question),
                cells,
                similarities_aria_label: aria("Similarities", &row.similarities),
                differences_aria_label: aria("Differences", &row.differences),
                similarities: row.similarities.clone(),
                differences: row.differences.clone(),
                pending,
            }
        };
        let mut rows: Vec<TableRowView> = self.rows.iter().map(|r| view(r, false)).collect();
        for (row_id, question) in queued {
            let placeholder = TableRow {
                row_id: row_id.clone(),
                question: question.clone(),
                cells: vec![Cell::Pending; self.models.len()],
                similarities: None,
                differences: None,
                comparison_error: None,
                timing_ms: vec![0; self.models.len()],
            };
            rows.push(view(&placeholder, true));
        }
        SessionTable {
            session_id: self.id.clone(),
            columns: self.columns(),
            models: self
                .models
                .iter()
                .map(|m| TableModel { model_index: m.model_index, label: m.label.clone(), name: m.name.clone() })
                .collect(),
            comparison_enabled: self.comparison_enabled(),
            rows,
        }
    }

    pub fn row(&self, row_id: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.row_id == row_id)
    }

    pub fn trace(&self, row_id: &str) -> Option<&RowTrace> {
        self.traces.iter().find(|t| t.row_id == row_id)
    }

    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sessions serialize")
    }

    pub fn import_json(text: &str) -> Result<Self, SessionError> {
        serde_json::from_str(text).map_err(|e| SessionError::Corrupt(e.to_string()))
    }

    /// One record per row: question, one column per model, similarities,
    /// differences.
    pub fn export_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns()).expect("in-memory csv");
        for row in &self.rows {
            let mut rec = vec![row.question.clone()];
            rec.extend(row.cells.iter().map(Cell::display));
            rec.push(row.similarities.clone().unwrap_or_default());
            rec.push(row.differences.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    /// Reads `session.jsonl` from a session directory.
    pub fn load(dir: &Path) -> Result<Self, SessionError> {
        let text = fs::read_to_string(dir.join(SESSION_FILE))?;
        let mut data: Option<SessionData> = None;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let event: SessionEvent =
                serde_json::from_str(line).map_err(|e| SessionError::Corrupt(format!("line {}: {e}", n + 1)))?;
            match (event, data.as_mut()) {
                (SessionEvent::Created { id, created_at, backend, models }, None) => {
                    data = Some(SessionData { id, created_at, backend, models, rows: vec![], traces: vec![] });
                }
                (SessionEvent::Row { row, trace }, Some(d)) => {
                    d.rows.push(row);
                    d.traces.push(trace);
                }
                _ => return Err(SessionError::Corrupt(format!("line {}: unexpected event", n + 1))),
            }
        }
        data.ok_or_else(|| SessionError::Corrupt("no created event".into()))
    }
}

/// How a new session stamps itself. Deterministic runs use a frozen clock
/// and a fixed nonce so identical inputs yield identical files.
#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub created_at: String,
    pub nonce: u64,
    /// Store root; `None` keeps the session in memory.
    pub store: Option<PathBuf>,
    pub save_views: bool,
}

impl SessionOptions {
    pub fn frozen(nonce: u64) -> Self {
        Self { created_at: FROZEN_CLOCK.to_string(), nonce, store: None, save_views: true }
    }

    pub fn now() -> Self {
        Self {
            created_at: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
            nonce: rand::random(),
            store: None,
            save_views: true,
        }
    }

    pub fn with_store(mut self, store: impl Into<PathBuf>) -> Self {
        self.store = Some(store.into());
        self
    }
}

pub fn session_id(created_at: &str, digests: &[String], nonce: u64) -> String {
    let mut h = Sha256::new();
    h.update(created_at.as_bytes());
    for d in digests {
        h.update(d.as_bytes());
    }
    h.update(nonce.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// A loaded model with its rendered view grid.
pub struct PreparedModel {
    pub label: String,
    pub mesh: MeshModel,
    pub grid: ViewGrid,
    pub views: Vec<SampledView>,
}

impl PreparedModel {
    pub fn new(index: usize, mesh: MeshModel) -> Result<Self, SessionError> {
        let source_name = mesh.id().to_string();
        let aabb = compute_aabb(&mesh).map_err(|error| SessionError::Model { source_name: source_name.clone(), error })?;
        let grid = build_view_grid(&aabb).map_err(|error| SessionError::Model { source_name, error })?;
        let views = render_grid(&mesh, &grid.poses);
        Ok(Self { label: model_label(index), mesh, grid, views })
    }
}

/// A question bound to a row id, runnable off the session lock.
pub struct RowJob {
    pub row_id: String,
    pub question: String,
    models: Arc<Vec<PreparedModel>>,
    recorder: Recorder,
}

pub struct RowOutcome {
    pub row: TableRow,
    pub trace: RowTrace,
    pub exchanges: Vec<Exchange>,
}

impl RowJob {
    pub fn run(self) -> RowOutcome {
        let scopes: Vec<String> = self.models.iter().map(|m| format!("{}/{}", self.row_id, m.label)).collect();
        let results: Vec<Result<ModelAnswer, PipelineError>> = self
            .models
            .par_iter()
            .zip(scopes.par_iter())
            .map(|(m, scope)| {
                let backend = self.recorder.scoped(scope);
                answer_question(&m.views, &m.grid, &self.question, backend.as_ref())
            })
            .collect();

        let cells: Vec<Cell> = results
            .iter()
            .map(|r| match r {
                Ok(a) if a.selection.low_confidence => Cell::LowConfidence { text: a.answer.clone() },
                Ok(a) => Cell::Answer { text: a.answer.clone() },
                Err(e) => Cell::Error { message: e.to_string() },
            })
            .collect();

        let comparison_scope = format!("{}/comparison", self.row_id);
        let mut comparison = None;
        let mut comparison_error = None;
        let answers: Option<Vec<String>> = cells.iter().map(|c| c.answer_text().map(str::to_string)).collect();
        if let (true, Some(answers)) = (self.models.len() >= 2, answers) {
            let backend = self.recorder.scoped(&comparison_scope);
            match summarize_comparison(&answers, backend.as_ref()) {
                Ok(c) => comparison = Some(c),
                Err(e) => comparison_error = Some(e.to_string()),
            }
        }

        let mut all_scopes = scopes.clone();
        all_scopes.push(comparison_scope);
        let exchanges = self.recorder.take(&all_scopes);
        let timing_ms = scopes
            .iter()
            .map(|s| exchanges.iter().filter(|e| &e.scope == s).map(|e| e.latency_ms).sum())
            .collect();

        let row = TableRow {
            row_id: self.row_id.clone(),
            question: self.question.clone(),
            cells,
            similarities: comparison.as_ref().map(|c| c.similarities.clone()),
            differences: comparison.as_ref().map(|c| c.differences.clone()),
            comparison_error,
            timing_ms,
        };
        let trace = RowTrace {
            row_id: self.row_id,
            question: self.question,
            models: results
                .into_iter()
                .zip(&self.models[..])
                .map(|(r, m)| match r {
                    Ok(a) => ModelTrace { label: m.label.clone(), answer: Some(a), error: None },
                    Err(e) => ModelTrace { label: m.label.clone(), answer: None, error: Some(e) },
                })
                .collect(),
            comparison,
        };
        RowOutcome { row, trace, exchanges }
    }
}

pub struct Session {
    pub data: SessionData,
    models: Arc<Vec<PreparedModel>>,
    recorder: Recorder,
    backend: Option<Arc<dyn Backend>>,
    dir: Option<PathBuf>,
    sources: Vec<String>,
    next_row: usize,
}

pub fn load_models(sources: &[ModelSource]) -> Result<Vec<MeshModel>, SessionError> {
    if sources.is_empty() {
        return Err(SessionError::NoModels);
    }
    if sources.len() > MAX_MODELS {
        return Err(SessionError::TooManyModels(sources.len()));
    }
    sources.iter().map(ModelSource::load).collect()
}

/// Every object name across `meshes`, for the mock vocabulary.
pub fn object_labels(meshes: &[MeshModel]) -> Vec<String> {
    meshes.iter().flat_map(|m| m.object_names().iter().cloned()).collect()
}

/// Loads and renders the models, builds the backend and, with a store,
/// writes the session directory. Fails without side effects if any model
/// fails to load.
pub fn create_session(
    sources: &[ModelSource],
    config: &BackendConfig,
    options: SessionOptions,
) -> Result<Session, SessionError> {
    let meshes = load_models(sources)?;
    let backend = config.build(&object_labels(&meshes)).map_err(SessionError::Backend)?;
    let names: Vec<String> = sources.iter().map(ToString::to_string).collect();
    Session::new(meshes, names, backend, options)
}

impl Session {
    pub fn new(
        meshes: Vec<MeshModel>,
        sources: Vec<String>,
        backend: Arc<dyn Backend>,
        options: SessionOptions,
    ) -> Result<Self, SessionError> {
        let name = backend.name().to_string();
        let recorder = Recorder::new(backend.clone());
        let mut s = Self::build(meshes, sources, recorder, name, options)?;
        s.backend = Some(backend);
        Ok(s)
    }

    fn build(
        meshes: Vec<MeshModel>,
        sources: Vec<String>,
        recorder: Recorder,
        backend_name: String,
        options: SessionOptions,
    ) -> Result<Self, SessionError> {
        if meshes.is_empty() {
            return Err(SessionError::NoModels);
        }
        if meshes.len() > MAX_MODELS {
            return Err(SessionError::TooManyModels(meshes.len()));
        }
        let digests: Vec<String> = meshes.iter().map(mesh_digest).collect();
        let models: Vec<SessionModel> = meshes
            .iter()
            .enumerate()
            .map(|(i, m)| SessionModel {
                model_index: i + 1,
                label: model_label(i),
                name: m.id().to_string(),
                source: sources[i].clone(),
                digest: digests[i].clone(),
                triangles: m.triangles().len(),
                objects: m.object_names().to_vec(),
            })
            .collect();
        let prepared: Vec<PreparedModel> = meshes
            .into_par_iter()
            .enumerate()
            .map(|(i, m)| PreparedModel::new(i, m))
            .collect::<Result<_, _>>()?;
        let data = SessionData {
            id: session_id(&options.created_at, &digests, options.nonce),
            created_at: options.created_at.clone(),
            backend: backend_name,
            models,
            rows: Vec::new(),
            traces: Vec::new(),
        };
        let mut session = Self {
            data,
            models: Arc::new(prepared),
            recorder,
            backend: None,
            dir: None,
            sources,
            next_row: 1,
        };
        if let Some(store) = &options.store {
            session.persist_new(store, options.save_views)?;
        }
        Ok(session)
    }

    fn persist_new(&mut self, store: &Path, save_views: bool) -> Result<(), SessionError> {
        let dir = store.join(&self.data.id);
        fs::create_dir_all(&dir)?;
        if save_views {
            for (i, m) in self.models.iter().enumerate() {
                let vdir = dir.join("views").join(format!("model-{}", i + 1));
                fs::create_dir_all(&vdir)?;
                m.views
                    .par_iter()
                    .try_for_each(|v| v.save_png(&vdir.join(format!("{}.png", v.index))))
                    .map_err(|e| SessionError::Io(std::io::Error::other(e)))?;
            }
        }
        let created = SessionEvent::Created {
            id: self.data.id.clone(),
            created_at: self.data.created_at.clone(),
            backend: self.data.backend.clone(),
            models: self.data.models.clone(),
        };
        fs::write(dir.join(SESSION_FILE), json_line(&created))?;
        fs::write(dir.join(TRANSCRIPT_FILE), self.transcript_header().to_json_line())?;
        self.dir = Some(dir);
        Ok(())
    }

    pub fn transcript_header(&self) -> TranscriptLine {
        TranscriptLine::Header {
            version: TRANSCRIPT_VERSION,
            session_id: self.data.id.clone(),
            created_at: self.data.created_at.clone(),
            backend: self.data.backend.clone(),
            models: self
                .data
                .models
                .iter()
                .map(|m| TranscriptModel { label: m.label.clone(), source: m.source.clone(), digest: m.digest.clone() })
                .collect(),
        }
    }

    pub fn id(&self) -> &str {
        &self.data.id
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn prepared(&self) -> &[PreparedModel] {
        &self.models
    }

    pub fn backend(&self) -> Option<&Arc<dyn Backend>> {
        self.backend.as_ref()
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Assigns the next row id to `question`.
    pub fn prepare(&mut self, question: &str) -> Result<RowJob, SessionError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(SessionError::EmptyQuestion);
        }
        let row_id = format!("r{}", self.next_row);
        self.next_row += 1;
        Ok(RowJob {
            row_id,
            question: question.to_string(),
            models: self.models.clone(),
            recorder: self.recorder.clone(),
        })
    }

    /// Appends a finished row and persists it.
    pub fn commit(&mut self, outcome: RowOutcome) -> Result<&TableRow, SessionError> {
        let RowOutcome { row, trace, exchanges } = outcome;
        if let Some(dir) = &self.dir {
            append(&dir.join(SESSION_FILE), &json_line(&SessionEvent::Row { row: row.clone(), trace: trace.clone() }))?;
            append(&dir.join(TRANSCRIPT_FILE), &transcript_lines(&row, &trace, exchanges))?;
        }
        self.data.rows.push(row);
        self.data.traces.push(trace);
        Ok(self.data.rows.last().expect("just pushed"))
    }

    pub fn ask(&mut self, question: &str) -> Result<&TableRow, SessionError> {
        let job = self.prepare(question)?;
        let outcome = job.run();
        self.commit(outcome)
    }
}

fn transcript_lines(row: &TableRow, trace: &RowTrace, exchanges: Vec<Exchange>) -> String {
    let mut out = TranscriptLine::Question { row_id: row.row_id.clone(), question: row.question.clone() }.to_json_line();
    for e in exchanges {
        out.push_str(&TranscriptLine::Exchange(e).to_json_line());
    }
    out.push_str(&TranscriptLine::RowDigest { row_id: row.row_id.clone(), digest: row_digest(row, trace) }.to_json_line());
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayReport {
    pub session_id: String,
    pub rows: usize,
    pub exchanges: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-runs every recorded question against the recorded responses and
/// compares row digests and exchanges. Relative model paths resolve
/// against `base` when they do not exist as given.
pub fn replay_transcript(text: &str, base: Option<&Path>) -> Result<ReplayReport, SessionError> {
    let source = Arc::new(ReplaySource::parse(text).map_err(SessionError::Corrupt)?);
    let Some(TranscriptLine::Header { session_id, created_at, backend, models, .. }) = source.header().cloned() else {
        return Err(SessionError::Corrupt("transcript has no header".into()));
    };
    let mut meshes = Vec::new();
    for m in &models {
        let mut src = ModelSource::parse(&m.source);
        if let (ModelSource::Path(p), Some(base)) = (&src, base) {
            if p.is_relative() && !p.exists() {
                src = ModelSource::Path(base.join(p));
            }
        }
        let mesh = src.load()?;
        if mesh_digest(&mesh) != m.digest {
            return Err(SessionError::Corrupt(format!("{} ({}) no longer matches its recorded digest", m.label, m.source)));
        }
        meshes.push(mesh);
    }
    let sources = models.iter().map(|m| m.source.clone()).collect();
    let mut session =
        Session::build(meshes, sources, Recorder::replaying(source.clone()), backend, SessionOptions::frozen(0))?;
    session.data.id = session_id.clone();
    session.data.created_at = created_at;

    let recorded_digests = source.row_digests();
    let recorded: Vec<&Exchange> = source
        .lines
        .iter()
        .filter_map(|l| match l {
            TranscriptLine::Exchange(e) => Some(e),
            _ => None,
        })
        .collect();
    let mut report = ReplayReport { session_id, rows: 0, exchanges: 0, mismatches: Vec::new() };
    for (row_id, question) in source.questions() {
        let job = session.prepare(&question)?;
        if job.row_id != row_id {
            report.mismatches.push(format!("row {row_id} replayed as {}", job.row_id));
        }
        let outcome = job.run();
        let prefix = format!("{row_id}/");
        let want: Vec<&Exchange> = recorded.iter().copied().filter(|e| e.scope.starts_with(&prefix)).collect();
        let got: Vec<&Exchange> = outcome.exchanges.iter().collect();
        if want != got {
            report.mismatches.push(format!("row {row_id}: exchanges differ ({} recorded, {} replayed)", want.len(), got.len()));
        }
        report.exchanges += got.len();
        let digest = row_digest(&outcome.row, &outcome.trace);
        if recorded_digests.get(&row_id) != Some(&digest) {
            report.mismatches.push(format!("row {row_id}: output digest differs"));
        }
        report.rows += 1;
        session.commit(outcome)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;
    use crate::fixtures;

    fn mock_session(meshes: Vec<MeshModel>) -> Session {
        let backend = Arc::new(MockBackend::new(
            crate::backends::Vocabulary::default().extended(&object_labels(&meshes)),
        ));
        let sources = meshes.iter().map(|m| format!("fixture:{}", m.id())).collect();
        Session::new(meshes, sources, backend, SessionOptions::frozen(0)).unwrap()
    }

    #[test]
    fn model_limits() {
        let five: Vec<ModelSource> = (0..5).map(|_| ModelSource::parse("fixture:cube")).collect();
        assert!(matches!(create_session(&five, &BackendConfig::Mock, SessionOptions::frozen(0)), Err(SessionError::TooManyModels(5))));
        assert!(matches!(create_session(&[], &BackendConfig::Mock, SessionOptions::frozen(0)), Err(SessionError::NoModels)));
        let bad = [ModelSource::parse("fixture:cube"), ModelSource::parse("/nonexistent/x.obj")];
        assert!(matches!(create_session(&bad, &BackendConfig::Mock, SessionOptions::frozen(0)), Err(SessionError::Model { .. })));
    }

    #[test]
    fn single_model_rows_skip_comparison() {
        let mut s = mock_session(vec![fixtures::desk_scene(0)]);
        let row = s.ask("how many displays on the desk?").unwrap().clone();
        assert_eq!(row.cells, vec![Cell::Answer { text: "2".into() }]);
        assert_eq!((row.similarities, row.differences), (None, None));
        assert!(matches!(s.ask("   "), Err(SessionError::EmptyQuestion)));
        let table = s.data.table(&[]);
        assert!(!table.comparison_enabled);
        assert_eq!(table.columns, vec!["Question", "Model 1", "Similarities", "Differences"]);
        assert_eq!(table.rows[0].cells[0].aria_label, "Model 1: 2");
    }

    #[test]
    fn rows_append_and_export() {
        let mut s = mock_session(vec![fixtures::desk_scene(1), fixtures::unit_cube()]);
        s.ask("What does the desk look like?").unwrap();
        s.ask("What does the desk look like?").unwrap();
        assert_eq!(s.data.rows.len(), 2);
        assert_eq!(s.data.rows[0].row_id, "r1");
        assert_eq!(s.data.rows[1].row_id, "r2");
        let row = &s.data.rows[0];
        assert!(row.cells.iter().all(|c| c.answer_text().is_some()));
        assert!(row.similarities.is_some() && row.differences.is_some());

        let csv = s.data.export_csv();
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(r.headers().unwrap().len(), 1 + 2 + 2);
        assert_eq!(r.records().count(), 2);

        let back = SessionData::import_json(&s.data.export_json()).unwrap();
        assert_eq!(back, s.data);
        assert_eq!(
            serde_json::to_string(&back.table(&[])).unwrap(),
            serde_json::to_string(&s.data.table(&[])).unwrap()
        );
    }

    #[test]
    fn empty_session_exports() {
        let s = mock_session(vec![fixtures::unit_cube()]);
        assert_eq!(s.data.export_csv().lines().count(), 1);
        assert_eq!(SessionData::import_json(&s.data.export_json()).unwrap().rows.len(), 0);
    }

    #[test]
    fn pending_rows_in_table() {
        let s = mock_session(vec![fixtures::unit_cube(), fixtures::sphere()]);
        let t = s.data.table(&[("r1".into(), "q?".into())]);
        assert!(t.rows[0].pending);
        assert_eq!(t.rows[0].cells[1].status, "pending");
        assert_eq!(t.rows[0].cells[1].answer, None);
        assert_eq!(t.rows[0].cells[1].aria_label, "Model 2: Pending");
        assert_eq!(t.rows[0].differences_aria_label, "Differences: pending");
    }

    #[test]
    fn sources_parse() {
        assert_eq!(ModelSource::parse("fixture:desk:2"), ModelSource::Fixture("desk:2".into()));
        assert_eq!(ModelSource::parse("a/b.obj"), ModelSource::Path("a/b.obj".into()));
        assert_eq!(ModelSource::parse("fixture:desk:2").to_string(), "fixture:desk:2");
        assert!(matches!(ModelSource::parse("fixture:teapot").load(), Err(SessionError::UnknownFixture(_))));
    }
}
