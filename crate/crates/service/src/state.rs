//! Live sessions and their question queues.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use sweeper_core::session::{
    create_session, ModelSource, RowTrace, Session, SessionData, SessionOptions, SessionTable, TableRow,
};
use tokio::sync::{mpsc, watch};

use crate::config::ServiceConfig;
use crate::error::ApiError;

pub struct AppState {
    pub config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    created: AtomicU64,
}

/// Where a row stands.
pub enum RowState {
    Done(TableRow, RowTrace),
    Queued(String),
    Failed(String),
    Missing,
}

/// One live session: the session itself, the questions waiting for it and
/// a counter bumped whenever a row settles.
pub struct SessionHandle {
    session: Mutex<Session>,
    queued: Mutex<Vec<(String, String)>>,
    failed: Mutex<HashMap<String, String>>,
    jobs: mpsc::UnboundedSender<sweeper_core::session::RowJob>,
    settled: watch::Sender<u64>,
}

impl SessionHandle {
    fn spawn(session: Session) -> Arc<Self> {
        let (tx, mut rx) = mpsc::unbounded_channel();
        let (settled, _) = watch::channel(0);
        let handle = Arc::new(Self {
            session: Mutex::new(session),
            queued: Mutex::new(Vec::new()),
            failed: Mutex::new(HashMap::new()),
            jobs: tx,
            settled,
        });
        // One worker per session runs its questions in submission order.
        let worker = Arc::downgrade(&handle);
        tokio::spawn(async move {
            while let Some(job) = rx.recv().await {
                let row_id = job.row_id.clone();
                let outcome = tokio::task::spawn_blocking(move || job.run()).await;
                let Some(h) = worker.upgrade() else { break };
                let committed = match outcome {
                    Ok(outcome) => h.session.lock().unwrap().commit(outcome).map(|_| ()).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("row worker failed: {e}")),
                };
                if let Err(message) = committed {
                    tracing::error!(row = %row_id, %message, "row could not be completed");
                    h.failed.lock().unwrap().insert(row_id.clone(), message);
                }
                h.queued.lock().unwrap().retain(|(id, _)| *id != row_id);
                h.settled.send_modify(|n| *n += 1);
            }
        });
        handle
    }

    pub fn id(&self) -> String {
        self.session.lock().unwrap().id().to_string()
    }

    pub fn data(&self) -> SessionData {
        self.session.lock().unwrap().data.clone()
    }

    /// Assigns a row id and queues the question behind earlier ones.
    pub fn submit(&self, question: &str) -> Result<String, ApiError> {
        let mut session = self.session.lock().unwrap();
        let job = session.prepare(question)?;
        let row_id = job.row_id.clone();
        self.queued.lock().unwrap().push((row_id.clone(), job.question.clone()));
        self.jobs.send(job).map_err(|_| ApiError::internal("session worker stopped"))?;
        Ok(row_id)
    }

    pub fn table(&self) -> SessionTable {
        let queued = self.queued.lock().unwrap().clone();
        self.session.lock().unwrap().data.table(&queued)
    }

    pub fn row_state(&self, row_id: &str) -> RowState {
        {
            let session = self.session.lock().unwrap();
            if let (Some(row), Some(trace)) = (session.data.row(row_id), session.data.trace(row_id)) {
                return RowState::Done(row.clone(), trace.clone());
            }
        }
        if let Some(m) = self.failed.lock().unwrap().get(row_id) {
            return RowState::Failed(m.clone());
        }
        match self.queued.lock().unwrap().iter().find(|(id, _)| id == row_id) {
            Some((_, q)) => RowState::Queued(q.clone()),
            None => RowState::Missing,
        }
    }

    /// Waits up to `limit` for a row to settle; returns its latest state.
    pub async fn wait(&self, row_id: &str, limit: Duration) -> RowState {
        let mut rx = self.settled.subscribe();
        let deadline = tokio::time::Instant::now() + limit;
        loop {
            let state = self.row_state(row_id);
            if !matches!(state, RowState::Queued(_)) {
                return state;
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => continue,
                _ => return self.row_state(row_id),
            }
        }
    }
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self { config, sessions: RwLock::new(HashMap::new()), created: AtomicU64::new(0) })
    }

    fn options(&self) -> SessionOptions {
        let n = self.created.fetch_add(1, Ordering::SeqCst);
        let mut o = if self.config.deterministic { SessionOptions::frozen(n) } else { SessionOptions::now() };
        o.save_views = self.config.save_views;
        o.with_store(&self.config.session_dir)
    }

    /// Loads and renders the models off the async runtime, then starts the
    /// session's worker.
    pub async fn create(&self, sources: Vec<ModelSource>) -> Result<Arc<SessionHandle>, ApiError> {
        let options = self.options();
        let backend = self.config.backend.clone();
        let session = tokio::task::spawn_blocking(move || create_session(&sources, &backend, options))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let handle = SessionHandle::spawn(session);
        self.sessions.write().unwrap().insert(handle.id(), handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    /// A live session's data, or a persisted one read from the store.
    pub fn data(&self, id: &str) -> Option<SessionData> {
        if let Some(h) = self.get(id) {
            return Some(h.data());
        }
        let safe = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric());
        safe.then(|| SessionData::load(&self.config.session_dir.join(id)).ok()).flatten()
    }
}
