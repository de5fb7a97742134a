//! Live sessions: ingestion, the Level 1 card stream and the Level 2 cache.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use axum::http::StatusCode;
use lens_core::conventions::{profile_repository_with, ConventionProfile};
use lens_core::explain::{Engine, EngineConfig, GenerationBackend, Level1Explanation, SummaryCard};
use lens_core::index::{scan_repository, ScanOptions};
use lens_core::ingest::{
    build_timeline, parse_session_log, AgentSession, DirSnapshot, FileModification,
};
use lens_core::{ArtifactId, LineRange, RepoIndex};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, OnceCell};

use crate::error::ApiError;
use crate::store::{Record, RecordLog, Store, StoreError, StoredSession};

const STREAM_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ingesting,
    Level1Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Card(SummaryCard),
    Complete(Level1Explanation),
    Error { code: String, message: String },
}

impl StreamEvent {
    pub fn name(&self) -> &'static str {
        match self {
            StreamEvent::Card(_) => "card",
            StreamEvent::Complete(_) => "complete",
            StreamEvent::Error { .. } => "error",
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, StreamEvent::Card(_))
    }

    pub fn data(&self) -> String {
        match self {
            StreamEvent::Card(card) => serde_json::to_string(card),
            StreamEvent::Complete(doc) => serde_json::to_string(doc),
            StreamEvent::Error { code, message } => {
                serde_json::to_string(&json!({"code": code, "message": message}))
            }
        }
        .expect("stream events serialize")
    }
}

struct Live {
    status: Status,
    cards: Vec<SummaryCard>,
    level1: Option<Level1Explanation>,
    failure: Option<(String, String)>,
    tx: broadcast::Sender<StreamEvent>,
}

/// The immutable analysis inputs of a session.
pub struct Snapshot {
    pub index: Arc<RepoIndex>,
    pub timeline: Vec<FileModification>,
    pub profile: ConventionProfile,
}

pub struct Session {
    pub session_id: String,
    task_prompt: String,
    live: Mutex<Live>,
    snapshot: OnceLock<Arc<Snapshot>>,
    engine: Engine,
    level2: Mutex<HashMap<usize, Arc<OnceCell<Arc<str>>>>>,
    log: RecordLog,
}

impl Session {
    fn new(session_id: String, task_prompt: String, engine: Engine, log: RecordLog) -> Self {
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        Session {
            session_id,
            task_prompt,
            live: Mutex::new(Live {
                status: Status::Ingesting,
                cards: Vec::new(),
                level1: None,
                failure: None,
                tx,
            }),
            snapshot: OnceLock::new(),
            engine,
            level2: Mutex::new(HashMap::new()),
            log,
        }
    }

    pub fn status(&self) -> Status {
        self.live.lock().expect("session lock").status
    }

    /// Number of influence rankings run for this session since it was loaded.
    pub fn ranker_calls(&self) -> usize {
        self.engine.ranker().calls()
    }

    pub fn snapshot(&self) -> Option<&Arc<Snapshot>> {
        self.snapshot.get()
    }

    fn set_snapshot(
        &self,
        index: Arc<RepoIndex>,
        timeline: Vec<FileModification>,
        engine_config: &EngineConfig,
    ) {
        let profile = profile_repository_with(&index, &engine_config.conventions);
        let _ = self.snapshot.set(Arc::new(Snapshot {
            index,
            timeline,
            profile,
        }));
    }

    fn push_card(&self, card: &SummaryCard) -> Result<(), StoreError> {
        let mut live = self.live.lock().expect("session lock");
        self.log.append(&Record::Card { card: card.clone() })?;
        live.cards.push(card.clone());
        let _ = live.tx.send(StreamEvent::Card(card.clone()));
        Ok(())
    }

    fn complete(&self, doc: Level1Explanation) -> Result<(), StoreError> {
        let mut live = self.live.lock().expect("session lock");
        self.log.append(&Record::Level1 {
            document: doc.clone(),
        })?;
        live.status = Status::Level1Ready;
        live.level1 = Some(doc.clone());
        let _ = live.tx.send(StreamEvent::Complete(doc));
        Ok(())
    }

    fn fail(&self, code: &str, message: &str) {
        let mut live = self.live.lock().expect("session lock");
        if let Err(e) = self.log.append(&Record::Failed {
            code: code.into(),
            message: message.into(),
        }) {
            tracing::error!(session = %self.session_id, "cannot persist failure: {}", e);
        }
        live.status = Status::Failed;
        live.failure = Some((code.into(), message.into()));
        let _ = live.tx.send(StreamEvent::Error {
            code: code.into(),
            message: message.into(),
        });
    }

    /// Events emitted so far, plus a receiver for the rest when the session
    /// is still ingesting. Taken under one lock so nothing is missed or
    /// delivered twice.
    pub fn subscribe(&self) -> (Vec<StreamEvent>, Option<broadcast::Receiver<StreamEvent>>) {
        let live = self.live.lock().expect("session lock");
        let mut events: Vec<StreamEvent> =
            live.cards.iter().cloned().map(StreamEvent::Card).collect();
        match live.status {
            Status::Ingesting => return (events, Some(live.tx.subscribe())),
            Status::Level1Ready => events.push(StreamEvent::Complete(
                live.level1.clone().expect("ready session has level 1"),
            )),
            Status::Failed => {
                let (code, message) = live.failure.clone().unwrap_or_default();
                events.push(StreamEvent::Error { code, message });
            }
        }
        (events, None)
    }

    pub fn level1(&self) -> Result<Level1Explanation, ApiError> {
        let live = self.live.lock().expect("session lock");
        match live.status {
            Status::Level1Ready => Ok(live.level1.clone().expect("ready session has level 1")),
            Status::Ingesting => Err(ApiError::conflict(
                "not_ready",
                "level 1 is still being generated",
            )),
            Status::Failed => Err(self.failed_error(&live)),
        }
    }

    fn failed_error(&self, live: &Live) -> ApiError {
        let message = live
            .failure
            .as_ref()
            .map(|(c, m)| format!("{}: {}", c, m))
            .unwrap_or_default();
        ApiError::conflict("session_failed", message)
    }

    pub fn summary(&self) -> Value {
        let live = self.live.lock().expect("session lock");
        let cached: Vec<usize> = {
            let map = self.level2.lock().expect("level2 lock");
            let mut keys: Vec<usize> = map
                .iter()
                .filter(|(_, c)| c.initialized())
                .map(|(k, _)| *k)
                .collect();
            keys.sort_unstable();
            keys
        };
        let snapshot = self.snapshot.get();
        json!({
            "session_id": self.session_id,
            "status": live.status,
            "snapshot_id": snapshot.map(|s| s.index.snapshot_id()),
            "changes": snapshot.map(|s| s.timeline.len()),
            "cards": live.cards.len(),
            "level2_cached": cached,
            "ranker_calls": self.ranker_calls(),
            "error": live.failure.as_ref().map(|(c, m)| json!({"code": c, "message": m})),
        })
    }

    fn ready_snapshot(&self) -> Result<Arc<Snapshot>, ApiError> {
        {
            let live = self.live.lock().expect("session lock");
            match live.status {
                Status::Level1Ready => {}
                Status::Ingesting => {
                    return Err(ApiError::conflict(
                        "not_ready",
                        "level 1 is still being generated",
                    ))
                }
                Status::Failed => return Err(self.failed_error(&live)),
            }
        }
        self.snapshot
            .get()
            .cloned()
            .ok_or_else(|| ApiError::internal("ready session without a snapshot"))
    }

    /// The serialized Level 2 document for one change, computed at most once.
    /// Concurrent first requests wait on the same computation.
    pub async fn level2(self: &Arc<Self>, order_index: usize) -> Result<Arc<str>, ApiError> {
        let snapshot = self.ready_snapshot()?;
        if order_index >= snapshot.timeline.len() {
            return Err(lens_core::Error::Range(format!(
                "change {} out of range, session has {}",
                order_index,
                snapshot.timeline.len()
            ))
            .into());
        }
        let cell = self
            .level2
            .lock()
            .expect("level2 lock")
            .entry(order_index)
            .or_default()
            .clone();
        let session = Arc::clone(self);
        cell.get_or_try_init(|| async move {
            tokio::task::spawn_blocking(move || session.compute_level2(&snapshot, order_index))
                .await
                .map_err(|e| ApiError::internal(format!("level 2 task failed: {}", e)))?
        })
        .await
        .cloned()
    }

    fn compute_level2(
        &self,
        snapshot: &Snapshot,
        order_index: usize,
    ) -> Result<Arc<str>, ApiError> {
        let modification = &snapshot.timeline[order_index];
        let doc = self.engine.level2(
            &self.task_prompt,
            modification,
            &snapshot.index,
            &snapshot.profile,
        )?;
        self.log.append(&Record::Level2 {
            order_index,
            document: doc.clone(),
        })?;
        Ok(Arc::from(
            serde_json::to_string(&doc).expect("level 2 serializes"),
        ))
    }

    pub fn artifact_slice(
        &self,
        artifact_id: &str,
        start: Option<u32>,
        end: Option<u32>,
    ) -> Result<Value, ApiError> {
        let snapshot = self
            .snapshot
            .get()
            .ok_or_else(|| ApiError::conflict("not_ready", "session has no snapshot yet"))?;
        let id = ArtifactId(artifact_id.to_string());
        let artifact = snapshot.index.artifact(&id).ok_or_else(|| {
            ApiError::from(lens_core::Error::NotFound(format!(
                "artifact {} in snapshot {}",
                artifact_id,
                snapshot.index.snapshot_id()
            )))
        })?;
        let start = start.unwrap_or(1);
        let end = end.unwrap_or(artifact.line_count);
        let text = if start == 1 && end == 0 && artifact.line_count == 0 {
            ""
        } else {
            let span = LineRange::new(start, end).ok_or_else(|| {
                ApiError::from(lens_core::Error::Range(format!(
                    "invalid range {}..{}",
                    start, end
                )))
            })?;
            snapshot.index.slice(&id, span)?
        };
        Ok(json!({
            "artifact_id": artifact.artifact_id,
            "path": artifact.path,
            "kind": artifact.kind,
            "line_count": artifact.line_count,
            "start": start,
            "end": end,
            "text": text,
        }))
    }
}

/// A registered session whose ingestion has not run yet.
pub struct Pending {
    pub session: Arc<Session>,
    agent: AgentSession,
    repo: PathBuf,
    store: Store,
    engine_config: EngineConfig,
}

impl Pending {
    /// Indexes, builds the timeline and streams Level 1. Blocking.
    pub fn run(self) {
        let Pending {
            session,
            agent,
            repo,
            store,
            engine_config,
        } = self;
        if let Err(e) = ingest(&session, &agent, &repo, &store, &engine_config) {
            tracing::warn!(session = %session.session_id, "ingestion failed: {}", e);
            session.fail(e.code, &e.message);
        }
    }
}

fn ingest(
    session: &Session,
    agent: &AgentSession,
    repo: &Path,
    store: &Store,
    engine_config: &EngineConfig,
) -> Result<(), ApiError> {
    let index = scan_repository(repo, &ScanOptions::default())?;
    let timeline = build_timeline(agent, &DirSnapshot::new(repo))?;
    store.put_contents(&index)?;
    session.log.append(&Record::Snapshot {
        index: index.document().clone(),
        timeline: timeline.clone(),
    })?;
    let index = Arc::new(index);
    session.set_snapshot(Arc::clone(&index), timeline, engine_config);
    let snapshot = session.snapshot().expect("snapshot just set");

    let mut persist_error = None;
    let doc = session
        .engine
        .level1(
            &session.task_prompt,
            &snapshot.timeline,
            &index,
            &mut |card| {
                if persist_error.is_none() {
                    persist_error = session.push_card(card).err();
                }
            },
        )
        .map_err(|e| ApiError::from(lens_core::Error::Generation(e)))?;
    if let Some(e) = persist_error {
        return Err(e.into());
    }
    session.complete(doc)?;
    Ok(())
}

/// All sessions known to the service.
pub struct Registry {
    store: Store,
    backend: Arc<dyn GenerationBackend>,
    engine_config: EngineConfig,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
}

impl Registry {
    /// Opens the store and restores every persisted session.
    pub fn open(
        store: Store,
        backend: Arc<dyn GenerationBackend>,
        engine_config: EngineConfig,
    ) -> Result<Self, StoreError> {
        let registry = Registry {
            store,
            backend,
            engine_config,
            sessions: RwLock::new(BTreeMap::new()),
        };
        for stored in registry.store.load_all()? {
            let session = registry.restore(stored)?;
            registry
                .sessions
                .write()
                .expect("registry lock")
                .insert(session.session_id.clone(), Arc::new(session));
        }
        Ok(registry)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn engine(&self) -> Engine {
        Engine::new(Arc::clone(&self.backend), self.engine_config.clone())
    }

    fn restore(&self, stored: StoredSession) -> Result<Session, StoreError> {
        let log = self.store.log(&stored.session_id)?;
        let session = Session::new(stored.session_id, stored.task_prompt, self.engine(), log);
        if let Some((index, timeline)) = stored.snapshot {
            session.set_snapshot(index, timeline, &self.engine_config);
        }
        {
            let mut live = session.live.lock().expect("session lock");
            live.cards = stored.cards;
            live.failure = stored.failure;
            live.level1 = stored.level1;
            live.status = if live.level1.is_some() {
                Status::Level1Ready
            } else {
                Status::Failed
            };
        }
        if session.status() == Status::Failed
            && session.live.lock().expect("session lock").failure.is_none()
        {
            session.fail("interrupted", "the service stopped before level 1 finished");
        }
        {
            let mut cache = session.level2.lock().expect("level2 lock");
            for (i, doc) in stored.level2 {
                let bytes: Arc<str> =
                    Arc::from(serde_json::to_string(&doc).expect("level 2 serializes"));
                cache.insert(i, Arc::new(OnceCell::new_with(Some(bytes))));
            }
        }
        Ok(session)
    }

    pub fn get(&self, session_id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session {}", session_id)))
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .expect("registry lock")
            .keys()
            .cloned()
            .collect()
    }

    /// Parses the log and registers the session. Returns `None` for the
    /// pending work when the session already exists, in which case the
    /// existing session is returned untouched.
    pub fn create(
        &self,
        log: &[u8],
        repo: Option<PathBuf>,
    ) -> Result<(Arc<Session>, Option<Pending>), ApiError> {
        let agent = parse_session_log(log)?;
        let repo = repo.unwrap_or_else(|| agent.repo_root.clone());
        if !repo.is_dir() {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "io_error",
                format!("repository {:?} is not a readable directory", repo),
            ));
        }
        let mut sessions = self.sessions.write().expect("registry lock");
        if let Some(existing) = sessions.get(&agent.session_id) {
            return Ok((Arc::clone(existing), None));
        }
        let log = self.store.log(&agent.session_id)?;
        log.append(&Record::Session {
            session_id: agent.session_id.clone(),
            task_prompt: agent.task_prompt.clone(),
            repo_root: repo.clone(),
        })?;
        let session = Arc::new(Session::new(
            agent.session_id.clone(),
            agent.task_prompt.clone(),
            self.engine(),
            log,
        ));
        sessions.insert(session.session_id.clone(), Arc::clone(&session));
        let pending = Pending {
            session: Arc::clone(&session),
            agent,
            repo,
            store: self.store.clone(),
            engine_config: self.engine_config.clone(),
        };
        Ok((session, Some(pending)))
    }
}
