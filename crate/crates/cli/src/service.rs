//! Local HTTP service: scenes, sessions and the clarification dialogue.
//!
//! Every request body is JSON; every response body is JSON carrying
//! `api_version`. Errors use `{"api_version": 1, "error": {"code", "message"}}`.

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use tnsr_core::executor::{Dialogue, DialogueError, ExecValue, FailureReport, RestructureError, TraceStatus};
use tnsr_core::parser::ParseError;
use tnsr_core::program::ProgramError;
use tnsr_core::scene::{parse_scene, SCENE_FILE_EXTENSION};
use tnsr_core::{ConceptMemory, ExecConfig, ExecutionTrace, Grammar, OracleGrounder, RelationThresholds, SceneGraph};
use tokio::sync::Mutex;

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    /// Stored scene the session was bound to, if any.
    pub scene_id: Option<String>,
    pub dialogue: Dialogue,
}

pub struct AppState {
    scenes: BTreeMap<String, SceneGraph>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    grounder: OracleGrounder,
    grammar: Arc<Grammar>,
    exec: ExecConfig,
    persist: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub thresholds: RelationThresholds,
    pub exec: ExecConfig,
    /// Directory for one JSON document per session.
    pub sessions_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { thresholds: RelationThresholds::default(), exec: ExecConfig::default(), sessions_dir: None }
    }
}

impl AppState {
    pub fn new(scenes: BTreeMap<String, SceneGraph>, config: ServiceConfig) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        let mut next = 1;
        if let Some(dir) = &config.sessions_dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let text = fs::read_to_string(&path)?;
                    let s: Session = serde_json::from_str(&text)
                        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
                    if let Some(n) = s.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                        next = next.max(n + 1);
                    }
                    sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
            }
        }
        Ok(AppState {
            scenes,
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(next),
            grounder: OracleGrounder::new(ConceptMemory::training(), config.thresholds),
            grammar: Grammar::builtin(),
            exec: config.exec,
            persist: config.sessions_dir,
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session `{id}`")))
    }

    fn save(&self, s: &Session) -> Result<(), ApiError> {
        let Some(dir) = &self.persist else { return Ok(()) };
        let path = dir.join(format!("{}.json", s.id));
        let text = serde_json::to_string_pretty(s).expect("session serialises");
        fs::write(&path, text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
    }
}

/// Load every `*.scene.json` under `dir`, keyed by file stem.
pub fn load_scene_dir(dir: &FsPath) -> Result<BTreeMap<String, SceneGraph>, String> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(id) = name.strip_suffix(SCENE_FILE_EXTENSION) else { continue };
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let scene = parse_scene(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        out.insert(id.to_string(), scene);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        let text = e.response();
        let code = match &e {
            DialogueError::NoPendingFailure => {
                return ApiError::new(StatusCode::CONFLICT, "no_pending_failure", text);
            }
            DialogueError::Parse(ParseError::Empty) => "empty_query",
            DialogueError::Parse(ParseError::NoTemplateMatch { .. }) => "no_template_match",
            DialogueError::Parse(ParseError::Infeasible { .. }) => "unbindable_arguments",
            DialogueError::Parse(ParseError::Program(ProgramError::UnknownConcept { .. }))
            | DialogueError::Restructure(RestructureError::Program(ProgramError::UnknownConcept { .. })) => "unknown_concept",
            DialogueError::Parse(ParseError::Program(_)) | DialogueError::Restructure(RestructureError::Program(_)) => {
                "invalid_program"
            }
            DialogueError::Restructure(RestructureError::NoNewConcepts) => "no_new_concepts",
            DialogueError::Restructure(RestructureError::NotApplicable) => "not_applicable",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, text)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"api_version": API_VERSION, "error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    scene_id: Option<String>,
    /// Inline scene document, as stored in `*.scene.json`.
    #[serde(default)]
    scene: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRequest {
    text: String,
}

#[derive(Debug, Serialize)]
pub struct SceneSummary<'a> {
    pub id: &'a str,
    pub split_tag: String,
    pub objects: usize,
}

/// Result of a query or feedback turn.
#[derive(Debug, Serialize)]
pub struct TurnResult<'a> {
    pub api_version: u32,
    pub session_id: &'a str,
    pub program: Option<String>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<&'a ExecValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<&'a FailureReport>,
    /// System reply appended to the transcript.
    pub response: &'a str,
    pub pending: bool,
    pub trace: &'a ExecutionTrace,
}

fn turn_result(s: &Session) -> serde_json::Value {
    let d = &s.dialogue;
    let trace = d.trace.as_ref().expect("a turn leaves a trace");
    let (status, answer, failure) = match &trace.status {
        TraceStatus::Success { answer } => ("success", Some(answer), None),
        TraceStatus::Failure { report } => ("failure", None, Some(report)),
    };
    let r = TurnResult {
        api_version: API_VERSION,
        session_id: &s.id,
        program: d.program.as_ref().map(|p| p.to_text()),
        status,
        answer,
        failure,
        response: d.transcript.last().map_or("", |t| t.text.as_str()),
        pending: d.pending.is_some(),
        trace,
    };
    serde_json::to_value(r).expect("turn result serialises")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}", get(get_scene))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/trace", get(get_trace))
        .with_state(state)
}

async fn list_scenes(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let scenes: Vec<SceneSummary> = st
        .scenes
        .iter()
        .map(|(id, s)| SceneSummary { id, split_tag: s.split_tag.to_string(), objects: s.len() })
        .collect();
    Json(json!({"api_version": API_VERSION, "scenes": scenes}))
}

async fn get_scene(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SceneGraph>, ApiError> {
    st.scenes.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("unknown_scene", format!("no scene `{id}`")))
}

async fn create_session(State(st): State<Arc<AppState>>, bytes: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = body(&bytes)?;
    let (scene_id, scene) = match (req.scene_id, req.scene) {
        (Some(id), None) => {
            let scene = st.scenes.get(&id).cloned().ok_or_else(|| ApiError::not_found("unknown_scene", format!("no scene `{id}`")))?;
            (Some(id), scene)
        }
        (None, Some(doc)) => {
            let scene = parse_scene(&doc.to_string()).map_err(|e| ApiError::bad_request(e.to_string()))?;
            (None, scene)
        }
        _ => return Err(ApiError::bad_request("give exactly one of `scene_id` or `scene`")),
    };
    let id = format!("s{:06}", st.next_id.fetch_add(1, Ordering::SeqCst));
    let session = Session { id: id.clone(), scene_id, dialogue: Dialogue::new(scene) };
    st.save(&session)?;
    let doc = session_doc(&session);
    st.sessions.write().expect("session table lock").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

fn session_doc(s: &Session) -> serde_json::Value {
    json!({
        "api_version": API_VERSION,
        "session_id": s.id,
        "scene_id": s.scene_id,
        "scene": s.dialogue.scene,
        "program": s.dialogue.program.as_ref().map(|p| p.to_text()),
        "pending": s.dialogue.pending,
        "transcript": s.dialogue.transcript,
    })
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    Ok(Json(session_doc(&s)))
}

async fn query(State(st): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let s = st.session(&id)?;
    let req: TextRequest = body(&bytes)?;
    let mut s = s.lock().await;
    let out = s.dialogue.query(&req.text, &st.grammar, &st.grounder, &st.exec).map(|_| ()).map_err(ApiError::from);
    st.save(&s)?;
    out?;
    Ok(Json(turn_result(&s)))
}

async fn feedback(State(st): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let s = st.session(&id)?;
    let req: TextRequest = body(&bytes)?;
    let mut s = s.lock().await;
    let out = s.dialogue.feedback(&req.text, &st.grounder, &st.exec).map(|_| ()).map_err(ApiError::from);
    st.save(&s)?;
    out?;
    Ok(Json(turn_result(&s)))
}

async fn get_trace(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    let trace = s.dialogue.trace.as_ref().ok_or_else(|| ApiError::not_found("no_trace", "the session has not run a query yet"))?;
    Ok(Json(json!({"api_version": API_VERSION, "session_id": s.id, "trace": trace})))
}
