//! HTTP sessions where two anonymous respondents answer the same queries.
//!
//! A session keeps only the grid, the tolerance and the answered transcript.
//! After each completed answer pair the elicitation is re-run from the start
//! against a replay of the transcript; it either finishes or stops at the
//! first query the replay cannot answer, which becomes the pending query.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use twouta_core::algebra::Tolerance;
use twouta_core::elicitation::{run, ElicitationConfig, RecoveredModels};
use twouta_core::plot::{plot_data, PlotData};
use twouta_core::report::{RunReport, RunResult};
use twouta_core::{AnswerPair, Error, Grid, Query, Rational, ReplayTranscript, Transcript, UtaModel};

/// Curves per plane in session results.
pub const RESULT_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AwaitingAnswers,
    Computing,
    Done,
    Failed,
}

/// Error payload: `{code, message, context}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub context: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.into(), message: message.into(), context: Value::Null }
    }

    fn with_context(mut self, context: Value) -> Self {
        self.context = context;
        self
    }

    fn not_found(id: u64) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}")).with_context(json!({ "id": id }))
    }

    /// Payload for an elicitation failure, with the offending rectangles when known.
    pub fn from_core(e: &Error) -> Self {
        let context = match e {
            Error::AtTarget { criterion, interval, rects, .. } => {
                json!({ "criterion": criterion, "interval": interval, "rectangles": rects })
            }
            Error::NoValidReferencePair { criterion, interval } => {
                json!({ "criterion": criterion, "interval": interval })
            }
            _ => Value::Null,
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string()).with_context(context)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug)]
struct Session {
    grid: Arc<Grid>,
    config: ElicitationConfig,
    transcript: Transcript,
    pending: Option<Query>,
    collected: Vec<Option<Rational>>,
    status: Status,
    result: Option<RunResult>,
}

impl Session {
    fn new(grid: Arc<Grid>, tolerance: Tolerance) -> Self {
        let mut s = Session {
            grid,
            config: ElicitationConfig { tolerance, ..ElicitationConfig::default() },
            transcript: Transcript::new(),
            pending: None,
            collected: Vec::new(),
            status: Status::Computing,
            result: None,
        };
        s.resume();
        s
    }

    /// Replays the transcript until the run ends or needs a new answer pair.
    fn resume(&mut self) {
        self.status = Status::Computing;
        let mut replay = ReplayTranscript::new(self.transcript.clone());
        match run(&mut replay, self.grid.clone(), self.config.clone()) {
            Err(f) if matches!(f.error, Error::AwaitingAnswers(_)) => {
                let Error::AwaitingAnswers(q) = f.error else { unreachable!() };
                self.pending = Some(*q);
                self.status = Status::AwaitingAnswers;
            }
            result => {
                self.pending = None;
                self.status = if result.is_ok() { Status::Done } else { Status::Failed };
                self.result = Some(result);
            }
        }
    }

    fn submit(&mut self, value: Option<Rational>) -> Result<(), ApiError> {
        let Some(query) = self.pending.clone() else {
            return Err(ApiError::new(StatusCode::CONFLICT, "session_closed", "the session takes no more answers"));
        };
        if let Some(v) = &value {
            let scale = self.grid.scale(query.j);
            if !scale.contains(v) {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "malformed_value",
                    format!("{v} is outside [{}, {}]; submit null when no value on the scale fits", scale.low(), scale.high()),
                ));
            }
        }
        self.collected.push(value);
        if self.collected.len() == 2 {
            let b = self.collected.pop().expect("two answers");
            let a = self.collected.pop().expect("two answers");
            self.transcript.push(query, AnswerPair::new(a, b));
            self.resume();
        }
        Ok(())
    }
}

/// Shared state of the service.
#[derive(Debug, Default)]
pub struct Sessions {
    next: AtomicU64,
    map: Mutex<HashMap<u64, Arc<Mutex<Session>>>>,
}

impl Sessions {
    fn get(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.map.lock().expect("session map").get(&id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub grid: Value,
    #[serde(default)]
    pub epsilon: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub status: Status,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PendingQuery {
    pub query: Query,
    pub phrasing: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub status: Status,
    pub answers_received: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    /// Slopes anchored at 1 on the initialization interval.
    pub anchored: Vec<Vec<Vec<Rational>>>,
    /// Same models scaled so that the marginal ranges sum to 1.
    pub normalized: Vec<Vec<Vec<Rational>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub status: Status,
    pub outcome: RunReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<Tables>,
    pub curves: Vec<PlotData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

fn parse_rational(v: &Value) -> Option<Rational> {
    match v {
        Value::String(s) => s.trim().parse().ok(),
        Value::Number(n) => n.to_string().parse().ok(),
        _ => None,
    }
}

/// Human phrasing of a matching query.
pub fn phrase(grid: &Grid, q: &Query) -> String {
    let (ci, cj) = (&grid.scale(q.i).name, &grid.scale(q.j).name);
    format!(
        "Consider two alternatives identical except on {ci} and {cj}. The first has {ci} = {} and {cj} = {}. \
         The second has {ci} = {}. Which value of {cj} makes the second exactly as good as the first? \
         Answer none if no value up to {} is enough.",
        q.q_i,
        q.q_j,
        q.p_i,
        grid.scale(q.j).high()
    )
}

fn result_payload(session: &Session) -> Result<SessionResult, ApiError> {
    let Some(result) = &session.result else {
        return Err(ApiError::new(StatusCode::CONFLICT, "not_done", "the session is still collecting answers")
            .with_context(json!({ "answers_recorded": session.transcript.len() })));
    };
    let outcome = RunReport::new(&session.grid, result, None);
    let (models, error): (Vec<UtaModel>, _) = match result {
        Ok(out) => match &out.models {
            RecoveredModels::TwoModels(a, b) => (vec![a.clone(), b.clone()], None),
            RecoveredModels::IdenticalModels(m) => (vec![m.clone()], None),
        },
        Err(f) => (Vec::new(), Some(ApiError::from_core(&f.error))),
    };
    let tables = (!models.is_empty()).then(|| Tables {
        anchored: models.iter().map(|m| m.slopes().to_vec()).collect(),
        normalized: models.iter().map(|m| m.renormalize_01().slopes().to_vec()).collect(),
    });
    let mut curves = Vec::new();
    if !models.is_empty() {
        let labeled: Vec<(String, &UtaModel)> =
            models.iter().enumerate().map(|(k, m)| (format!("model {}", k + 1), m)).collect();
        let n = session.grid.len();
        for i in 0..n {
            for j in i + 1..n {
                curves.push(plot_data(&labeled, i, j, RESULT_LEVELS).map_err(|e| ApiError::from_core(&e))?);
            }
        }
    }
    Ok(SessionResult { status: session.status, outcome, tables, curves, error })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("session worker panicked")
}

async fn create(State(st): State<Arc<Sessions>>, body: Json<CreateRequest>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let grid: Grid = serde_json::from_value(body.grid.clone()).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_grid", e.to_string())
    })?;
    let tolerance = match &body.epsilon {
        None | Some(Value::Null) => Tolerance::exact(),
        Some(v) => {
            let eps = parse_rational(v).ok_or_else(|| {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_epsilon", format!("epsilon {v} is not a rational"))
            })?;
            Tolerance::new(eps).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_epsilon", e.to_string()))?
        }
    };
    let session = blocking(move || Session::new(Arc::new(grid), tolerance)).await;
    let status = session.status;
    let id = st.next.fetch_add(1, Ordering::SeqCst) + 1;
    st.map.lock().expect("session map").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(Created { id, status })))
}

async fn next_query(State(st): State<Arc<Sessions>>, Path(id): Path<u64>) -> ApiResult<PendingQuery> {
    let session = st.get(id)?;
    let s = session.lock().expect("session");
    match &s.pending {
        Some(q) => Ok(Json(PendingQuery { query: q.clone(), phrasing: phrase(&s.grid, q) })),
        None => Err(ApiError::new(StatusCode::CONFLICT, "no_pending", "no query is pending")
            .with_context(json!({ "status": s.status }))),
    }
}

async fn submit(State(st): State<Arc<Sessions>>, Path(id): Path<u64>, Json(body): Json<Value>) -> ApiResult<SubmitResponse> {
    let session = st.get(id)?;
    let value = match body.get("value") {
        Some(Value::Null) => None,
        Some(v) => Some(parse_rational(v).ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_value", format!("{v} is not a rational"))
        })?),
        None => {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_value", "missing field value"));
        }
    };
    blocking(move || {
        let mut s = session.lock().expect("session");
        s.submit(value)?;
        Ok(Json(SubmitResponse { status: s.status, answers_received: s.collected.len() }))
    })
    .await
}

async fn result(State(st): State<Arc<Sessions>>, Path(id): Path<u64>) -> ApiResult<SessionResult> {
    let session = st.get(id)?;
    blocking(move || result_payload(&session.lock().expect("session")).map(Json)).await
}

async fn transcript(State(st): State<Arc<Sessions>>, Path(id): Path<u64>) -> Result<String, ApiError> {
    let session = st.get(id)?;
    let text = session.lock().expect("session").transcript.to_jsonl();
    Ok(text)
}

pub fn router(state: Arc<Sessions>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/query", get(next_query))
        .route("/sessions/{id}/answers", post(submit))
        .route("/sessions/{id}/result", get(result))
        .route("/sessions/{id}/transcript", get(transcript))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(Sessions::default()))).await
}
