//! HTTP facade over [`Engine`].
//!
//! Every engine operation has one endpoint. Errors come back as
//! `{"code", "message", "http_status"}` with the status from
//! [`GameError::http_status`]. Engine calls can train models, so they run on
//! the blocking pool.

use std::collections::BTreeSet;
use std::net::SocketAddr;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::classifier::LabeledText;
use crate::corpus::WritingDirection;
use crate::game::{Correction, Engine, GameError, GeoEditRequest};
use crate::geo::{region_boundary, AdminDivision, HexCell, Point};
use crate::selection::{DifficultyRecord, Tier};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), http_status: status }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "invalid_input", message)
    }
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        Self::new(e.http_status(), e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub engine: Engine,
    /// `POST /api/admin/retrain` answers 202 with a job id instead of
    /// waiting for training to finish.
    pub async_retrain: bool,
}

/// Run an engine call on the blocking pool.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, GameError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(500, "internal", e.to_string())),
    }
}

// ---- bodies -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family_id: String,
    pub display_name: String,
    pub pin: Point,
    pub writing_direction: WritingDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialectSummary {
    pub label_id: String,
    pub name: String,
    pub affiliation: String,
    pub cells: BTreeSet<HexCell>,
    pub rings: Vec<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSession {
    pub family_id: String,
    pub familiar: bool,
    /// Fixes the session's sampling for replay.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitText {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    Confirm,
}

/// `"confirm"`, `{"label": id}` or `{"new_dialect": name}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decision {
    Keyword(Keyword),
    Correct(Correction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub decision: Decision,
    #[serde(default)]
    pub geo_edit: Option<GeoEditRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divisions {
    #[serde(default)]
    pub divisions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDifficulty {
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestQuery {
    #[serde(default)]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestions {
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRef {
    pub family_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: u64,
    pub family_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyReport {
    pub family_id: String,
    pub model_version: u64,
    pub counts: std::collections::BTreeMap<Tier, usize>,
    pub records: Vec<DifficultyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub text: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub family_id: String,
    pub items: Vec<EvalItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRef {
    pub event_id: u64,
}

// ---- router -----------------------------------------------------------

/// The full API. `cors_origins` empty allows any origin.
pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = if cors_origins.is_empty() {
        cors.allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        cors.allow_origin(AllowOrigin::list(origins))
    };
    Router::new()
        .route("/api/families", get(list_families))
        .route("/api/families/:id/suggest", get(suggest))
        .route("/api/families/:id/dialects", get(dialects))
        .route("/api/families/:id/divisions", get(divisions))
        .route("/api/sessions", post(start_session))
        .route("/api/sessions/:id", get(get_session).delete(end_session))
        .route("/api/sessions/:id/quiz", get(begin_quiz))
        .route("/api/sessions/:id/quiz/submit", post(submit_quiz))
        .route("/api/sessions/:id/review", post(review))
        .route("/api/sessions/:id/match", get(begin_match))
        .route("/api/sessions/:id/match/:index", post(answer_match))
        .route("/api/sessions/:id/match/:index/correction", post(correct_match))
        .route("/api/sessions/:id/difficulty", post(set_difficulty))
        .route("/api/admin/retrain", post(retrain))
        .route("/api/admin/jobs/:job", get(job))
        .route("/api/admin/difficulty/:family", get(difficulty))
        .route("/api/admin/evaluate", post(evaluate))
        .route("/api/admin/stats/:family", get(stats))
        .layer(cors)
        .with_state(state)
}

/// Serve until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr, cors_origins: &[String]) -> std::io::Result<()> {
    let app = router(state, cors_origins);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

// ---- handlers ---------------------------------------------------------

async fn list_families(State(st): State<AppState>) -> ApiResult<Vec<FamilySummary>> {
    let families = st.engine.store().families();
    Ok(Json(
        families
            .into_iter()
            .map(|f| FamilySummary {
                pin: f.bounding_box.center(),
                family_id: f.family_id,
                display_name: f.display_name,
                writing_direction: f.writing_direction,
            })
            .collect(),
    ))
}

async fn suggest(
    State(st): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<SuggestQuery>, QueryRejection>,
) -> ApiResult<Suggestions> {
    let Query(q) = query?;
    let words = blocking(move || st.engine.suggest_words(&id, &q.prefix)).await?;
    Ok(Json(Suggestions { words }))
}

async fn dialects(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<DialectSummary>> {
    let view = st.engine.store().snapshot(&id).map_err(GameError::from)?;
    Ok(Json(
        view.labels()
            .values()
            .map(|l| DialectSummary {
                label_id: l.label_id().to_string(),
                name: l.name().to_string(),
                affiliation: l.affiliation().to_string(),
                cells: l.cells().clone(),
                rings: region_boundary(&l.region(), view.family()),
            })
            .collect(),
    ))
}

#[derive(Serialize)]
struct DivisionList {
    divisions: Vec<AdminDivision>,
}

async fn divisions(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let view = st.engine.store().snapshot(&id).map_err(GameError::from)?;
    Ok(Json(DivisionList { divisions: view.divisions().to_vec() }))
}

async fn start_session(
    State(st): State<AppState>,
    body: Result<Json<StartSession>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    let view = blocking(move || st.engine.start_session(&req.family_id, req.familiar, req.seed)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(st.engine.session(&id)?))
}

async fn end_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(st.engine.end_session(&id)?))
}

async fn begin_quiz(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || st.engine.begin_quiz_turn(&id)).await?))
}

async fn submit_quiz(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SubmitText>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    Ok(Json(blocking(move || st.engine.submit_rewrite(&id, &req.text)).await?))
}

async fn review(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ReviewRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    let result = blocking(move || match req.decision {
        Decision::Keyword(Keyword::Confirm) => st.engine.review_confirm(&id),
        Decision::Correct(c) => st.engine.review_correct(&id, c, req.geo_edit),
    })
    .await?;
    Ok(Json(result))
}

async fn begin_match(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || st.engine.begin_match_round(&id)).await?))
}

async fn answer_match(
    State(st): State<AppState>,
    Path((id, index)): Path<(String, usize)>,
    body: Result<Json<Divisions>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    Ok(Json(blocking(move || st.engine.submit_match_answer(&id, index, req.divisions)).await?))
}

async fn correct_match(
    State(st): State<AppState>,
    Path((id, index)): Path<(String, usize)>,
    body: Result<Json<Divisions>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    let event_id = blocking(move || st.engine.record_match_correction(&id, index, req.divisions)).await?;
    Ok((StatusCode::CREATED, Json(EventRef { event_id })))
}

async fn set_difficulty(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SetDifficulty>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    Ok(Json(st.engine.set_difficulty(&id, req.tier)?))
}

async fn retrain(
    State(st): State<AppState>,
    body: Result<Json<FamilyRef>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    if st.async_retrain {
        let fid = req.family_id.clone();
        let job_id = blocking(move || st.engine.retrain_async(&fid)).await?;
        return Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id, family_id: req.family_id })).into_response());
    }
    let outcome = blocking(move || st.engine.retrain(&req.family_id)).await?;
    Ok(Json(outcome).into_response())
}

async fn job(State(st): State<AppState>, Path(job): Path<u64>) -> Result<impl IntoResponse, ApiError> {
    st.engine
        .job(job)
        .map(Json)
        .ok_or_else(|| ApiError::new(404, "unknown_job", format!("unknown job {job}")))
}

async fn difficulty(State(st): State<AppState>, Path(family): Path<String>) -> ApiResult<DifficultyReport> {
    let report = blocking(move || {
        let table = st.engine.tier_table(&family)?;
        Ok(DifficultyReport {
            family_id: family,
            model_version: table.model_version,
            counts: table.counts(),
            records: table.records.clone(),
        })
    })
    .await?;
    Ok(Json(report))
}

async fn evaluate(
    State(st): State<AppState>,
    body: Result<Json<EvaluateRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    if req.items.is_empty() {
        return Err(ApiError::bad_request("no items to evaluate"));
    }
    let items: Vec<LabeledText> = req
        .items
        .into_iter()
        .enumerate()
        .map(|(i, it)| LabeledText {
            variant_id: format!("eval-{i}"),
            text: it.text,
            labels: it.labels.into_iter().collect(),
        })
        .collect();
    Ok(Json(blocking(move || st.engine.evaluate_holdout(&req.family_id, &items)).await?))
}

async fn stats(State(st): State<AppState>, Path(family): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(move || st.engine.stats(&family)).await?))
}
