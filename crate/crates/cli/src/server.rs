//! JSON HTTP API backing the calibration workbench.
//!
//! Campaigns live in `<data_dir>/<id>.jsonl` and are replayed at startup.
//! Each campaign sits behind its own mutex, so writes to one log are
//! serialized while reads and other campaigns proceed. When a token is
//! configured every route except `/health` needs `Authorization: Bearer`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use haf_core::campaign::{Campaign, CampaignError, CorpusRef, RoundKind};
use haf_core::corpus::{parse_corpus, Corpus, Format, LoadMode, SYNTHETIC_CORPUS_JSONL};
use haf_core::metrics::{evaluate, MetricsError, Scope};
use haf_core::rules::{tag_review, RuleConfig};
use haf_core::taxonomy::taxonomy_document;
use haf_core::{AspectSpan, LabelVector, Review};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{CliError, ErrorKind};

pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub corpus: Corpus,
    pub corpus_ref: CorpusRef,
    pub rules: RuleConfig,
    pub token: Option<String>,
}

/// The bundled synthetic corpus and its reference.
pub fn bundled_corpus() -> (Corpus, CorpusRef) {
    let r = parse_corpus(SYNTHETIC_CORPUS_JSONL, Format::Jsonl, LoadMode::Strict, None).expect("bundled corpus is valid");
    let n = r.corpus.len();
    (
        r.corpus,
        CorpusRef {
            path: None,
            sha256: r.provenance.sha256,
            n_reviews: n,
        },
    )
}

type Shared = Arc<Mutex<Campaign>>;

struct AppState {
    data_dir: PathBuf,
    corpus: Corpus,
    corpus_ref: CorpusRef,
    rules: RuleConfig,
    token: Option<String>,
    campaigns: RwLock<BTreeMap<String, Shared>>,
}

impl AppState {
    fn campaign(&self, id: &str) -> Result<Shared, ApiError> {
        self.campaigns
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_campaign", format!("no campaign {id:?}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        let (status, code) = match &e {
            CampaignError::UnknownRound(_) => (StatusCode::NOT_FOUND, "unknown_round"),
            CampaignError::Duplicate { .. } => (StatusCode::CONFLICT, "duplicate_annotation"),
            CampaignError::RoundClosed(_) => (StatusCode::CONFLICT, "round_closed"),
            CampaignError::AgreementUnavailable(_) => (StatusCode::CONFLICT, "agreement_unavailable"),
            CampaignError::Corrupt { .. } | CampaignError::Io { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage")
            }
            _ => (StatusCode::BAD_REQUEST, "invalid_request"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn ok(value: impl serde::Serialize) -> ApiResult {
    Ok(Json(value).into_response())
}

fn created(value: impl serde::Serialize) -> ApiResult {
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

fn lock(c: &Shared) -> std::sync::MutexGuard<'_, Campaign> {
    c.lock().unwrap_or_else(|p| p.into_inner())
}

fn campaign_view(c: &Campaign) -> Value {
    json!({
        "id": c.id,
        "name": c.name,
        "corpus": c.corpus,
        "rounds": c.round_summaries(),
        "audits": c.audits().len(),
        "n_events": c.n_events(),
    })
}

fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Builds the router, replaying every campaign log found in `data_dir`.
pub fn router(config: ServerConfig) -> Result<Router, CliError> {
    std::fs::create_dir_all(&config.data_dir).map_err(|e| CliError::io(&config.data_dir, e))?;
    let mut campaigns = BTreeMap::new();
    let entries = std::fs::read_dir(&config.data_dir).map_err(|e| CliError::io(&config.data_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(&config.data_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        let c = Campaign::open(&path)?;
        log::info!("loaded campaign {} ({} events)", c.id, c.n_events());
        campaigns.insert(c.id.clone(), Arc::new(Mutex::new(c)));
    }
    let state = Arc::new(AppState {
        data_dir: config.data_dir,
        corpus: config.corpus,
        corpus_ref: config.corpus_ref,
        rules: config.rules,
        token: config.token,
        campaigns: RwLock::new(campaigns),
    });
    let api = Router::new()
        .route("/taxonomy", get(taxonomy))
        .route("/tag", post(tag))
        .route("/evaluate", post(evaluate_handler))
        .route("/campaigns", get(list_campaigns).post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/rounds", get(list_rounds).post(open_round))
        .route("/campaigns/{id}/rounds/{round}/close", post(close_round))
        .route("/campaigns/{id}/audit/sample", get(audit_sample))
        .route("/campaigns/{id}/audits", post(record_audit))
        .route("/reviews/next-unlabeled", get(next_unlabeled))
        .route("/reviews/{id}", get(get_review))
        .route("/annotations", post(annotate))
        .route("/agreement", get(agreement))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Ok(Router::new().route("/health", get(|| async { "ok" })).merge(api).with_state(state))
}

pub async fn serve(addr: SocketAddr, config: ServerConfig) -> Result<(), CliError> {
    let app = router(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::new(ErrorKind::Io, format!("bind {addr}: {e}")))?;
    log::info!("listening on {}", listener.local_addr().map_or(addr, |a| a));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))
}

async fn auth(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(request).await
}

async fn taxonomy() -> ApiResult {
    ok(taxonomy_document())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TagRequest {
    text: String,
    #[serde(default)]
    id: Option<String>,
}

/// Answers with the canonical label-vector serialization.
async fn tag(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: TagRequest = parse(&body)?;
    let review = Review::new(req.id.unwrap_or_else(|| "request".into()), req.text)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    ok(tag_review(&review, &state.rules).labels)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    gold: Vec<LabelVector>,
    pred: Vec<LabelVector>,
    #[serde(default)]
    scope: Scope,
}

async fn evaluate_handler(body: Bytes) -> ApiResult {
    let req: EvaluateRequest = parse(&body)?;
    ok(evaluate(&req.gold, &req.pred, req.scope)?)
}

async fn list_campaigns(State(state): State<Arc<AppState>>) -> ApiResult {
    let all: Vec<Shared> = state.campaigns.read().expect("registry lock").values().cloned().collect();
    let views: Vec<Value> = all.iter().map(|c| campaign_view(&lock(c))).collect();
    ok(json!({"campaigns": views}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateCampaign {
    id: String,
    #[serde(default)]
    name: Option<String>,
}

async fn create_campaign(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: CreateCampaign = parse(&body)?;
    if !valid_id(&req.id) {
        return Err(ApiError::bad_request("campaign id must be 1-64 characters of [A-Za-z0-9_-]"));
    }
    let mut registry = state.campaigns.write().expect("registry lock");
    if registry.contains_key(&req.id) {
        return Err(ApiError::new(StatusCode::CONFLICT, "campaign_exists", format!("campaign {:?} exists", req.id)));
    }
    let path = state.data_dir.join(format!("{}.jsonl", req.id));
    let c = Campaign::create(&path, req.id.clone(), req.name, state.corpus_ref.clone())?;
    let view = campaign_view(&c);
    registry.insert(req.id, Arc::new(Mutex::new(c)));
    created(view)
}

async fn get_campaign(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    ok(campaign_view(&lock(&state.campaign(&id)?)))
}

async fn list_rounds(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    ok(json!({"rounds": lock(&state.campaign(&id)?).round_summaries()}))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OpenRound {
    #[serde(default)]
    kind: Option<RoundKind>,
    #[serde(default)]
    prompt_version: Option<String>,
    #[serde(default)]
    note: Option<String>,
}

async fn open_round(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: OpenRound = if body.is_empty() { OpenRound::default() } else { parse(&body)? };
    let shared = state.campaign(&id)?;
    let mut c = lock(&shared);
    let round = c.open_round(req.kind.unwrap_or(RoundKind::Calibration), req.prompt_version, req.note)?;
    let summary = c.round_summaries().into_iter().find(|s| s.round == round);
    created(summary)
}

async fn close_round(State(state): State<Arc<AppState>>, Path((id, round)): Path<(String, u32)>) -> ApiResult {
    let shared = state.campaign(&id)?;
    let mut c = lock(&shared);
    c.close_round(round)?;
    ok(c.round_summaries().into_iter().find(|s| s.round == round))
}

#[derive(Deserialize)]
struct RoundQuery {
    campaign: String,
    round: u32,
}

#[derive(Deserialize)]
struct NextQuery {
    campaign: String,
    round: u32,
    annotator: String,
}

async fn next_unlabeled(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> ApiResult {
    let shared = state.campaign(&q.campaign)?;
    let c = lock(&shared);
    let ids = state.corpus.reviews().map(|r| r.id.as_str());
    let next = c.next_unlabeled(q.round, &q.annotator, ids)?;
    let done = c.round(q.round)?.annotations.get(&q.annotator).map_or(0, |m| m.len());
    let review = next.and_then(|id| state.corpus.get(id)).map(|r| &r.review);
    ok(json!({
        "review": review,
        "labeled": done,
        "total": state.corpus.len(),
    }))
}

async fn get_review(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    match state.corpus.get(&id) {
        Some(r) => ok(&r.review),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_review", format!("no review {id:?}"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRequest {
    campaign: String,
    round: u32,
    annotator: String,
    review_id: String,
    labels: LabelVector,
    #[serde(default)]
    spans: Option<Vec<AspectSpan>>,
}

async fn annotate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: AnnotationRequest = parse(&body)?;
    let shared = state.campaign(&req.campaign)?;
    let mut c = lock(&shared);
    c.round(req.round)?;
    let record = state
        .corpus
        .get(&req.review_id)
        .ok_or_else(|| ApiError::bad_request(format!("review {:?} is not in the served corpus", req.review_id)))?;
    for span in req.spans.iter().flatten() {
        span.validate(&record.review.text).map_err(|e| ApiError::bad_request(e.to_string()))?;
        if !req.labels.has_general(span.category) {
            return Err(ApiError::bad_request(format!(
                "span {:?} is tagged {} but that category is not selected",
                span.surface,
                span.category.slug()
            )));
        }
    }
    c.record_annotation(req.round, &req.annotator, &req.review_id, req.labels, req.spans)?;
    created(json!({
        "campaign": req.campaign,
        "round": req.round,
        "annotator": req.annotator,
        "review_id": req.review_id,
    }))
}

async fn agreement(State(state): State<Arc<AppState>>, Query(q): Query<RoundQuery>) -> ApiResult {
    let shared = state.campaign(&q.campaign)?;
    let agreement = lock(&shared).agreement(q.round)?;
    ok(agreement)
}

#[derive(Deserialize)]
struct SampleQuery {
    size: usize,
    #[serde(default)]
    seed: u64,
}

async fn audit_sample(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<SampleQuery>) -> ApiResult {
    let shared = state.campaign(&id)?;
    let sample = lock(&shared).sample_audit(q.size, q.seed)?;
    let items: Vec<Value> = sample
        .iter()
        .map(|c| {
            let mut v = serde_json::to_value(c).expect("plain data");
            v["text"] = json!(state.corpus.get(&c.review_id).map(|r| r.review.text.as_str()));
            v
        })
        .collect();
    ok(json!({"seed": q.seed, "sample": items}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditRequest {
    size: usize,
    #[serde(default)]
    seed: u64,
    verdicts: BTreeMap<String, bool>,
}

/// Redraws the sample from `(size, seed)` so verdicts always apply to the
/// sample the client was shown.
async fn record_audit(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: AuditRequest = parse(&body)?;
    let shared = state.campaign(&id)?;
    let mut c = lock(&shared);
    let sample = c.sample_audit(req.size, req.seed)?;
    created(c.record_audit(req.seed, &sample, &req.verdicts)?)
}
