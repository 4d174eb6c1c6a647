//! HTTP API under `/v1`. Bodies in both directions are canonical JSON.
//! Mutations are serialized through one writer lock; reads share it.

use std::collections::HashMap;
use std::sync::{Arc, PoisonError, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::json;

use riskctl_core::canonical::{to_canonical, SchemaViolation};
use riskctl_core::gateway::{
    decode_records, decode_request, Engine, EntryRequest, EvaluateRequest, ExcludeRequest,
    FindingUpdateRequest, FindingsRequest, GateRequest, GatewayError, ImportRequest,
    LifecycleRequest, MeasureRequest, ReallocateRequest, ResolveRequest, SolveRequest,
    WhatIfRequest, DEFAULT_ACTOR, MAX_ENHANCEMENT_MARGIN,
};
use riskctl_core::lifecycle::Phase;
use riskctl_core::register::{DisclosureKind, Period};
use riskctl_core::time::Timestamp;

pub type Shared = Arc<RwLock<Engine>>;

const NDJSON: &str = "application/x-ndjson";

pub struct ApiError {
    status: StatusCode,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: String) -> Self {
        ApiError {
            status,
            message,
            path: None,
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let path = match &e {
            GatewayError::Schema(v) | GatewayError::Config(v) => Some(v.path.clone()),
            _ => None,
        };
        ApiError {
            status,
            message: e.to_string(),
            path,
        }
    }
}

impl From<SchemaViolation> for ApiError {
    fn from(v: SchemaViolation) -> Self {
        GatewayError::Schema(v).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"status": self.status.as_u16(), "message": self.message});
        if let Some(path) = self.path {
            error["path"] = json!(path);
        }
        canonical(self.status, &json!({ "error": error }))
    }
}

type ApiResult = Result<Response, ApiError>;

fn canonical<T: serde::Serialize>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical(body),
    )
        .into_response()
}

fn ok<T: serde::Serialize>(body: &T) -> ApiResult {
    Ok(canonical(StatusCode::OK, body))
}

fn bad_request(message: String) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, message)
}

fn is_ndjson(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with(NDJSON))
}

fn text(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body).map_err(|e| bad_request(format!("body is not UTF-8: {e}")))
}

fn phase(target: &str) -> Result<Phase, ApiError> {
    target
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, e))
}

fn read(s: &Shared) -> std::sync::RwLockReadGuard<'_, Engine> {
    s.read().unwrap_or_else(PoisonError::into_inner)
}

fn write(s: &Shared) -> std::sync::RwLockWriteGuard<'_, Engine> {
    s.write().unwrap_or_else(PoisonError::into_inner)
}

pub fn router(engine: Engine) -> Router {
    router_shared(Arc::new(RwLock::new(engine)))
}

pub fn router_shared(state: Shared) -> Router {
    let v1 = Router::new()
        .route("/register", get(register))
        .route("/risks/{id}", get(risk))
        .route("/measurements", post(measurements))
        .route("/findings", post(findings))
        .route("/findings/{id}", post(update_finding))
        .route("/rules/evaluate", post(evaluate))
        .route("/whatif", post(whatif))
        .route("/gates/{target}/evaluate", post(gate_evaluate))
        .route("/gates/{target}/transition", post(gate_transition))
        .route("/escalations/{id}/resolve", post(resolve))
        .route("/disclosures/{kind}", get(disclosure))
        .route("/audit/verify", get(verify))
        .route("/import", post(import))
        .route("/entries", post(entry))
        .route("/domains/{id}/exclude", post(exclude))
        .route("/budget/reallocate", post(reallocate))
        .route("/lifecycle", post(lifecycle))
        .route("/solve", post(solve))
        .route("/forecast/{kri}", get(forecast))
        .route("/due", get(due))
        .route("/schema", get(schema));
    Router::new()
        .nest("/v1", v1)
        .fallback(not_found)
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route".into())
}

/// Serves the API until interrupted.
pub async fn serve(engine: Engine, listen: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("listening on http://{}/v1", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn register(State(s): State<Shared>) -> Response {
    let bytes = read(&s).register_bytes();
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        bytes,
    )
        .into_response()
}

async fn risk(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    ok(&read(&s).risk(&id)?)
}

async fn measurements(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let req = if is_ndjson(&headers) {
        MeasureRequest {
            actor: DEFAULT_ACTOR.into(),
            measurements: decode_records(text(&body)?)?,
        }
    } else {
        decode_request(&body)?
    };
    ok(&write(&s).measure(req)?)
}

async fn findings(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let req = if is_ndjson(&headers) {
        FindingsRequest {
            actor: DEFAULT_ACTOR.into(),
            findings: decode_records(text(&body)?)?,
        }
    } else {
        decode_request(&body)?
    };
    ok(&write(&s).submit_findings(req)?)
}

async fn update_finding(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: FindingUpdateRequest = decode_request(&body)?;
    ok(&write(&s).update_finding(&id, req)?)
}

async fn evaluate(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: EvaluateRequest = decode_request(&body)?;
    ok(&write(&s).evaluate(req)?)
}

async fn whatif(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: WhatIfRequest = decode_request(&body)?;
    ok(&read(&s).whatif(&req)?)
}

async fn gate_evaluate(
    State(s): State<Shared>,
    Path(target): Path<String>,
    body: Bytes,
) -> ApiResult {
    let target = phase(&target)?;
    let req: GateRequest = decode_request(&body)?;
    ok(&read(&s).evaluate_gate(target, &req.approvals)?)
}

async fn gate_transition(
    State(s): State<Shared>,
    Path(target): Path<String>,
    body: Bytes,
) -> ApiResult {
    let target = phase(&target)?;
    let req: GateRequest = decode_request(&body)?;
    ok(&write(&s).transition(target, req)?)
}

async fn resolve(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: ResolveRequest = decode_request(&body)?;
    ok(&write(&s).resolve_escalation(&id, req)?)
}

fn timestamp(q: &HashMap<String, String>, key: &str) -> Result<Option<Timestamp>, ApiError> {
    q.get(key)
        .map(|v| {
            v.parse()
                .map(Timestamp)
                .map_err(|_| bad_request(format!("query `{key}` must be seconds since the epoch")))
        })
        .transpose()
}

async fn disclosure(
    State(s): State<Shared>,
    Path(kind): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let kind: DisclosureKind = kind
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, e))?;
    let engine = read(&s);
    let period = match (timestamp(&q, "from")?, timestamp(&q, "to")?) {
        (None, None) => None,
        (from, to) => Some(Period {
            from: from.unwrap_or(Timestamp(0)),
            to: to.unwrap_or_else(|| engine.now()),
        }),
    };
    ok(&engine.disclosure(kind, period)?)
}

async fn verify(State(s): State<Shared>) -> ApiResult {
    ok(&read(&s).verify()?)
}

async fn import(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: ImportRequest = decode_request(&body)?;
    ok(&write(&s).import(req)?)
}

async fn entry(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: EntryRequest = decode_request(&body)?;
    ok(&write(&s).upsert_entry(req)?)
}

async fn exclude(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: ExcludeRequest = decode_request(&body)?;
    ok(&write(&s).exclude(&id, req)?)
}

async fn reallocate(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: ReallocateRequest = decode_request(&body)?;
    ok(&write(&s).reallocate_budget(req)?)
}

async fn lifecycle(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: LifecycleRequest = decode_request(&body)?;
    ok(&write(&s).update_lifecycle(req)?)
}

async fn solve(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: SolveRequest = decode_request(&body)?;
    ok(&read(&s).solve(&req)?)
}

async fn forecast(
    State(s): State<Shared>,
    Path(kri): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let threshold = q
        .get("threshold")
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| bad_request("query `threshold` must be a number".into()))
        })
        .transpose()?;
    ok(&read(&s).forecast(&kri, threshold)?)
}

async fn due(State(s): State<Shared>) -> ApiResult {
    ok(&read(&s).due()?)
}

/// Validation rules clients mirror: indicator scales and levels from the
/// catalog, and the id sets requests are checked against.
async fn schema(State(s): State<Shared>) -> ApiResult {
    let engine = read(&s);
    let snap = engine.snapshot();
    ok(&json!({
        "kris": snap.catalog.kris.iter().map(|k| json!({
            "id": k.id,
            "lo": k.scale.lo,
            "hi": k.scale.hi,
            "unit": k.scale.unit,
            "thresholds": k.thresholds,
        })).collect::<Vec<_>>(),
        "kcis": snap.catalog.kcis.iter().map(|k| json!({"id": k.id, "metric": k.metric})).collect::<Vec<_>>(),
        "roles": engine.governance().roles.iter().map(|r| &r.id).collect::<Vec<_>>(),
        "phases": ["planning", "training", "deployed"],
        "disclosures": ["risk", "governance", "incident"],
        "effort_tiers": [1, 2, 3],
        "max_enhancement_margin": MAX_ENHANCEMENT_MARGIN,
    }))
}
