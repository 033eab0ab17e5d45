//! HTTP routes. Every JSON body is `{"versions": .., "data": ..}` or
//! `{"versions": .., "error": ..}`, and every response carries the version
//! labels as headers too.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use neuroaudit::eval::StandardKind;
use neuroaudit::pipeline::Versions;
use neuroaudit::record::AuditCategory;
use neuroaudit::rules::explain;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decision::{final_categories, Action, ReviewDecision, Status};
use crate::refinement::Proposal;
use crate::state::{RequestError, ReviewState};

pub const REVIEWER_HEADER: &str = "x-reviewer-id";
pub const LEXICON_HEADER: &str = "x-lexicon-version";
pub const RULES_HEADER: &str = "x-rules-version";

pub type Shared = Arc<RwLock<ReviewState>>;

#[derive(Clone)]
struct App {
    state: Shared,
    versions: Versions,
}

struct ApiError(StatusCode, String);

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        let code = match e {
            RequestError::NotFound(_) => StatusCode::NOT_FOUND,
            RequestError::Invalid(_) => StatusCode::BAD_REQUEST,
            RequestError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn bad(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, message.into())
}

type ApiResult = Result<Response, ApiError>;

fn ok(app: &App, data: impl Serialize) -> ApiResult {
    Ok(Json(json!({ "versions": app.versions, "data": data })).into_response())
}

fn error_body(versions: &Versions, code: StatusCode, message: &str) -> Response {
    (code, Json(json!({ "versions": versions, "error": message }))).into_response()
}

async fn version_headers(State(versions): State<Versions>, request: Request, next: Next) -> Response {
    let mut response = next.run(request).await;
    let headers = response.headers_mut();
    for (name, value) in [(LEXICON_HEADER, &versions.lexicon), (RULES_HEADER, &versions.rules)] {
        if let Ok(v) = HeaderValue::from_str(value) {
            headers.insert(name, v);
        }
    }
    response
}

pub fn router(state: Shared) -> Router {
    let versions = state.read().expect("state lock").versions();
    let app = App {
        state,
        versions: versions.clone(),
    };
    let errors = versions.clone();
    Router::new()
        .route("/records", get(list_records))
        .route("/records/{id}", get(record_detail))
        .route("/records/{id}/decision", axum::routing::post(post_decision))
        .route("/refinements", get(list_refinements).post(post_refinement))
        .route("/metrics", get(metrics))
        .route("/export/decisions", get(export_decisions))
        .route("/export/refinements", get(export_refinements))
        .fallback(move || async move { error_body(&errors, StatusCode::NOT_FOUND, "no such route") })
        .with_state(app.clone())
        .layer(middleware::from_fn_with_state(versions, version_headers))
}

async fn run(app: App, f: impl FnOnce(&App) -> ApiResult) -> Response {
    match f(&app) {
        Ok(r) => r,
        Err(ApiError(code, message)) => error_body(&app.versions, code, &message),
    }
}

#[derive(Serialize)]
struct RecordSummary {
    admission_id: String,
    status: Status,
    suggested: Vec<AuditCategory>,
    uncertain: Vec<AuditCategory>,
    #[serde(rename = "final", skip_serializing_if = "Option::is_none")]
    final_categories: Option<Vec<AuditCategory>>,
}

fn summary(state: &ReviewState, id: &str) -> RecordSummary {
    let entry = state.entry(id).expect("listed ids exist");
    let latest = state.latest(id);
    RecordSummary {
        admission_id: id.to_string(),
        status: state.status(id),
        suggested: entry.summary.categories.clone(),
        uncertain: state.uncertain(id),
        final_categories: latest
            .filter(|d| d.action != Action::Defer)
            .map(|d| final_categories(d, &entry.summary.categories)),
    }
}

fn parse_status(s: &str) -> Result<Status, ApiError> {
    match s {
        "pending" => Ok(Status::Pending),
        "decided" => Ok(Status::Decided),
        "deferred" => Ok(Status::Deferred),
        _ => Err(bad(format!("status must be pending, decided or deferred, not {s:?}"))),
    }
}

fn positive(q: &HashMap<String, String>, key: &str, default: usize, max: usize) -> Result<usize, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if (1..=max).contains(&n) => Ok(n),
            _ => Err(bad(format!("{key} must be an integer in 1..={max}, not {v:?}"))),
        },
    }
}

async fn list_records(State(app): State<App>, Query(q): Query<HashMap<String, String>>) -> Response {
    run(app, |app| {
        let status = q.get("status").filter(|s| !s.is_empty()).map(|s| parse_status(s)).transpose()?;
        let category: Option<AuditCategory> = q
            .get("category")
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| bad(format!("category: {e}"))))
            .transpose()?;
        let page = positive(&q, "page", 1, usize::MAX)?;
        let per = positive(&q, "per", 50, 1000)?;
        let state = app.state.read().expect("state lock");
        let matching: Vec<&str> = state
            .entries()
            .filter(|e| status.is_none_or(|s| state.status(&e.record.admission_id) == s))
            .filter(|e| category.as_ref().is_none_or(|c| e.summary.has_category_under(c)))
            .map(|e| e.record.admission_id.as_str())
            .collect();
        let records: Vec<RecordSummary> = matching
            .iter()
            .skip((page - 1).saturating_mul(per))
            .take(per)
            .map(|id| summary(&state, id))
            .collect();
        ok(app, json!({ "total": matching.len(), "page": page, "per": per, "records": records }))
    })
    .await
}

async fn record_detail(State(app): State<App>, Path(id): Path<String>) -> Response {
    run(app, |app| {
        let state = app.state.read().expect("state lock");
        let entry = state.entry(&id).ok_or_else(|| ApiError::from(RequestError::NotFound(id.clone())))?;
        let note = &entry.result.note;
        let tags: Vec<Value> = note
            .tags
            .iter()
            .map(|t| {
                let span = note.byte_span(&t.tokens);
                json!({
                    "start": span.start,
                    "end": span.end,
                    "text": note.span_text(&t.tokens),
                    "kind": t.kind,
                    "payload": t.payload,
                })
            })
            .collect();
        let categories: Vec<Value> = entry
            .result
            .categories
            .iter()
            .map(|m| {
                let trigger = note.byte_span(&m.trigger);
                json!({
                    "category": m.category,
                    "rule_id": m.rule_id,
                    "uncertain": m.is_uncertain(),
                    "trigger": { "start": trigger.start, "end": trigger.end, "text": note.span_text(&m.trigger) },
                    "trace": explain(m, note).unwrap_or_else(|e| format!("trace unavailable: {e}")).lines().collect::<Vec<_>>(),
                })
            })
            .collect();
        ok(
            app,
            json!({
                "summary": summary(&state, &id),
                "raw_note": entry.record.note,
                "note": note.text(),
                "tags": tags,
                "categories": categories,
                "decision": state.latest(&id),
                "history": state.history_of(&id),
                "diagnostics": entry.result.diagnostics,
            }),
        )
    })
    .await
}

fn reviewer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(REVIEWER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .ok_or_else(|| bad("missing X-Reviewer-Id header"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    action: Action,
    #[serde(default)]
    categories: Vec<AuditCategory>,
    #[serde(default)]
    comment: Option<String>,
}

async fn post_decision(State(app): State<App>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    run(app, |app| {
        let reviewer = reviewer(&headers)?;
        let body: DecisionBody = serde_json::from_slice(&body).map_err(|e| bad(format!("decision body: {e}")))?;
        let mut state = app.state.write().expect("state lock");
        let decision = ReviewDecision {
            admission_id: id.clone(),
            action: body.action,
            categories: body.categories,
            reviewer,
            timestamp: Utc::now(),
            comment: body.comment,
        };
        let saved = state.decide(decision)?.clone();
        ok(app, json!({ "decision": saved, "summary": summary(&state, &id) }))
    })
    .await
}

async fn list_refinements(State(app): State<App>) -> Response {
    run(app, |app| ok(app, app.state.read().expect("state lock").staged())).await
}

async fn post_refinement(State(app): State<App>, headers: HeaderMap, body: Bytes) -> Response {
    run(app, |app| {
        let reviewer = reviewer(&headers)?;
        let proposal: Proposal = serde_json::from_slice(&body).map_err(|e| bad(format!("refinement body: {e}")))?;
        let mut state = app.state.write().expect("state lock");
        let staged = state.propose(proposal, reviewer)?.clone();
        ok(app, staged)
    })
    .await
}

async fn metrics(State(app): State<App>, Query(q): Query<HashMap<String, String>>) -> Response {
    run(app, |app| {
        let kind: StandardKind = match q.get("standard").map(String::as_str) {
            None | Some("") => StandardKind::A,
            Some(s) => s.parse().map_err(|_| bad(format!("standard must be A, B or C, not {s:?}")))?,
        };
        let state = app.state.read().expect("state lock");
        let m = state
            .metrics(kind)
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        ok(
            app,
            json!({
                "decided": m.decided,
                "report": m.report,
                "precision": m.report.precision_tenths(),
                "recall": m.report.recall_tenths(),
                "f_score": m.report.f_tenths(),
                "table": m.report.render(),
            }),
        )
    })
    .await
}

fn text(body: String, content_type: &'static str) -> ApiResult {
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}

async fn export_decisions(State(app): State<App>) -> Response {
    run(app, |app| {
        let state = app.state.read().expect("state lock");
        let mut out = String::new();
        for d in state.history() {
            out.push_str(&serde_json::to_string(d).expect("decisions serialize"));
            out.push('\n');
        }
        text(out, "application/x-ndjson")
    })
    .await
}

async fn export_refinements(State(app): State<App>, Query(q): Query<HashMap<String, String>>) -> Response {
    run(app, |app| {
        let state = app.state.read().expect("state lock");
        match q.get("format").map(String::as_str) {
            None | Some("lexicon") => text(state.staging().lexicon_export(), "text/plain; charset=utf-8"),
            Some("rules") => text(state.staging().rules_export(), "text/plain; charset=utf-8"),
            Some(other) => Err(bad(format!("format must be lexicon or rules, not {other:?}"))),
        }
    })
    .await
}
