//! JSON HTTP API over the engine. Window tags and drive ids travel as single
//! percent-encoded path segments (`D1%2F2024-03-01..2024-03-30`). Engine calls touch the
//! filesystem and run on the blocking pool.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ssdkg_core::graph::Literal;
use ssdkg_core::literature::ExtractionBatch;

use crate::engine::{AnalyzeRequest, Engine, MitigationRequest};
use crate::error::{AppError, Result};

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status_code()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self.to_string(), "status": status.as_u16() }))).into_response()
    }
}

async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Engine) -> Result<T> + Send + 'static,
{
    let engine = engine.clone();
    match tokio::task::spawn_blocking(move || f(&engine)).await {
        Ok(Ok(v)) => Json(v).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string(), "status": 500 })))
            .into_response(),
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ingest/telemetry", post(ingest))
        .route("/litkg/claims", post(litkg_claims))
        .route("/drives/{id}/windows", get(drive_windows))
        .route("/windows/{tag}/frames", get(window_frames))
        .route("/windows/{tag}/graph", get(window_graph))
        .route("/windows/{tag}/mitigations", post(mitigations))
        .route("/analyze", post(analyze))
        .route("/audit/{key}", get(audit))
        .route("/audit/{key}/{seq}/replay", get(replay))
        .route("/followups", get(followups))
        .route("/followups/run", post(run_followups))
        .with_state(engine)
}

async fn health(State(engine): State<Arc<Engine>>) -> Json<Value> {
    Json(json!({ "status": "ok", "backend": engine.backend_id(), "variant": engine.config().ablation.variant() }))
}

#[derive(Deserialize)]
struct CsvBody {
    csv: String,
}

/// Accepts raw CSV or `{"csv": "..."}`; ingests, emits frames and materializes.
async fn ingest(State(engine): State<Arc<Engine>>, body: String) -> Response {
    let csv = if body.trim_start().starts_with('{') {
        match serde_json::from_str::<CsvBody>(&body) {
            Ok(b) => b.csv,
            Err(e) => return AppError::BadRequest(format!("expected {{\"csv\": ...}}: {e}")).into_response(),
        }
    } else {
        body
    };
    blocking(&engine, move |e| e.ingest_and_process(&csv)).await
}

/// Body: one extraction batch, or `{"collection": "...", "batches": [...]}`.
async fn litkg_claims(State(engine): State<Arc<Engine>>, Json(body): Json<Value>) -> Response {
    let collection = body.get("collection").and_then(Value::as_str).unwrap_or("api").to_string();
    let raw: Vec<Value> = match body.get("batches") {
        Some(Value::Array(items)) => items.clone(),
        Some(_) => return AppError::BadRequest("`batches` must be an array".into()).into_response(),
        None => vec![body],
    };
    let mut batches = Vec::with_capacity(raw.len());
    for v in raw {
        match ExtractionBatch::from_value(v) {
            Ok(b) => batches.push(b),
            Err(e) => return AppError::from(e).into_response(),
        }
    }
    blocking(&engine, move |e| e.build_literature(&batches, &collection)).await
}

async fn drive_windows(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> Response {
    blocking(&engine, move |e| e.drive_windows(&id)).await
}

async fn window_frames(State(engine): State<Arc<Engine>>, Path(tag): Path<String>) -> Response {
    blocking(&engine, move |e| e.frames(&tag)).await
}

#[derive(Serialize)]
struct GraphNode {
    id: String,
    class: Option<String>,
    properties: BTreeMap<String, Vec<Literal>>,
}

#[derive(Serialize)]
struct GraphEdge {
    subject: String,
    relation: String,
    object: String,
}

#[derive(Serialize)]
struct GraphView {
    tag: String,
    coverage: f64,
    weight: f64,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    turtle: String,
}

async fn window_graph(State(engine): State<Arc<Engine>>, Path(tag): Path<String>) -> Response {
    blocking(&engine, move |e| {
        let sg = e.subgraph(&tag)?;
        let turtle = e.subgraph_turtle(&tag)?;
        Ok(GraphView {
            tag: sg.tag.to_string(),
            coverage: sg.coverage,
            weight: sg.weight,
            nodes: sg
                .graph
                .nodes()
                .map(|(id, n)| GraphNode {
                    id: id.to_string(),
                    class: n.class.as_ref().map(|c| c.to_string()),
                    properties: n
                        .properties
                        .iter()
                        .map(|(k, v)| (k.to_string(), v.iter().cloned().collect()))
                        .collect(),
                })
                .collect(),
            edges: sg
                .graph
                .edges()
                .map(|t| GraphEdge {
                    subject: t.subject.to_string(),
                    relation: t.relation.to_string(),
                    object: t.object.to_string(),
                })
                .collect(),
            turtle,
        })
    })
    .await
}

async fn mitigations(
    State(engine): State<Arc<Engine>>,
    Path(tag): Path<String>,
    Json(req): Json<MitigationRequest>,
) -> Response {
    blocking(&engine, move |e| e.accept_mitigation(&tag, req)).await
}

async fn analyze(State(engine): State<Arc<Engine>>, Json(req): Json<AnalyzeRequest>) -> Response {
    blocking(&engine, move |e| e.analyze(req)).await
}

async fn audit(State(engine): State<Arc<Engine>>, Path(key): Path<String>) -> Response {
    blocking(&engine, move |e| {
        let records = e.audit_records(&key)?;
        if records.is_empty() {
            return Err(AppError::NotFound(format!("audit records for {key}")));
        }
        Ok(records)
    })
    .await
}

async fn replay(State(engine): State<Arc<Engine>>, Path((key, seq)): Path<(String, u64)>) -> Response {
    blocking(&engine, move |e| e.replay(&key, seq)).await
}

async fn followups(State(engine): State<Arc<Engine>>) -> Response {
    blocking(&engine, |e| e.followups()).await
}

#[derive(Deserialize, Default)]
struct RunBody {
    #[serde(default)]
    today: Option<NaiveDate>,
}

/// Runs due follow-ups as of `today` (default: the current UTC date).
async fn run_followups(State(engine): State<Arc<Engine>>, body: Option<Json<RunBody>>) -> Response {
    let today = body.and_then(|Json(b)| b.today).unwrap_or_else(|| Utc::now().date_naive());
    blocking(&engine, move |e| e.run_due(today)).await
}

/// Single background worker running due follow-ups every `interval`.
fn spawn_followup_worker(engine: Arc<Engine>, interval: std::time::Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            tick.tick().await;
            let e = engine.clone();
            match tokio::task::spawn_blocking(move || e.run_due(Utc::now().date_naive())).await {
                Ok(Ok(ran)) if !ran.is_empty() => log::info!("follow-up worker ran {} task(s)", ran.len()),
                Ok(Ok(_)) => {}
                Ok(Err(err)) => log::warn!("follow-up worker: {err}"),
                Err(err) => log::warn!("follow-up worker panicked: {err}"),
            }
        }
    })
}

/// Serves until Ctrl-C, with the follow-up worker running alongside.
pub async fn serve(engine: Arc<Engine>) -> std::io::Result<()> {
    let addr = engine.config().listen;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let secs = engine.config().followup_interval_secs;
    let worker = (secs > 0).then(|| spawn_followup_worker(engine.clone(), std::time::Duration::from_secs(secs)));
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(w) = worker {
        w.abort();
    }
    Ok(())
}
