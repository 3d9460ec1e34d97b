use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stylesearch_core::detect::filter_detections;
use stylesearch_core::engine::{Engine, SearchRequest};
use stylesearch_core::{Config, Error, ItemId, RoomId};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

struct AppState {
    engine: Engine,
    reports: PathBuf,
}

type Shared = Arc<AppState>;

#[derive(Debug, Serialize)]
struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            tokens: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::UnknownRoom(_) | Error::UnknownItem(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            Error::AllTokensOov { tokens } => ApiError {
                tokens: Some(tokens),
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "all_tokens_oov", message)
            },
            Error::EmptyQuery => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_query", message),
            Error::InvalidConfig(_)
            | Error::UnknownClass(_)
            | Error::DimensionMismatch { .. }
            | Error::ZeroVector
            | Error::NonFinite(_)
            | Error::MissingRoiFeature { .. }
            | Error::EmptyInput(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message),
            _ => {
                log::error!("{message}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

pub fn router(engine: Engine, reports: PathBuf, media: PathBuf, cors_origins: &[String]) -> Router {
    let state = Arc::new(AppState { engine, reports });
    let cors = if cors_origins.is_empty() {
        CorsLayer::permissive()
    } else {
        let origins = cors_origins.iter().filter_map(|o| o.parse().ok()).collect::<Vec<_>>();
        CorsLayer::permissive().allow_origin(AllowOrigin::list(origins))
    };
    Router::new()
        .route("/health", get(health))
        .route("/rooms", get(rooms))
        .route("/rooms/{id}", get(room))
        .route("/items/{id}", get(item))
        .route("/search", post(search))
        .route("/eval/reports", get(reports_list))
        .nest_service("/media", ServeDir::new(media))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(cors)
        .with_state(state)
}

pub fn serve(root: &Path, config: Config, addr: &str) -> anyhow::Result<()> {
    let engine = Engine::load(root, &config).with_context(|| format!("loading artifacts under {}", root.display()))?;
    let reports = config.resolve(root, &config.paths.reports);
    let media = config.paths.media.clone().map_or_else(|| root.to_path_buf(), |m| config.resolve(root, &m));
    let app = router(engine, reports, media, &config.server.cors_origins);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).with_graceful_shutdown(shutdown()).await?;
        Ok(())
    })
}

async fn shutdown() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}

async fn health(State(s): State<Shared>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "items": s.engine.corpus.items.len(),
        "rooms": s.engine.corpus.rooms.len(),
        "fingerprints": s.engine.fingerprints,
    }))
}

#[derive(Deserialize)]
struct RoomFilter {
    category: Option<String>,
}

#[derive(Serialize)]
struct RoomSummary<'a> {
    id: &'a RoomId,
    category: &'a str,
    image: Option<&'a str>,
    items: usize,
    detections: usize,
}

async fn rooms(State(s): State<Shared>, Query(f): Query<RoomFilter>) -> Json<Value> {
    let list: Vec<RoomSummary> = s
        .engine
        .corpus
        .rooms
        .values()
        .filter(|r| f.category.as_deref().is_none_or(|c| r.category == c))
        .map(|r| RoomSummary {
            id: &r.id,
            category: &r.category,
            image: r.image_ref.as_deref(),
            items: r.ground_truth.len(),
            detections: r.detections.as_ref().map_or(0, Vec::len),
        })
        .collect();
    Json(json!({ "rooms": list }))
}

async fn room(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let id = RoomId::new(id)?;
    let r = s.engine.corpus.room(&id)?;
    let dets = r.detections.clone().unwrap_or_default();
    let kept: BTreeMap<usize, usize> = filter_detections(&dets, &s.engine.filter)
        .iter()
        .enumerate()
        .map(|(order, k)| (k.source_row, order))
        .collect();
    let detections: Vec<Value> = dets
        .iter()
        .enumerate()
        .map(|(row, d)| {
            json!({
                "row": row,
                "class_label": d.class_label,
                "bbox": d.bbox,
                "confidence": d.confidence,
                "kept": kept.contains_key(&row),
            })
        })
        .collect();
    Ok(Json(json!({
        "id": r.id,
        "category": r.category,
        "description": r.description.join(" "),
        "image": r.image_ref,
        "ground_truth": r.ground_truth,
        "detections": detections,
    })))
}

async fn item(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let id = ItemId::new(id)?;
    let i = s.engine.corpus.item(&id)?;
    Ok(Json(json!({
        "id": i.id,
        "class": i.class_label,
        "name": i.name,
        "description": i.description.join(" "),
        "image": i.image_ref,
    })))
}

async fn search(State(s): State<Shared>, body: Bytes) -> Response {
    let req: SearchRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()).into_response(),
    };
    // searches are CPU-bound; keep them off the I/O threads
    let result = tokio::task::spawn_blocking(move || s.engine.handle_search(&req)).await;
    match result {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => ApiError::from(e).into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()).into_response(),
    }
}

async fn reports_list(State(s): State<Shared>) -> ApiResult<Value> {
    let mut out = Vec::new();
    let mut entries = match tokio::fs::read_dir(&s.reports).await {
        Ok(d) => d,
        Err(_) => return Ok(Json(json!({ "reports": out }))),
    };
    let mut paths = Vec::new();
    while let Ok(Some(e)) = entries.next_entry().await {
        let p = e.path();
        if p.extension().is_some_and(|x| x == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    for p in paths {
        let text = tokio::fs::read_to_string(&p)
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        match serde_json::from_str::<Value>(&text) {
            Ok(report) => out.push(json!({
                "name": p.file_name().map(|n| n.to_string_lossy().into_owned()),
                "report": report,
            })),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(Json(json!({ "reports": out })))
}
