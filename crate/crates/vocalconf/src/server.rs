//! Annotation HTTP API.
//!
//! Reads come from an in-memory copy of the store. Label writes take one
//! lock, append the line to the JSONL file, then update memory, so the file
//! order is the arrival order and a failed append leaves memory untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::Mutex;
use vocalconf_core::annotation::{build_rater_matrix, AnnotationRecord, RatingValue};

use crate::annotations::{rater_matrix_csv, read_annotations, to_line};
use crate::error::Result;
use crate::manifest::{DatasetManifest, SplitRole};

pub struct AppState {
    /// Labelled clips by id.
    clips: BTreeMap<String, PathBuf>,
    store: PathBuf,
    records: Mutex<Vec<AnnotationRecord>>,
}

impl AppState {
    /// Serves the manifest's labelled clips; existing labels are loaded
    /// from `store`.
    pub fn new(manifest: &DatasetManifest, store: impl Into<PathBuf>) -> Result<Self> {
        let store = store.into();
        let records = read_annotations(&store)?;
        let labelled = manifest.ids(SplitRole::Labelled);
        let clips = manifest.clips.iter().filter(|c| labelled.contains(&c.id)).map(|c| (c.id.clone(), c.audio.clone())).collect();
        Ok(Self { clips, store, records: Mutex::new(records) })
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

/// Latest value per (clip, rater).
fn latest(records: &[AnnotationRecord]) -> BTreeMap<(String, String), RatingValue> {
    let m = build_rater_matrix(records);
    let mut out = BTreeMap::new();
    for (clip, row) in m.clips.iter().zip(&m.cells) {
        for (rater, v) in m.raters.iter().zip(row) {
            if let Some(v) = v {
                out.insert((clip.clone(), rater.clone()), *v);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct ClipStatus {
    id: String,
    /// Raters who have labelled the clip.
    raters: Vec<String>,
}

async fn list_clips(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let records = s.records.lock().await;
    let done = latest(&records);
    let mut by_clip: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (clip, rater) in done.keys() {
        by_clip.entry(clip.as_str()).or_default().push(rater.clone());
    }
    let clips: Vec<ClipStatus> =
        s.clips.keys().map(|id| ClipStatus { id: id.clone(), raters: by_clip.remove(id.as_str()).unwrap_or_default() }).collect();
    Json(serde_json::json!({ "clips": clips }))
}

async fn clip_audio(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(path) = s.clips.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown clip `{id}`"));
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("cannot read audio for `{id}`: {e}")),
    }
}

#[derive(Deserialize)]
struct NextQuery {
    rater: Option<String>,
}

/// The clip with the fewest raters among those `rater` has not labelled,
/// ties broken by id.
async fn next_clip(State(s): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let Some(rater) = q.rater.filter(|r| !r.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing `rater` query parameter");
    };
    let records = s.records.lock().await;
    let done = latest(&records);
    let mut counts: BTreeMap<&str, usize> = s.clips.keys().map(|c| (c.as_str(), 0)).collect();
    let mut mine = BTreeSet::new();
    for (clip, r) in done.keys() {
        if let Some(n) = counts.get_mut(clip.as_str()) {
            *n += 1;
        }
        if *r == rater {
            mine.insert(clip.as_str());
        }
    }
    let open: Vec<(&str, usize)> = counts.into_iter().filter(|(c, _)| !mine.contains(c)).collect();
    let pick = open.iter().min_by_key(|(c, n)| (*n, *c)).map(|(c, _)| c.to_string());
    Json(serde_json::json!({ "clip_id": pick, "remaining": open.len() })).into_response()
}

#[derive(Deserialize)]
struct LabelBody {
    clip_id: String,
    rater_id: String,
    value: String,
}

async fn post_label(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    // serde would also take a positional array; the contract is an object.
    let parsed = serde_json::from_slice::<serde_json::Value>(&body).ok().filter(serde_json::Value::is_object);
    let Some(Ok(body)) = parsed.map(serde_json::from_value::<LabelBody>) else {
        return error(StatusCode::CONFLICT, "body must be a JSON object {clip_id, rater_id, value}");
    };
    let Ok(value) = body.value.parse::<RatingValue>() else {
        return error(StatusCode::BAD_REQUEST, format!("invalid value `{}`; expected low, medium, high or not_clear", body.value));
    };
    if body.rater_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "rater_id must not be empty");
    }
    if !s.clips.contains_key(&body.clip_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown clip `{}`", body.clip_id));
    }
    let mut records = s.records.lock().await;
    let now = chrono::Utc::now().timestamp_micros() as f64 / 1e6;
    // Keep timestamps non-decreasing in arrival order.
    let ts = records.last().map_or(now, |r| now.max(r.timestamp));
    let record = AnnotationRecord { clip_id: body.clip_id, rater_id: body.rater_id, value, timestamp: ts };
    let line = to_line(&record);
    let appended = async {
        let mut f = tokio::fs::OpenOptions::new().create(true).append(true).open(&s.store).await?;
        f.write_all(line.as_bytes()).await?;
        f.sync_data().await
    };
    if let Err(e) = appended.await {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("annotation store: {e}"));
    }
    records.push(record.clone());
    (StatusCode::CREATED, Json(record)).into_response()
}

async fn progress(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let records = s.records.lock().await;
    let mut per_rater: BTreeMap<String, usize> = BTreeMap::new();
    for (_, rater) in latest(&records).into_keys() {
        *per_rater.entry(rater).or_default() += 1;
    }
    Json(serde_json::json!({ "total_clips": s.clips.len(), "raters": per_rater }))
}

async fn export(State(s): State<Arc<AppState>>) -> Response {
    let records = s.records.lock().await;
    let csv = rater_matrix_csv(&build_rater_matrix(records.iter()));
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/clips", get(list_clips))
        .route("/api/clips/{id}/audio", get(clip_audio))
        .route("/api/next", get(next_clip))
        .route("/api/labels", post(post_label))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation API listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
