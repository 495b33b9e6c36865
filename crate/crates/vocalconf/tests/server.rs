use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;
use vocalconf::annotations::read_annotations;
use vocalconf::manifest::{ClipEntry, DatasetManifest, SplitRole};
use vocalconf::server::{router, AppState};

struct Fixture {
    dir: tempfile::TempDir,
    app: axum::Router,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let clip = |id: &str, role| ClipEntry { id: id.into(), audio: dir.path().join(format!("{id}.wav")), split_role: role };
    let manifest = DatasetManifest {
        clips: vec![clip("a", SplitRole::Labelled), clip("b", SplitRole::Labelled), clip("c", SplitRole::Labelled), clip("u", SplitRole::Pool)],
        feature_store: "f.csv".into(),
        embedding_store: "e.emb".into(),
        annotations: dir.path().join("labels.jsonl"),
        fold_plan: "p.json".into(),
        labels: None,
        aux_probs: None,
    };
    std::fs::write(dir.path().join("a.wav"), b"RIFFfake").unwrap();
    let state = AppState::new(&manifest, &manifest.annotations).unwrap();
    Fixture { app: router(Arc::new(state)), dir }
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &axum::Router, body: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::post("/api/labels").header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()).await
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn posted_label_appears_in_export() {
    let f = fixture();
    let (status, body) = post(&f.app, r#"{"clip_id":"b","rater_id":"r1","value":"high"}"#).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(json(&body)["value"], "high");
    let (status, csv) = get(&f.app, "/api/export").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap(), "clip_id,r1\nb,2\n");
    let stored = read_annotations(f.dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(stored.len(), 1);
    assert_eq!(stored[0].clip_id, "b");
}

#[tokio::test]
async fn later_label_wins() {
    let f = fixture();
    post(&f.app, r#"{"clip_id":"a","rater_id":"r1","value":"low"}"#).await;
    post(&f.app, r#"{"clip_id":"a","rater_id":"r1","value":"not_clear"}"#).await;
    let (_, csv) = get(&f.app, "/api/export").await;
    assert_eq!(String::from_utf8(csv).unwrap(), "clip_id,r1\na,NC\n");
    assert_eq!(read_annotations(f.dir.path().join("labels.jsonl")).unwrap().len(), 2);
}

#[tokio::test]
async fn invalid_value_is_400() {
    let f = fixture();
    let (status, body) = post(&f.app, r#"{"clip_id":"a","rater_id":"r1","value":"very_high"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json(&body)["error"].as_str().unwrap().contains("very_high"));
    let (status, _) = post(&f.app, r#"{"clip_id":"a","rater_id":" ","value":"low"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(read_annotations(f.dir.path().join("labels.jsonl")).unwrap().is_empty());
}

#[tokio::test]
async fn malformed_body_is_409() {
    let f = fixture();
    for body in ["{not json", r#"{"clip_id":"a","value":"low"}"#, r#"["a","r1","low"]"#, ""] {
        let (status, _) = post(&f.app, body).await;
        assert_eq!(status, StatusCode::CONFLICT, "body {body:?}");
    }
}

#[tokio::test]
async fn unknown_clip_is_404() {
    let f = fixture();
    let (status, _) = post(&f.app, r#"{"clip_id":"zzz","rater_id":"r1","value":"low"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    // Pool clips are not served for labelling.
    let (status, _) = post(&f.app, r#"{"clip_id":"u","rater_id":"r1","value":"low"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/clips/zzz/audio").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn audio_is_served_as_wav() {
    let f = fixture();
    let res = f.app.clone().oneshot(Request::get("/api/clips/a/audio").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()["content-type"], "audio/wav");
    assert_eq!(res.into_body().collect().await.unwrap().to_bytes().as_ref(), b"RIFFfake");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_for_different_raters_are_all_recorded() {
    let f = fixture();
    let mut tasks = Vec::new();
    for i in 0..16 {
        let app = f.app.clone();
        tasks.push(tokio::spawn(async move {
            let body = format!(r#"{{"clip_id":"a","rater_id":"r{i:02}","value":"medium"}}"#);
            post(&app, &body).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let stored = read_annotations(f.dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(stored.len(), 16);
    assert!(stored.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    let (_, csv) = get(&f.app, "/api/export").await;
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 17);
    assert_eq!(csv.lines().nth(1).unwrap(), format!("a{}", ",1".repeat(16)));
}

#[tokio::test]
async fn next_picks_the_least_annotated_unrated_clip() {
    let f = fixture();
    assert_eq!(get(&f.app, "/api/next").await.0, StatusCode::BAD_REQUEST);
    let (_, body) = get(&f.app, "/api/next?rater=r1").await;
    assert_eq!(json(&body), serde_json::json!({"clip_id": "a", "remaining": 3}));

    post(&f.app, r#"{"clip_id":"a","rater_id":"r2","value":"low"}"#).await;
    post(&f.app, r#"{"clip_id":"b","rater_id":"r2","value":"low"}"#).await;
    post(&f.app, r#"{"clip_id":"b","rater_id":"r3","value":"low"}"#).await;
    // a has one rater, b two, c none.
    let (_, body) = get(&f.app, "/api/next?rater=r1").await;
    assert_eq!(json(&body)["clip_id"], "c");
    // r2 has done a and b.
    let (_, body) = get(&f.app, "/api/next?rater=r2").await;
    assert_eq!(json(&body), serde_json::json!({"clip_id": "c", "remaining": 1}));
    post(&f.app, r#"{"clip_id":"c","rater_id":"r2","value":"high"}"#).await;
    let (_, body) = get(&f.app, "/api/next?rater=r2").await;
    assert_eq!(json(&body), serde_json::json!({"clip_id": null, "remaining": 0}));
}

#[tokio::test]
async fn clips_and_progress_report_completion() {
    let f = fixture();
    post(&f.app, r#"{"clip_id":"a","rater_id":"r1","value":"low"}"#).await;
    post(&f.app, r#"{"clip_id":"a","rater_id":"r1","value":"high"}"#).await;
    post(&f.app, r#"{"clip_id":"c","rater_id":"r1","value":"low"}"#).await;
    post(&f.app, r#"{"clip_id":"c","rater_id":"r2","value":"low"}"#).await;
    let (_, body) = get(&f.app, "/api/clips").await;
    assert_eq!(
        json(&body),
        serde_json::json!({"clips": [
            {"id": "a", "raters": ["r1"]},
            {"id": "b", "raters": []},
            {"id": "c", "raters": ["r1", "r2"]},
        ]})
    );
    let (_, body) = get(&f.app, "/api/progress").await;
    assert_eq!(json(&body), serde_json::json!({"total_clips": 3, "raters": {"r1": 2, "r2": 1}}));
}

#[tokio::test]
async fn existing_store_is_loaded_on_start() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl");
    std::fs::write(&store, "{\"clip_id\":\"a\",\"rater_id\":\"r9\",\"value\":\"medium\",\"ts\":5.0}\n").unwrap();
    let manifest = DatasetManifest {
        clips: vec![ClipEntry { id: "a".into(), audio: "a.wav".into(), split_role: SplitRole::Labelled }],
        feature_store: "f".into(),
        embedding_store: "e".into(),
        annotations: store.clone(),
        fold_plan: "p".into(),
        labels: None,
        aux_probs: None,
    };
    let app = router(Arc::new(AppState::new(&manifest, &store).unwrap()));
    let (_, csv) = get(&app, "/api/export").await;
    assert_eq!(String::from_utf8(csv).unwrap(), "clip_id,r9\na,1\n");
}
