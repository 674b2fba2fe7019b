mod common;

use std::sync::Arc;

use bugdedup::corpus::{BugReport, Corpus};
use bugdedup::features::{Featurizer, SchemaHash};
use bugdedup::pairs::featurize_pairs;
use bugdedup::preprocess::CleanConfig;
use bugdedup::serve::{
    app_router, embed_router, spawn_router, AppService, CheckRequest, EmbedResponse, EmbedService, HttpPredictor,
    PredictResponse, ServeConfig,
};
use reqwest::StatusCode;
use serde_json::{json, Value};

use common::{check, local, post, request_for, stack, stack_with};

#[tokio::test(flavor = "multi_thread")]
async fn planted_duplicates_rank_a_cluster_mate_first() {
    let s = stack().await;
    assert!(!common::trained().synth.planted.is_empty());
    assert_eq!(common::planted_misses(&s).await, Vec::<String>::new());
}

#[tokio::test(flavor = "multi_thread")]
async fn check_is_read_only() {
    let s = stack().await;
    let req = request_for(&common::trained().synth.planted[0].bug);
    let a = check(&s, &req).await;
    let b = check(&s, &req).await;
    assert_eq!(a.candidates, b.candidates);
    assert_ne!(a.request_id, b.request_id);
    let size: Value = reqwest::get(format!("{}/healthz", s.app)).await.unwrap().json().await.unwrap();
    assert_eq!(size["corpus_size"], common::trained().out.corpus.len());
}

#[tokio::test(flavor = "multi_thread")]
async fn decisions_persist_and_are_seen_by_the_next_check() {
    let s = stack().await;
    let planted = &common::trained().synth.planted[1];
    let req = request_for(&planted.bug);
    let first = check(&s, &req).await;
    let target = first.candidates[0].bug_id.clone();

    let resp = post(
        format!("{}/api/v1/decision", s.app),
        &json!({"request_id": first.request_id, "action": "duplicate_of", "target_id": target}),
    )
    .await;
    assert_eq!(resp.status(), StatusCode::OK);
    let stored: BugReport = resp.json().await.unwrap();
    assert_eq!(stored.status.to_string(), "duplicate");
    assert_eq!(stored.duplicate_of.as_deref(), Some(target.as_str()));

    let fetched: BugReport = reqwest::get(format!("{}/api/v1/bugs/{}", s.app, stored.id))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(fetched, stored);

    let second = check(&s, &req).await;
    assert_eq!(second.candidates[0].bug_id, stored.id);
    assert!(second.candidates[0].probability > 0.9, "{}", second.candidates[0].probability);

    // the request was consumed
    let again = post(
        format!("{}/api/v1/decision", s.app),
        &json!({"request_id": first.request_id, "action": "create_new"}),
    )
    .await;
    assert_eq!(again.status(), StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn create_new_then_same_text_is_top_candidate() {
    let s = stack().await;
    let req = CheckRequest {
        headline: "Spam filter rejects every message with an attachment".into(),
        description: "Since this morning the spam filter moves all mail with attachments to junk.".into(),
        project: "synthetic".into(),
        product: "Mail".into(),
        component: "Sync".into(),
    };
    let first = check(&s, &req).await;
    let resp = post(
        format!("{}/api/v1/decision", s.app),
        &json!({"request_id": first.request_id, "action": "create_new"}),
    )
    .await;
    assert_eq!(resp.status(), StatusCode::OK);
    let stored: BugReport = resp.json().await.unwrap();
    assert_eq!(stored.status.to_string(), "new");
    assert_eq!(stored.duplicate_of, None);

    let second = check(&s, &req).await;
    assert_eq!(second.candidates[0].bug_id, stored.id);
    assert!(second.candidates[0].probability > 0.9);
}

#[tokio::test(flavor = "multi_thread")]
async fn decision_errors() {
    let s = stack().await;
    let url = format!("{}/api/v1/decision", s.app);
    let unknown = post(url.clone(), &json!({"request_id": "nope", "action": "create_new"})).await;
    assert_eq!(unknown.status(), StatusCode::NOT_FOUND);

    let r = check(&s, &request_for(&common::trained().synth.planted[2].bug)).await;
    let no_target = post(url.clone(), &json!({"request_id": r.request_id, "action": "duplicate_of"})).await;
    assert_eq!(no_target.status(), StatusCode::BAD_REQUEST);
    let missing = post(
        url.clone(),
        &json!({"request_id": r.request_id, "action": "duplicate_of", "target_id": "NO-SUCH-BUG"}),
    )
    .await;
    assert_eq!(missing.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = missing.json().await.unwrap();
    assert!(body["error"]["message"].as_str().unwrap().contains("NO-SUCH-BUG"));
    // a rejected target does not consume the request
    let ok = post(url, &json!({"request_id": r.request_id, "action": "create_new"})).await;
    assert_eq!(ok.status(), StatusCode::OK);

    let absent = reqwest::get(format!("{}/api/v1/bugs/NO-SUCH-BUG", s.app)).await.unwrap();
    assert_eq!(absent.status(), StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn check_validation_names_fields() {
    let s = stack().await;
    let url = format!("{}/api/v1/check", s.app);
    let resp = post(url.clone(), &json!({"headline": "x crashes", "component": "Sync"})).await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["fields"], json!(["product"]));

    let resp = post(url.clone(), &json!({"product": "Mail", "component": "Sync"})).await;
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["fields"], json!(["headline", "description"]));

    let resp = reqwest::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_corpus_gives_no_candidates() {
    let s = stack_with(Corpus::default(), ServeConfig::default()).await;
    let r = check(&s, &request_for(&common::trained().synth.planted[0].bug)).await;
    assert!(r.candidates.is_empty());
    assert!(!r.model_version.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn top_k_is_configurable() {
    let cfg = ServeConfig {
        top_k: 3,
        ..Default::default()
    };
    let s = stack_with(common::trained().out.corpus.clone(), cfg).await;
    let r = check(&s, &request_for(&common::trained().synth.planted[0].bug)).await;
    assert_eq!(r.candidates.len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn downstream_failure_is_503_with_retry_after() {
    // a port that was bound and released, so nothing listens there
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let t = common::trained();
    let embed_svc = Arc::new(EmbedService::new(CleanConfig::default(), t.synth.vectors.clone()));
    let cfg = ServeConfig::default();
    let app = AppService::new(
        t.out.corpus.clone(),
        Featurizer::default(),
        embed_svc,
        Arc::new(HttpPredictor::new(&dead, 5).unwrap()),
        &cfg,
    )
    .await
    .unwrap();
    let (addr, _) = spawn_router(app_router(Arc::new(app)), local()).await.unwrap();
    let resp = post(format!("http://{addr}/api/v1/check"), &request_for(&t.synth.planted[0].bug)).await;
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(resp.headers()["retry-after"], "5");
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["kind"], "downstream");
}

#[tokio::test(flavor = "multi_thread")]
async fn model_server_contract() {
    let s = stack().await;
    let url = format!("{}/api/v1/predict", s.model);
    let hash = Featurizer::default().schema_hash();

    let empty: PredictResponse = post(url.clone(), &json!({"rows": []})).await.json().await.unwrap();
    assert!(empty.probs.is_empty());

    let t = common::trained();
    let test = featurize_pairs(&t.out.split.test[..5], &t.out.corpus, &Featurizer::default(), &t.synth.vectors).unwrap();
    let mut batch: Vec<Vec<f64>> = test.rows().to_vec();
    batch.push(batch[0].clone());
    let r: PredictResponse = post(url.clone(), &json!({"rows": batch, "schema_hash": hash}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(r.probs.len(), 6);
    for (row, p) in batch.iter().zip(&r.probs) {
        assert_eq!(t.out.model.predict_row(row), *p);
    }
    assert_eq!(r.probs[0], r.probs[5]);

    let other = SchemaHash::from_hex(&"ab".repeat(32)).unwrap();
    let resp = post(url.clone(), &json!({"rows": [batch[0]], "schema_hash": other})).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["expected"], hash.to_hex());
    assert_eq!(body["error"]["found"], other.to_hex());

    let resp = post(url, &json!({"rows": [[1.0, 2.0]]})).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn reload_swaps_version_and_rejects_bad_files() {
    let s = stack().await;
    let url = format!("{}/api/v1/reload", s.model);
    let before = s.model_svc.version();
    let row = vec![common::trained().out.split.test.len() as f64; 28];
    let p_before = s.model_svc.predict_rows(&[row.clone()], None).unwrap().probs;

    let resp = reqwest::Client::new().post(url.clone()).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let r: Value = resp.json().await.unwrap();
    assert_eq!(r["previous_version"], before);
    assert_ne!(r["model_version"], before);
    assert_eq!(s.model_svc.predict_rows(&[row.clone()], None).unwrap().probs, p_before);

    let current = s.model_svc.version();
    let bad = s.model_path.with_file_name("corrupt.json");
    std::fs::write(&bad, "{\"version\": 3").unwrap();
    let resp = post(url.clone(), &json!({"path": bad})).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(s.model_svc.version(), current);
    let resp = post(url, &json!({"path": s.model_path.with_file_name("missing.json")})).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(s.model_svc.version(), current);
    let health: Value = reqwest::get(format!("{}/healthz", s.model)).await.unwrap().json().await.unwrap();
    assert_eq!(health["model_version"], current);
}

#[tokio::test(flavor = "multi_thread")]
async fn reload_under_load_never_mixes_versions() {
    let s = stack().await;
    let total = common::reload_storm(&s, 30).await;
    assert!(total.0 > 0 && total.1 > 0, "{total:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn embed_server_contract() {
    let s = stack().await;
    let url = format!("{}/api/v1/embed", s.embed);
    let r: EmbedResponse = post(url.clone(), &json!({"texts": [""]})).await.json().await.unwrap();
    assert_eq!(r.hits, [0]);
    assert_eq!(r.vectors[0].len(), 300);
    assert!(r.vectors[0].iter().all(|&v| v == 0.0));

    let texts = ["the proxy settings crash", "dark theme shows a blank screen", "the proxy settings crash"];
    let r: EmbedResponse = post(url.clone(), &json!({ "texts": texts })).await.json().await.unwrap();
    assert_eq!(r.vectors[0], r.vectors[2]);
    assert_ne!(r.vectors[0], r.vectors[1]);
    let rev: EmbedResponse = post(url, &json!({"texts": [texts[1], texts[0]]})).await.json().await.unwrap();
    assert_eq!(rev.vectors[0], r.vectors[1]);
    assert_eq!(rev.vectors[1], r.vectors[0]);
    assert!(r.hits[0] > 0);

    let unloaded = Arc::new(EmbedService::unloaded(CleanConfig::default()));
    let (addr, _) = spawn_router(embed_router(unloaded), local()).await.unwrap();
    let resp = post(format!("http://{addr}/api/v1/embed"), &json!({"texts": ["a"]})).await;
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert!(resp.headers().contains_key("retry-after"));
}

#[tokio::test(flavor = "multi_thread")]
async fn every_server_reports_health() {
    let s = stack().await;
    for (url, component) in [(&s.app, "app"), (&s.model, "model"), (&s.embed, "embedding")] {
        let h: Value = reqwest::get(format!("{url}/healthz")).await.unwrap().json().await.unwrap();
        assert_eq!(h["status"], "ok");
        assert_eq!(h["component"], component);
        assert_eq!(h["version"], env!("CARGO_PKG_VERSION"));
    }
}
