#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use bugdedup::corpus::{BugReport, Corpus};
use bugdedup::features::{FeatureSchema, Featurizer};
use bugdedup::gbdt::{save_model, train, Dataset, Hyperparams};
use bugdedup::pairs::featurize_pairs;
use bugdedup::pipeline::{run, PipelineConfig, PipelineOutput};
use bugdedup::preprocess::CleanConfig;
use bugdedup::serve::{
    app_router, embed_router, model_router, spawn_router, AppService, CheckRequest, CheckResponse, EmbedService,
    HttpEmbedder, HttpPredictor, ModelService, PredictResponse, ServeConfig,
};
use bugdedup::synth::{generate, SynthConfig, SynthCorpus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;
use serde_json::json;

pub struct Trained {
    pub synth: SynthCorpus,
    pub out: PipelineOutput,
}

/// Default synthetic corpus and the model trained on it, built once per test
/// binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let synth = generate(&SynthConfig::default()).unwrap();
        let out = run(&synth.corpus, &synth.vectors, &Featurizer::default(), &PipelineConfig::default()).unwrap();
        Trained { synth, out }
    })
}

pub fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| {
            let score = r[0] - 0.5 * r[d - 1] + rng.random_range(-1.0..1.0);
            f64::from(u8::from(score > 0.0))
        })
        .collect();
    Dataset::new(FeatureSchema::numbered(d), x, y).unwrap()
}

/// Every (feature, midpoint threshold) pair scored with the gain formula directly.
pub fn brute_force_split(data: &Dataset, hp: &Hyperparams) -> Option<(usize, f64, f64)> {
    let g: Vec<f64> = data.labels().iter().map(|y| 0.5 - y).collect();
    let h = vec![0.25; data.len()];
    let lambda = hp.reg_lambda;
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let (g_all, h_all): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..data.schema().len() {
        let mut vals: Vec<f64> = data.rows().iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (i, r) in data.rows().iter().enumerate() {
                if r[f] < t {
                    gl += g[i];
                    hl += h[i];
                }
            }
            let (gr, hr) = (g_all - gl, h_all - hl);
            if hl < hp.min_child_weight || hr < hp.min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g_all, h_all)) - hp.gamma;
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

/// (input, expected after full masking). Inputs are already lowercase.
pub const MASK_CASES: &[(&str, &str)] = &[
    // IPv4
    ("host 192.168.1.10 down", "host address down"),
    ("10.0.0.1", "address"),
    ("ping 8.8.8.8, then 1.1.1.1.", "ping address, then address."),
    ("gw=172.16.254.1;", "gw=address;"),
    ("(127.0.0.1)", "(address)"),
    ("version 1.2.3 only", "version 1.2.3 only"),
    ("1.2.3.4.5", "1.2.3.4.5"),
    ("v10.0.0.1", "v10.0.0.1"),
    ("from 10.1.1.1:8080", "from address:8080"),
    // MAC
    ("aa:bb:cc:dd:ee:ff flaps", "address flaps"),
    ("mac 00-1a-2b-3c-4d-5e seen", "mac address seen"),
    ("00:1a:2b:3c:4d:5e,00:1a:2b:3c:4d:5f", "address,address"),
    ("aa:bb:cc:dd:ee", "aa:bb:cc:dd:ee"),
    // IPv6
    ("fe80::1 unreachable", "address unreachable"),
    ("::1", "address"),
    ("route ::", "route address"),
    ("2001:db8::8a2e:370:7334 up", "address up"),
    ("2001:0db8:0000:0000:0000:ff00:0042:8329", "address"),
    ("[fe80::1%eth0]", "[address%eth0]"),
    ("::ffff:192.0.2.128 mapped", "address mapped"),
    ("2001:db8::/32 prefix", "address/32 prefix"),
    ("failed at 10:30:45", "failed at 10:30:45"),
    ("ratio a:b", "ratio a:b"),
    ("std::vector crash", "std::vector crash"),
    // Unix paths
    ("crash reading /var/log/syslog", "crash reading filepath"),
    ("see /usr/bin/env", "see filepath"),
    ("cd /opt/app/ now", "cd filepath now"),
    ("ratio 3/4 kept", "ratio 3/4 kept"),
    ("and/or", "and/or"),
    ("/tmp alone", "/tmp alone"),
    ("file /home/me/.config/app.toml missing", "file filepath missing"),
    ("./build/out/app.log", "filepath"),
    ("run ../src/main.rs again", "run filepath again"),
    ("~/docs/notes.txt", "filepath"),
    ("see example.com/a/b", "see example.com/a/b"),
    ("http://host/a/b", "http://host/a/b"),
    ("x.../a/b", "x.../a/b"),
    // Windows paths
    (r"open c:\temp\log.txt", "open filepath"),
    (r"d:\games\steam\ crashed", "filepath crashed"),
    (r"path c:\\users\\bob\\ntuser.dat", "path filepath"),
    (r"drive c:\ only", r"drive c:\ only"),
    // mixed
    ("copy /etc/hosts from 10.0.0.2", "copy filepath from address"),
    (r"10.0.0.1 wrote c:\logs\a.txt", "address wrote filepath"),
];


pub struct Stack {
    pub app: String,
    pub model: String,
    pub embed: String,
    pub model_svc: Arc<ModelService>,
    pub model_path: PathBuf,
    _dir: tempfile::TempDir,
}

pub fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub async fn stack_with(corpus: Corpus, cfg: ServeConfig) -> Stack {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&t.out.model, &model_path).unwrap();

    let embed_svc = Arc::new(EmbedService::new(CleanConfig::default(), t.synth.vectors.clone()));
    let (embed_addr, _) = spawn_router(embed_router(embed_svc), local()).await.unwrap();
    let model_svc = Arc::new(ModelService::new(t.out.model.clone(), Some(model_path.clone())));
    let (model_addr, _) = spawn_router(model_router(model_svc.clone()), local()).await.unwrap();

    let embed = format!("http://{embed_addr}");
    let model = format!("http://{model_addr}");
    let app = AppService::new(
        corpus,
        Featurizer::default(),
        Arc::new(HttpEmbedder::new(&embed, 30).unwrap()),
        Arc::new(HttpPredictor::new(&model, 30).unwrap()),
        &cfg,
    )
    .await
    .unwrap();
    let (app_addr, _) = spawn_router(app_router(Arc::new(app)), local()).await.unwrap();
    Stack {
        app: format!("http://{app_addr}"),
        model,
        embed,
        model_svc,
        model_path,
        _dir: dir,
    }
}

pub async fn stack() -> Stack {
    stack_with(trained().out.corpus.clone(), ServeConfig::default()).await
}

pub fn request_for(bug: &BugReport) -> CheckRequest {
    CheckRequest {
        headline: bug.headline.clone(),
        description: bug.description.clone(),
        project: bug.project.clone(),
        product: bug.product.clone(),
        component: bug.component.clone(),
    }
}

pub async fn post(url: String, body: &impl serde::Serialize) -> reqwest::Response {
    reqwest::Client::new().post(url).json(body).send().await.unwrap()
}

pub async fn check(s: &Stack, req: &CheckRequest) -> CheckResponse {
    let resp = post(format!("{}/api/v1/check", s.app), req).await;
    assert_eq!(resp.status(), StatusCode::OK);
    resp.json().await.unwrap()
}

/// Checks every planted query; returns the ids whose top candidate is not a
/// cluster mate.
pub async fn planted_misses(s: &Stack) -> Vec<String> {
    let mut misses = Vec::new();
    for p in &trained().synth.planted {
        let r = check(s, &request_for(&p.bug)).await;
        assert!(r.candidates.len() <= 10);
        assert!(r.candidates.windows(2).all(|w| w[0].probability >= w[1].probability));
        assert!(r.candidates.iter().all(|c| c.probability > 0.0 && c.probability < 1.0));
        if !r.candidates.first().is_some_and(|top| p.cluster.contains(&top.bug_id)) {
            misses.push(p.bug.id.clone());
        }
    }
    misses
}

/// Alternates reloads between the trained model and a 20-tree one while four
/// clients predict a fixed batch. Panics on any response that does not match one
/// version exactly; returns how many responses each version served.
pub async fn reload_storm(s: &Stack, reloads: usize) -> (usize, usize) {
    let t = trained();
    let featurizer = Featurizer::default();
    let train_set = featurize_pairs(&t.out.split.train, &t.out.corpus, &featurizer, &t.synth.vectors).unwrap();
    let small = train(&train_set, &Hyperparams { n_estimators: 20, ..Default::default() }).unwrap();
    let path_b = s.model_path.with_file_name("small.json");
    save_model(&small, &path_b).unwrap();

    let test = featurize_pairs(&t.out.split.test[..40], &t.out.corpus, &featurizer, &t.synth.vectors).unwrap();
    let rows: Vec<Vec<f64>> = test.rows().to_vec();
    let expect_a: Vec<f64> = rows.iter().map(|r| t.out.model.predict_row(r)).collect();
    let expect_b: Vec<f64> = rows.iter().map(|r| small.predict_row(r)).collect();
    assert_ne!(expect_a, expect_b);
    let (va, vb) = (t.out.model.version.clone(), small.version.clone());

    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let mut workers = Vec::new();
    for _ in 0..4 {
        let (url, rows, stop) = (format!("{}/api/v1/predict", s.model), rows.clone(), stop.clone());
        let (ea, eb, va, vb) = (expect_a.clone(), expect_b.clone(), va.clone(), vb.clone());
        workers.push(tokio::spawn(async move {
            let client = reqwest::Client::new();
            let mut seen = (0, 0);
            while !stop.load(std::sync::atomic::Ordering::Relaxed) {
                let r: PredictResponse = client
                    .post(&url)
                    .json(&json!({ "rows": rows }))
                    .send()
                    .await
                    .unwrap()
                    .json()
                    .await
                    .unwrap();
                let base = r.model_version.split('#').next().unwrap().to_owned();
                if base == va {
                    assert_eq!(r.probs, ea, "mixed response under {}", r.model_version);
                    seen.0 += 1;
                } else {
                    assert_eq!(base, vb);
                    assert_eq!(r.probs, eb, "mixed response under {}", r.model_version);
                    seen.1 += 1;
                }
            }
            seen
        }));
    }
    for i in 0..reloads {
        let path = if i % 2 == 0 { &path_b } else { &s.model_path };
        let resp = post(format!("{}/api/v1/reload", s.model), &json!({ "path": path })).await;
        assert_eq!(resp.status(), StatusCode::OK);
        tokio::time::sleep(std::time::Duration::from_millis(15)).await;
    }
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    let mut total = (0, 0);
    for w in workers {
        let (a, b) = w.await.unwrap();
        total = (total.0 + a, total.1 + b);
    }
    total
}
