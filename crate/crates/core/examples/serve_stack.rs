//! The three servers in one process: embed, model and app. A report is
//! checked over HTTP and then filed as a duplicate of the top candidate.

use std::sync::Arc;

use bugdedup::corpus::filter_invalid;
use bugdedup::features::Featurizer;
use bugdedup::pipeline::{run, PipelineConfig};
use bugdedup::preprocess::CleanConfig;
use bugdedup::serve::{
    app_router, embed_router, model_router, spawn_router, AppService, CheckRequest, CheckResponse, EmbedService,
    HttpEmbedder, HttpPredictor, ModelService, ServeConfig,
};
use bugdedup::synth::{generate, SynthConfig};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = generate(&SynthConfig::default())?;
    let f = Featurizer::default();
    let out = run(&synth.corpus, &synth.vectors, &f, &PipelineConfig::default())?;
    let any = "127.0.0.1:0".parse()?;

    let embed = Arc::new(EmbedService::new(CleanConfig::default(), synth.vectors.clone()));
    let (embed_addr, _) = spawn_router(embed_router(embed), any).await?;
    let model = Arc::new(ModelService::new(out.model, None));
    let (model_addr, _) = spawn_router(model_router(model), any).await?;

    let cfg = ServeConfig::default();
    let app = AppService::new(
        filter_invalid(&synth.corpus),
        f,
        Arc::new(HttpEmbedder::new(format!("http://{embed_addr}"), 10)?),
        Arc::new(HttpPredictor::new(format!("http://{model_addr}"), 10)?),
        &cfg,
    )
    .await?;
    let (app_addr, _) = spawn_router(app_router(Arc::new(app)), any).await?;
    println!("embed {embed_addr}, model {model_addr}, app {app_addr}");

    let http = reqwest::Client::new();
    let base = format!("http://{app_addr}");
    let q = &synth.planted[0].bug;
    let req = CheckRequest {
        headline: q.headline.clone(),
        description: q.description.clone(),
        project: q.project.clone(),
        product: q.product.clone(),
        component: q.component.clone(),
    };
    let resp: CheckResponse = http.post(format!("{base}/api/v1/check")).json(&req).send().await?.json().await?;
    println!("\nchecked {:?} with model {}", req.headline, resp.model_version);
    for c in &resp.candidates {
        println!("  {:.3} {} {}", c.probability, c.bug_id, c.headline);
    }

    let top = &resp.candidates[0].bug_id;
    let decision = json!({"request_id": resp.request_id, "action": "duplicate_of", "target_id": top});
    let stored: Value = http
        .post(format!("{base}/api/v1/decision"))
        .json(&decision)
        .send()
        .await?
        .json()
        .await?;
    println!("\nstored {} as duplicate of {}", stored["id"], stored["duplicate_of"]);

    let bad: Value = http
        .post(format!("{base}/api/v1/check"))
        .json(&json!({"headline": "x"}))
        .send()
        .await?
        .json()
        .await?;
    println!("invalid request: {bad}");
    let health: Value = http.get(format!("{base}/healthz")).send().await?.json().await?;
    println!("health: {health}");
    Ok(())
}
