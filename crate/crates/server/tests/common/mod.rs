#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use distractor_core::corpus::{build_pool, generate_synthetic, Corpus, SynthConfig};
use distractor_core::encoder::EncoderConfig;
use distractor_core::fusion::FusionConfig;
use distractor_core::pipeline::ModelSet;
use distractor_core::retrieval::{build_distractor_index, build_stem_index, init_model, ModelKind, TrainConfig};
use distractor_core::service::{Service, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn tiny_train() -> TrainConfig {
    TrainConfig {
        batch: 8,
        epochs: 1,
        merges: 100,
        encoder: EncoderConfig {
            vocab_size: 0,
            d_model: 16,
            layers: 1,
            heads: 2,
            ffn: 32,
            max_len: 24,
            d_out: 8,
        },
        ..TrainConfig::default()
    }
}

pub fn corpus() -> Corpus {
    generate_synthetic(
        &SynthConfig {
            topics: 3,
            questions_per_topic: 10,
            ..SynthConfig::default()
        },
        3,
    )
    .unwrap()
}

/// D-SIM and Q-SIM at initialization; fusion at alpha 1.
pub fn service(data_dir: Option<&Path>) -> Arc<Service> {
    let corpus = corpus();
    let pool = build_pool(&corpus);
    let d = init_model(ModelKind::Dsim, &corpus, &tiny_train(), 1).unwrap();
    let q = init_model(ModelKind::Qsim, &corpus, &tiny_train(), 2).unwrap();
    let di = build_distractor_index(&d, &pool).unwrap();
    let qi = build_stem_index(&q, &corpus, &pool).unwrap();
    let fusion = FusionConfig {
        alpha: 1.0,
        ..FusionConfig::default()
    };
    let models = ModelSet::new(pool, fusion)
        .unwrap()
        .with_dsim(d, di)
        .unwrap()
        .with_qsim(q, qi)
        .unwrap();
    let cfg = ServiceConfig {
        data_dir: data_dir.map(Path::to_path_buf),
        fusion,
        ..ServiceConfig::default()
    };
    Arc::new(Service::with_parts(cfg, models, Some(corpus.clone()), Some(corpus)).unwrap())
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}
