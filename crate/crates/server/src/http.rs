//! JSON API over a [`Service`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use distractor_core::service::{
    AgreementQuery, AgreementReport, QueueItem, RatingAck, RatingSubmission, RunReport, Service, SuggestionRequest,
    SuggestionResponse,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

type AppResult<T> = Result<Json<T>, AppError>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/suggest", post(suggest))
        .route("/api/ratings", post(ratings))
        .route("/api/items", get(items))
        .route("/api/reports/agreement", get(agreement))
        .route("/api/reports/run", get(run_report))
        .with_state(service)
}

/// Serves until ctrl-c.
pub async fn serve(service: Arc<Service>) -> std::io::Result<()> {
    let addr = format!("{}:{}", service.config().host, service.config().port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, AppError> {
    serde_json::from_slice(body).map_err(|e| AppError::BadRequest(format!("invalid JSON body: {e}")))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, AppError> {
    q.map(|Query(v)| v).map_err(|e| AppError::BadRequest(e.body_text()))
}

async fn blocking<T, F>(f: F) -> Result<T, AppError>
where
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::BadRequest(format!("request aborted: {e}")))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub fingerprint: String,
    pub models: Vec<String>,
    pub pool_size: usize,
}

async fn health(State(svc): State<Arc<Service>>) -> Json<Health> {
    let m = svc.models();
    Json(Health {
        fingerprint: m.fingerprint().to_string(),
        models: m.available().iter().map(|k| k.to_string()).collect(),
        pool_size: m.pool().len(),
    })
}

async fn suggest(State(svc): State<Arc<Service>>, body: Bytes) -> AppResult<SuggestionResponse> {
    let req: SuggestionRequest = parse_body(&body)?;
    blocking(move || Ok(svc.suggest(&req)?)).await.map(Json)
}

/// One submission or a page of them.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Ratings {
    Many(Vec<RatingSubmission>),
    One(RatingSubmission),
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Acks {
    Many(Vec<RatingAck>),
    One(RatingAck),
}

async fn ratings(State(svc): State<Arc<Service>>, body: Bytes) -> AppResult<Acks> {
    match parse_body(&body)? {
        Ratings::One(sub) => Ok(Json(Acks::One(svc.record_rating(&sub)?))),
        Ratings::Many(subs) => Ok(Json(Acks::Many(svc.record_ratings(&subs)?))),
    }
}

#[derive(Debug, Deserialize)]
struct SubjectQuery {
    subject: Option<String>,
}

async fn items(State(svc): State<Arc<Service>>, q: Result<Query<SubjectQuery>, QueryRejection>) -> AppResult<Vec<QueueItem>> {
    let q = query(q)?;
    Ok(Json(svc.items(q.subject.as_deref().filter(|s| !s.is_empty()))?))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AgreementParams {
    rater_a: String,
    rater_b: String,
    subject: Option<String>,
    k: Option<usize>,
}

async fn agreement(
    State(svc): State<Arc<Service>>,
    q: Result<Query<AgreementParams>, QueryRejection>,
) -> AppResult<AgreementReport> {
    let p = query(q)?;
    let q = AgreementQuery {
        rater_a: p.rater_a,
        rater_b: p.rater_b,
        subject: p.subject.filter(|s| !s.is_empty()),
        k: p.k.unwrap_or(10),
    };
    Ok(Json(svc.agreement_report(&q)?))
}

#[derive(Debug, Deserialize)]
struct RunParams {
    file: String,
}

async fn run_report(State(svc): State<Arc<Service>>, q: Result<Query<RunParams>, QueryRejection>) -> AppResult<RunReport> {
    let p = query(q)?;
    blocking(move || Ok(svc.run_report(&p.file)?)).await.map(Json)
}
