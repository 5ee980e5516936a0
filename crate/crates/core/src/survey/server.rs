//! Survey REST service consumed by the browser survey.
//!
//! Routes:
//! - `GET  /api/survey?rater_id=` rater's blinded task list
//! - `GET  /api/image/{hash}` stored PNG
//! - `POST /api/ratings` `{rater_id, product_id, method_slot, rating}` → 201
//! - `GET  /api/progress?rater_id=` slots this rater has already rated
//! - `GET  /api/report` aggregated report

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use super::aggregate::survey_report;
use super::manifest::SurveyManifest;
use super::store::RatingStore;
use super::{Rating, SurveyError};
use crate::imagegen::{ImageStore, StoreError};

pub struct SurveyState {
    pub manifest: SurveyManifest,
    pub ratings: RatingStore,
    pub images: ImageStore,
}

type Shared = Arc<SurveyState>;

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<SurveyError> for ApiError {
    fn from(e: SurveyError) -> Self {
        let status = match e {
            SurveyError::UnknownProduct(_) | SurveyError::UnknownMethod { .. } => StatusCode::NOT_FOUND,
            SurveyError::Ledger(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

#[derive(Debug, Deserialize)]
struct RaterQuery {
    rater_id: Option<String>,
}

fn rater(q: RaterQuery) -> Result<String, ApiError> {
    q.rater_id
        .map(|r| r.trim().to_string())
        .filter(|r| !r.is_empty())
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "rater_id query parameter is required".into()))
}

async fn survey(State(s): State<Shared>, Query(q): Query<RaterQuery>) -> Result<Response, ApiError> {
    Ok(Json(s.manifest.rater_view(&rater(q)?)).into_response())
}

async fn image(State(s): State<Shared>, Path(hash): Path<String>) -> Result<Response, ApiError> {
    match s.images.load(&hash) {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
        Err(StoreError::BadHash(_)) => Err(ApiError(StatusCode::BAD_REQUEST, format!("bad image hash {hash}"))),
        Err(StoreError::Missing(_)) => Err(ApiError(StatusCode::NOT_FOUND, format!("no image {hash}"))),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

#[derive(Debug, Deserialize)]
struct RatingSubmission {
    rater_id: String,
    product_id: String,
    method_slot: u8,
    rating: String,
}

#[derive(Debug, Serialize)]
struct SubmissionAck {
    submissions: usize,
}

async fn submit(State(s): State<Shared>, Json(body): Json<RatingSubmission>) -> Result<Response, ApiError> {
    let rating: Rating = body.rating.parse()?;
    let submissions = s
        .ratings
        .record_slot(&s.manifest, body.rater_id.trim(), &body.product_id, body.method_slot, rating)?;
    Ok((StatusCode::CREATED, Json(SubmissionAck { submissions })).into_response())
}

#[derive(Debug, Serialize)]
struct RatedSlot {
    product_id: String,
    method_slot: u8,
    rating: Rating,
}

#[derive(Debug, Serialize)]
struct Progress {
    rater_id: String,
    total_slots: usize,
    rated: Vec<RatedSlot>,
}

async fn progress(State(s): State<Shared>, Query(q): Query<RaterQuery>) -> Result<Response, ApiError> {
    let rater_id = rater(q)?;
    let rated = s
        .ratings
        .effective()?
        .into_iter()
        .filter(|r| r.rater_id == rater_id && s.manifest.task(&r.product_id).is_some())
        .map(|r| RatedSlot {
            method_slot: s.manifest.slot_of(&rater_id, &r.product_id, r.method),
            product_id: r.product_id,
            rating: r.rating,
        })
        .collect();
    Ok(Json(Progress {
        total_slots: s.manifest.image_count(),
        rater_id,
        rated,
    })
    .into_response())
}

async fn report(State(s): State<Shared>) -> Result<Response, ApiError> {
    let all = s.ratings.all()?;
    Ok(Json(survey_report(&all, Some(&s.manifest))).into_response())
}

pub fn router(state: Arc<SurveyState>) -> Router {
    Router::new()
        .route("/api/survey", get(survey))
        .route("/api/image/{hash}", get(image))
        .route("/api/ratings", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/report", get(report))
        .with_state(state)
}

/// Serves until the process exits.
pub fn serve_forever(state: SurveyState, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> io::Result<()> {
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        on_bound(listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state))).await
    })
}

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
}

/// A server on a background thread, shut down on drop.
pub struct SurveyServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl SurveyServer {
    pub fn start(state: SurveyState, addr: SocketAddr) -> io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime()?.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                axum::serve(listener, router(Arc::new(state)))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for SurveyServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
