//! HTTP API for the reader study, versioned under `/v1`.
//!
//! | method | path                                   | body / query        |
//! |--------|----------------------------------------|---------------------|
//! | POST   | /v1/study                              | `CreateStudy`       |
//! | GET    | /v1/study/{id}/next?reader=R           |                     |
//! | POST   | /v1/study/{id}/vote                    | `Vote`              |
//! | GET    | /v1/study/{id}/results[?partial=true]  |                     |
//! | GET    | /v1/instructions                       |                     |
//!
//! Errors are `{"error": kind, "message": text}` with 400, 404, 409 or 500.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{Study, StudyConfig, StudyError, Vote};
use crate::corruption::prompts::REVIEWER_INSTRUCTIONS;

/// All studies known to one server process.
pub struct StudyService {
    root: Option<PathBuf>,
    studies: RwLock<HashMap<String, Arc<RwLock<Study>>>>,
}

impl StudyService {
    pub fn in_memory() -> Self {
        StudyService {
            root: None,
            studies: RwLock::new(HashMap::new()),
        }
    }

    /// Persists studies under `root`, reopening any found there.
    pub fn open(root: &Path) -> Result<Self, StudyError> {
        std::fs::create_dir_all(root)?;
        let mut studies = HashMap::new();
        for entry in std::fs::read_dir(root)? {
            let dir = entry?.path();
            if dir.join(super::STUDY_FILE).is_file() {
                let s = Study::open(&dir)?;
                studies.insert(s.study_id().to_string(), Arc::new(RwLock::new(s)));
            }
        }
        Ok(StudyService {
            root: Some(root.to_path_buf()),
            studies: RwLock::new(studies),
        })
    }

    pub fn create(&self, config: StudyConfig, seed: u64) -> Result<Arc<RwLock<Study>>, StudyError> {
        let mut studies = self.studies.write().expect("study map lock");
        if studies.contains_key(&config.study_id) {
            return Err(StudyError::StudyExists(config.study_id));
        }
        let id = config.study_id.clone();
        let study = match &self.root {
            Some(root) => {
                config.validate()?;
                Study::create_in(&root.join(&id), config, seed)?
            }
            None => Study::create(config, seed)?,
        };
        let study = Arc::new(RwLock::new(study));
        studies.insert(id, study.clone());
        Ok(study)
    }

    pub fn get(&self, id: &str) -> Result<Arc<RwLock<Study>>, StudyError> {
        self.studies
            .read()
            .expect("study map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StudyError::UnknownStudy(id.to_string()))
    }
}

pub struct ApiError(StudyError);

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use StudyError::*;
        let (status, kind) = match &self.0 {
            InvalidConfig(_) => (StatusCode::BAD_REQUEST, "invalid_config"),
            MissingNote { .. } => (StatusCode::BAD_REQUEST, "missing_note"),
            UnknownStudy(_) => (StatusCode::NOT_FOUND, "unknown_study"),
            UnknownReader(_) => (StatusCode::NOT_FOUND, "unknown_reader"),
            UnknownPair { .. } => (StatusCode::NOT_FOUND, "unknown_pair"),
            NoPending(_) => (StatusCode::NOT_FOUND, "no_pending"),
            StudyExists(_) => (StatusCode::CONFLICT, "study_exists"),
            DuplicateVote { .. } => (StatusCode::CONFLICT, "duplicate_vote"),
            IncompleteStudy { .. } => (StatusCode::CONFLICT, "incomplete_study"),
            Locked(_) => (StatusCode::CONFLICT, "locked"),
            CorruptLog(_) | Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({ "error": kind, "message": self.0.to_string() }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

#[derive(Debug, Deserialize)]
pub struct CreateStudy {
    pub config: StudyConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    reader: String,
}

#[derive(Debug, Deserialize)]
struct ResultsQuery {
    #[serde(default)]
    partial: bool,
}

async fn create_study(State(svc): State<Arc<StudyService>>, Json(req): Json<CreateStudy>) -> ApiResult {
    let study = svc.create(req.config, req.seed)?;
    let s = study.read().expect("study lock");
    let body = json!({
        "study_id": s.study_id(),
        "assignments": s.assignments().len(),
        "readers": s.config.readers.len(),
        "cases": s.config.cases.len(),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn next_pair(
    State(svc): State<Arc<StudyService>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> ApiResult {
    let study = svc.get(&id)?;
    let pair = study.read().expect("study lock").next_pair(&q.reader)?;
    Ok(Json(pair).into_response())
}

async fn submit_vote(State(svc): State<Arc<StudyService>>, UrlPath(id): UrlPath<String>, Json(vote): Json<Vote>) -> ApiResult {
    let study = svc.get(&id)?;
    let ack = study.write().expect("study lock").submit_vote(vote)?;
    Ok(Json(ack).into_response())
}

async fn results(
    State(svc): State<Arc<StudyService>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ResultsQuery>,
) -> ApiResult {
    let study = svc.get(&id)?;
    let rates = study.read().expect("study lock").win_rates(q.partial)?;
    Ok(Json(rates).into_response())
}

async fn instructions() -> Response {
    Json(json!({ "instructions": REVIEWER_INSTRUCTIONS })).into_response()
}

/// The API router. Files under `static_dir` are served at `/` when the
/// directory exists; the API works without it.
pub fn router(service: Arc<StudyService>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/v1/study", post(create_study))
        .route("/v1/study/{id}/next", get(next_pair))
        .route("/v1/study/{id}/vote", post(submit_vote))
        .route("/v1/study/{id}/results", get(results))
        .route("/v1/instructions", get(instructions))
        .with_state(service);
    match static_dir.filter(|d| d.is_dir()) {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, service: Arc<StudyService>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service, static_dir.as_deref())).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use serde_json::Value;
    use tower::ServiceExt;

    async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    #[tokio::test]
    async fn round_trip_over_http() {
        let app = router(Arc::new(StudyService::in_memory()), None);
        let cfg = serde_json::to_value(crate::study::tests::config(1, 3)).unwrap();
        let (st, body) = call(&app, "POST", "/v1/study", Some(json!({ "config": cfg, "seed": 3 }))).await;
        assert_eq!(st, StatusCode::CREATED, "{body}");
        assert_eq!(body["assignments"], 3);
        let (st, _) = call(&app, "POST", "/v1/study", Some(json!({ "config": cfg }))).await;
        assert_eq!(st, StatusCode::CONFLICT);

        let (st, _) = call(&app, "GET", "/v1/study/s1/results", None).await;
        assert_eq!(st, StatusCode::CONFLICT);
        for r in 0..3 {
            let (st, pair) = call(&app, "GET", &format!("/v1/study/s1/next?reader=reader-{r}"), None).await;
            assert_eq!(st, StatusCode::OK);
            let text = pair.to_string();
            assert!(!text.contains("ARM_ALPHA") && !text.contains("ARM_BETA"), "{text}");
            let vote = json!({
                "reader_id": format!("reader-{r}"),
                "case_id": pair["case_id"],
                "pair_id": pair["pair_id"],
                "choice": "tie",
            });
            let (st, ack) = call(&app, "POST", "/v1/study/s1/vote", Some(vote.clone())).await;
            assert_eq!((st, ack["remaining"].as_u64()), (StatusCode::OK, Some(0)));
            let (st, err) = call(&app, "POST", "/v1/study/s1/vote", Some(vote)).await;
            assert_eq!((st, err["error"].as_str()), (StatusCode::CONFLICT, Some("duplicate_vote")));
        }
        let (st, _) = call(&app, "GET", "/v1/study/s1/next?reader=reader-0", None).await;
        assert_eq!(st, StatusCode::NOT_FOUND);
        let (st, rates) = call(&app, "GET", "/v1/study/s1/results", None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(rates["cases"][0]["ties"], 3);
        assert_eq!(rates["no_majority_cases"], 1);
        let (st, _) = call(&app, "GET", "/v1/study/nope/next?reader=reader-0", None).await;
        assert_eq!(st, StatusCode::NOT_FOUND);
        let (st, body) = call(&app, "GET", "/v1/instructions", None).await;
        assert_eq!(st, StatusCode::OK);
        assert!(body["instructions"].as_str().unwrap().contains("Assessment and Plan"));
    }
}
