//! HTTP adapter over [`Workspace`]. Handlers only decode requests, call one
//! workspace method on a blocking thread and encode the result.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vulnesis_core::geo::{BuildingFilter, Granularity, Metric};
use vulnesis_core::ingest::FieldRecord;
use vulnesis_core::typology::SampleSpec;
use vulnesis_core::{Error, ErrorClass, LayerKind, ProjectState, SCHEMA_VERSION};

use crate::service::{KeyList, NewProject, NewScenario, NewTypology, Settings, TypesAction, Workspace};

pub const SCHEMA_HEADER: &str = "x-schema-version";
const CSV: &str = "text/csv; charset=utf-8";
const GEOJSON: &str = "application/geo+json";

/// Error body: `{"code", "message", "schema_version"}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn invalid(message: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, code: "Invalid".into(), message: message.into() }
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e.class() {
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Validation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorClass::Conflict => StatusCode::CONFLICT,
        ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        ApiError { status: status_of(&e), code: e.code().to_string(), message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "schema_version": SCHEMA_VERSION });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Ws = State<Arc<Workspace>>;

async fn blocking<T, F>(ws: Arc<Workspace>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Workspace) -> vulnesis_core::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&ws))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "Internal".into(),
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

fn body_json<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

fn parse<T: std::str::FromStr<Err = Error>>(q: &HashMap<String, String>, name: &str) -> ApiResult<Option<T>> {
    q.get(name).filter(|v| !v.is_empty()).map(|v| v.parse::<T>()).transpose().map_err(ApiError::from)
}

fn with_type(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

fn is_csv(headers: &HeaderMap) -> bool {
    headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).is_some_and(|v| v.starts_with("text/csv"))
}

async fn add_schema_header(mut res: Response) -> Response {
    res.headers_mut().insert(SCHEMA_HEADER, HeaderValue::from(SCHEMA_VERSION));
    res
}

async fn not_found() -> ApiError {
    ApiError { status: StatusCode::NOT_FOUND, code: "NotFound".into(), message: "no such route".into() }
}

pub fn router(ws: Workspace) -> Router {
    Router::new()
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(project_summary))
        .route("/projects/{id}/cadastre", post(import_cadastre))
        .route("/projects/{id}/types", get(types).post(types_action))
        .route("/projects/{id}/subtypologies", get(subtypologies))
        .route("/projects/{id}/typologies", get(typologies).post(create_typology))
        .route("/projects/{id}/typologies/{tid}", axum::routing::delete(delete_typology))
        .route("/projects/{id}/typologies/{tid}/keys", post(assign_keys).delete(unassign_keys))
        .route("/projects/{id}/sample", post(sample))
        .route("/projects/{id}/field-forms", get(field_forms))
        .route("/projects/{id}/field-data", post(field_data))
        .route("/projects/{id}/scenarios", get(scenarios).post(define_scenario))
        .route("/projects/{id}/propagate", post(propagate))
        .route("/projects/{id}/buildings", get(buildings))
        .route("/projects/{id}/maps", get(map))
        .route("/projects/{id}/state", post(transition))
        .route("/projects/{id}/cartography", post(cartography))
        .route("/projects/{id}/settings", post(settings))
        .route("/projects/{id}/recompute", post(recompute))
        .fallback(not_found)
        .layer(axum::middleware::map_response(add_schema_header))
        .with_state(Arc::new(ws))
}

async fn list_projects(State(ws): Ws) -> ApiResult<Response> {
    Ok(Json(blocking(ws, |w| Ok(w.list())).await?).into_response())
}

async fn create_project(State(ws): Ws, body: Bytes) -> ApiResult<Response> {
    let req: NewProject = body_json(&body)?;
    let meta = blocking(ws, move |w| w.create(req)).await?;
    Ok((StatusCode::CREATED, Json(meta)).into_response())
}

async fn project_summary(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.summary(&id)).await?).into_response())
}

async fn import_cadastre(
    State(ws): Ws,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> ApiResult<Response> {
    let map = q.get("map").cloned();
    Ok(Json(blocking(ws, move |w| w.import_cadastre(&id, &body, map.as_deref())).await?).into_response())
}

async fn types(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.types(&id)).await?).into_response())
}

async fn types_action(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let action: TypesAction = body_json(&body)?;
    Ok(Json(blocking(ws, move |w| w.types_action(&id, action)).await?).into_response())
}

async fn subtypologies(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.subtypologies(&id)).await?).into_response())
}

async fn typologies(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.typologies(&id)).await?).into_response())
}

async fn create_typology(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: NewTypology = body_json(&body)?;
    let t = blocking(ws, move |w| w.create_typology(&id, req)).await?;
    Ok((StatusCode::CREATED, Json(t)).into_response())
}

async fn delete_typology(State(ws): Ws, Path((id, tid)): Path<(String, String)>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.delete_typology(&id, &tid)).await?).into_response())
}

async fn assign_keys(State(ws): Ws, Path((id, tid)): Path<(String, String)>, body: Bytes) -> ApiResult<Response> {
    let req: KeyList = body_json(&body)?;
    Ok(Json(blocking(ws, move |w| w.assign(&id, &tid, &req.keys)).await?).into_response())
}

async fn unassign_keys(State(ws): Ws, Path((id, tid)): Path<(String, String)>, body: Bytes) -> ApiResult<Response> {
    let req: KeyList = body_json(&body)?;
    Ok(Json(blocking(ws, move |w| w.unassign(&id, &tid, &req.keys)).await?).into_response())
}

async fn sample(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let spec: SampleSpec = body_json(&body)?;
    Ok(Json(blocking(ws, move |w| w.sample(&id, &spec)).await?).into_response())
}

#[derive(Debug, Deserialize, Serialize)]
struct FormsQuery {
    report: Option<String>,
}

async fn field_forms(State(ws): Ws, Path(id): Path<String>, Query(q): Query<FormsQuery>) -> ApiResult<Response> {
    let report = q.report.unwrap_or_else(|| "a".into()).to_ascii_lowercase();
    if report != "a" && report != "b" {
        return Err(ApiError::invalid(format!("report must be a or b, got {report:?}")));
    }
    let forms = blocking(ws, move |w| w.field_forms(&id)).await?;
    Ok(with_type(CSV, if report == "a" { forms.report_a } else { forms.report_b }))
}

async fn field_data(State(ws): Ws, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let report = if is_csv(&headers) {
        blocking(ws, move |w| w.field_data_csv(&id, &body)).await?
    } else {
        let records: Vec<FieldRecord> = body_json(&body)?;
        blocking(ws, move |w| w.field_data_json(&id, records)).await?
    };
    Ok(Json(report).into_response())
}

async fn scenarios(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.scenarios(&id)).await?).into_response())
}

async fn define_scenario(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: NewScenario = body_json(&body)?;
    let s = blocking(ws, move |w| w.define_scenario(&id, req)).await?;
    Ok((StatusCode::CREATED, Json(s)).into_response())
}

async fn propagate(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.propagate(&id)).await?).into_response())
}

/// Query form of a building filter: `ids=1,2&survey_kind=Encuestadas&edited=true&typology=T1&vuln_level=alta`.
pub fn filter_from_query(q: &HashMap<String, String>) -> ApiResult<BuildingFilter> {
    let ids = match q.get("ids").filter(|v| !v.is_empty()) {
        Some(list) => Some(
            list.split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| ApiError::invalid(format!("bad building id {s:?}"))))
                .collect::<ApiResult<_>>()?,
        ),
        None => None,
    };
    let edited = match q.get("edited").map(String::as_str) {
        None | Some("") => None,
        Some("true") => Some(true),
        Some("false") => Some(false),
        Some(other) => return Err(ApiError::invalid(format!("edited must be true or false, got {other:?}"))),
    };
    Ok(BuildingFilter {
        ids,
        survey_kind: parse(q, "survey_kind")?,
        edited,
        typology_id: q.get("typology").filter(|v| !v.is_empty()).cloned(),
        vuln_level: parse(q, "vuln_level")?,
    })
}

async fn buildings(
    State(ws): Ws,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let filter = filter_from_query(&q)?;
    Ok(Json(blocking(ws, move |w| w.buildings(&id, &filter)).await?).into_response())
}

async fn map(State(ws): Ws, Path(id): Path<String>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let metric =
        Metric::parse(q.get("metric").map_or("vulnerability", String::as_str), q.get("scenario").map(String::as_str))?;
    let granularity: Granularity = parse(&q, "granularity")?.unwrap_or(Granularity::Building);
    let text = blocking(ws, move |w| w.map(&id, &metric, granularity)).await?;
    Ok(with_type(GEOJSON, text))
}

#[derive(Debug, Deserialize)]
struct StateRequest {
    target: String,
}

async fn transition(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: StateRequest = body_json(&body)?;
    let target: ProjectState = req.target.parse()?;
    Ok(Json(blocking(ws, move |w| w.transition(&id, target)).await?).into_response())
}

async fn cartography(
    State(ws): Ws,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> ApiResult<Response> {
    let kind: LayerKind = parse(&q, "kind")?.ok_or_else(|| ApiError::invalid("kind is required"))?;
    let key = q.get("key").cloned().ok_or_else(|| ApiError::invalid("key is required"))?;
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::invalid("layer must be UTF-8"))?;
    Ok(Json(blocking(ws, move |w| w.cartography(&id, kind, &key, &text)).await?).into_response())
}

async fn settings(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let s: Settings = body_json(&body)?;
    Ok(Json(blocking(ws, move |w| w.settings(&id, &s)).await?).into_response())
}

async fn recompute(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(ws, move |w| w.recompute(&id)).await?).into_response())
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, ws: Workspace) -> std::io::Result<()> {
    axum::serve(listener, router(ws)).await
}
