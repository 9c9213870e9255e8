//! HTTP/JSON surface of the operator.
//!
//! Product ids and port refs contain `/`; routes accept them either
//! percent-encoded in one segment (`marketing%2Fcustomer-details`) or
//! split over two (`marketing/customer-details`).

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AccessOutcome, Operator, OperatorError};
use crate::classification::{ClassificationError, Obligation, OverrideStatus, Verdict};
use crate::contracts::{ContractError, Observed};
use crate::descriptor::DescriptorError;
use crate::enforcement::{EnforcementError, Mode, Verification};
use crate::mesh::{Direction, MeshError, PortRef, ProductId};
use crate::policy::{Action, PolicyError, Subject};
use crate::store::StoreId;

/// Header naming the caller for the audit log; defaults to `api`.
pub const ACTOR_HEADER: &str = "x-mesh-actor";

type Shared = Arc<Operator>;

pub struct ApiError(OperatorError);

impl<E: Into<OperatorError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

pub fn status_of(e: &OperatorError) -> StatusCode {
    use OperatorError as O;
    match e {
        O::Descriptor(_) => StatusCode::UNPROCESSABLE_ENTITY,
        O::Mesh(m) => match m {
            MeshError::Invalid(_) | MeshError::Dangling { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            MeshError::NotFound(_) | MeshError::PortNotFound(_) => StatusCode::NOT_FOUND,
            MeshError::Duplicate(_) | MeshError::HasConsumers { .. } | MeshError::Cycle(_) => StatusCode::CONFLICT,
            MeshError::InvalidId(..) => StatusCode::BAD_REQUEST,
        },
        O::Classification(c) => match c {
            ClassificationError::UnknownPort(_) | ClassificationError::UnknownOverride(_) => StatusCode::NOT_FOUND,
            ClassificationError::PendingOverride { .. }
            | ClassificationError::NotPending { .. }
            | ClassificationError::DuplicateLabel(_) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        },
        O::Policy(PolicyError::Unresolved(_)) => StatusCode::NOT_FOUND,
        O::Policy(_) => StatusCode::UNPROCESSABLE_ENTITY,
        O::Enforcement(e) => match e {
            EnforcementError::Untagged(_) => StatusCode::FORBIDDEN,
            EnforcementError::Unresolved(_) | EnforcementError::UnknownKey(_) => StatusCode::NOT_FOUND,
            EnforcementError::Query(_)
            | EnforcementError::NotSql(_)
            | EnforcementError::UnknownColumn { .. }
            | EnforcementError::EncryptionDisabled(_)
            | EnforcementError::NoKey(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        },
        O::Contract(ContractError::UnknownPort(_)) => StatusCode::NOT_FOUND,
        O::Contract(ContractError::Unreadable(..)) => StatusCode::INTERNAL_SERVER_ERROR,
        O::Contract(_) => StatusCode::UNPROCESSABLE_ENTITY,
        O::BadRequest(_) => StatusCode::BAD_REQUEST,
        O::Store(_) | O::Log(_) | O::Secret(_) | O::Replay { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        let mut body = json!({ "error": self.0.to_string() });
        match &self.0 {
            OperatorError::Mesh(MeshError::Invalid(errors)) => body["errors"] = json!(errors),
            OperatorError::Descriptor(DescriptorError::Malformed { line, column, .. })
            | OperatorError::Policy(PolicyError::Syntax { line, column, .. })
            | OperatorError::Policy(PolicyError::UnknownAction { line, column, .. })
            | OperatorError::Policy(PolicyError::ScopeMismatch { line, column, .. }) => {
                body["line"] = json!(line);
                body["column"] = json!(column);
            }
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn actor(headers: &HeaderMap) -> String {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .unwrap_or("api")
        .to_string()
}

fn product_id(segments: &[String]) -> ApiResult<ProductId> {
    segments.join("/").parse().map_err(|e: MeshError| ApiError(e.into()))
}

fn port_ref(segments: &[String]) -> ApiResult<PortRef> {
    segments.join("/").parse().map_err(|e: MeshError| ApiError(e.into()))
}

/// Builds the router over a shared operator.
pub fn router(operator: Arc<Operator>) -> Router {
    Router::new()
        .route("/products", get(list_products).post(register_product))
        .route("/products/{id}", get(show_product).delete(decommission))
        .route("/products/{domain}/{name}", get(show_product).delete(decommission))
        .route("/lineage/{id}", get(lineage))
        .route("/lineage/{domain}/{name}", get(lineage))
        .route("/labels", get(list_labels).post(define_label))
        .route("/ports/{port}", get(show_port))
        .route("/ports/{domain}/{port}", get(show_port))
        .route("/ports/{port}/tags", post(tag_port))
        .route("/ports/{domain}/{port}/tags", post(tag_port))
        .route("/ports/{port}/compliance", get(compliance))
        .route("/ports/{domain}/{port}/compliance", get(compliance))
        .route("/ports/{port}/slo", post(check_slo))
        .route("/ports/{domain}/{port}/slo", post(check_slo))
        .route("/ports/{port}/data", get(fetch_data).put(put_data))
        .route("/ports/{domain}/{port}/data", get(fetch_data).put(put_data))
        .route("/overrides", get(list_overrides).post(request_override))
        .route("/overrides/{id}/review", post(review_override))
        .route("/policies", get(list_policies).post(apply_policies))
        .route("/decisions", post(decide))
        .route("/access-requests", post(access_request))
        .route("/query", post(query))
        .route("/keys/{key_id}/request", post(request_key))
        .route("/tokens/verify", post(verify_token))
        .route("/contracts/{port}/run", post(run_contracts))
        .route("/contracts/{domain}/{port}/run", post(run_contracts))
        .route("/catalog/search", get(search_catalog))
        .route("/subjects/{id}/forget", post(forget))
        .route("/state", get(state_hash))
        .with_state(operator)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(operator: Arc<Operator>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(operator))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn list_products(State(op): State<Shared>) -> impl IntoResponse {
    let state = op.state();
    let products: Vec<_> = state.graph.products().collect();
    Json(json!(products))
}

async fn register_product(State(op): State<Shared>, headers: HeaderMap, body: String) -> ApiResult<impl IntoResponse> {
    let id = op.register_descriptor_text(&actor(&headers), &body)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn show_product(State(op): State<Shared>, Path(segments): Path<Vec<String>>) -> ApiResult<impl IntoResponse> {
    let id = product_id(&segments)?;
    let state = op.state();
    let product = state.graph.get(&id).ok_or(MeshError::NotFound(id.clone()))?;
    let ports: Vec<_> = product
        .output_ports
        .iter()
        .filter_map(|p| state.classification.get(&id.port(&p.id)))
        .collect();
    Ok(Json(json!({ "product": product, "classification": ports })))
}

#[derive(Deserialize)]
struct ForceQuery {
    #[serde(default)]
    force: bool,
}

async fn decommission(
    State(op): State<Shared>,
    headers: HeaderMap,
    Path(segments): Path<Vec<String>>,
    Query(q): Query<ForceQuery>,
) -> ApiResult<impl IntoResponse> {
    let id = product_id(&segments)?;
    Ok(Json(op.decommission(&actor(&headers), &id, q.force)?))
}

#[derive(Deserialize)]
struct LineageQuery {
    #[serde(default = "upstream")]
    direction: Direction,
}

fn upstream() -> Direction {
    Direction::Upstream
}

async fn lineage(
    State(op): State<Shared>,
    Path(segments): Path<Vec<String>>,
    Query(q): Query<LineageQuery>,
) -> ApiResult<impl IntoResponse> {
    let id = product_id(&segments)?;
    Ok(Json(op.lineage(&id, q.direction)?))
}

async fn list_labels(State(op): State<Shared>) -> impl IntoResponse {
    let state = op.state();
    let labels: Vec<_> = state.labels.iter().collect();
    Json(json!(labels))
}

#[derive(Deserialize)]
struct LabelBody {
    name: String,
    #[serde(default)]
    obligations: BTreeSet<Obligation>,
    #[serde(default)]
    description: String,
}

async fn define_label(
    State(op): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<LabelBody>,
) -> ApiResult<impl IntoResponse> {
    let label = op.define_label(&actor(&headers), &body.name, body.obligations, &body.description)?;
    Ok((StatusCode::CREATED, Json(label)))
}

async fn show_port(State(op): State<Shared>, Path(segments): Path<Vec<String>>) -> ApiResult<impl IntoResponse> {
    let port = port_ref(&segments)?;
    let state = op.state();
    let output = state
        .graph
        .output_port(&port)
        .ok_or(MeshError::PortNotFound(port.clone()))?;
    Ok(Json(json!({
        "port": output,
        "classification": state.classification.get(&port),
        "contracts": state.contracts.for_port(&port),
        "last_report": state.reports.get(&port),
    })))
}

#[derive(Deserialize)]
struct TagBody {
    labels: BTreeSet<String>,
}

async fn tag_port(
    State(op): State<Shared>,
    headers: HeaderMap,
    Path(segments): Path<Vec<String>>,
    Json(body): Json<TagBody>,
) -> ApiResult<impl IntoResponse> {
    let port = port_ref(&segments)?;
    Ok(Json(op.tag_port(&actor(&headers), &port, body.labels)?))
}

async fn compliance(State(op): State<Shared>, Path(segments): Path<Vec<String>>) -> ApiResult<impl IntoResponse> {
    let port = port_ref(&segments)?;
    Ok(Json(op.compliance(&port)?))
}

async fn check_slo(
    State(op): State<Shared>,
    Path(segments): Path<Vec<String>>,
    body: Option<Json<Observed>>,
) -> ApiResult<impl IntoResponse> {
    let port = port_ref(&segments)?;
    Ok(Json(op.check_slo(&port, body.map(|Json(o)| o))?))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(axum::http::header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

/// Direct storage access: the bytes as stored, for a valid token holder.
async fn fetch_data(
    State(op): State<Shared>,
    headers: HeaderMap,
    Path(segments): Path<Vec<String>>,
) -> ApiResult<Response> {
    let port = port_ref(&segments)?;
    let Some(token) = bearer(&headers) else {
        return Ok((
            StatusCode::UNAUTHORIZED,
            Json(json!({ "error": "missing bearer token" })),
        )
            .into_response());
    };
    Ok(match op.fetch_with_token(token, &port)? {
        Ok(bytes) => bytes.into_response(),
        Err(v) => (StatusCode::FORBIDDEN, Json(json!({ "verification": v }))).into_response(),
    })
}

async fn put_data(
    State(op): State<Shared>,
    Path(segments): Path<Vec<String>>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let port = port_ref(&segments)?;
    if op.state().graph.output_port(&port).is_none() {
        return Err(MeshError::PortNotFound(port).into());
    }
    op.put_dataset(&StoreId::Output(port), &body)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct OverrideFilter {
    status: Option<OverrideStatus>,
}

async fn list_overrides(State(op): State<Shared>, Query(q): Query<OverrideFilter>) -> impl IntoResponse {
    let state = op.state();
    let list: Vec<_> = state
        .overrides
        .iter()
        .filter(|o| q.status.is_none_or(|s| o.status == s))
        .collect();
    Json(json!(list))
}

#[derive(Deserialize)]
struct OverrideBody {
    port: PortRef,
    labels: BTreeSet<String>,
    justification: String,
}

async fn request_override(
    State(op): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<OverrideBody>,
) -> ApiResult<impl IntoResponse> {
    let r = op.request_override(&actor(&headers), &body.port, body.labels, &body.justification)?;
    Ok((StatusCode::CREATED, Json(r)))
}

#[derive(Deserialize)]
struct ReviewBody {
    verdict: Verdict,
}

async fn review_override(
    State(op): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<u64>,
    Json(body): Json<ReviewBody>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(op.review_override(&actor(&headers), id, body.verdict)?))
}

async fn list_policies(State(op): State<Shared>) -> impl IntoResponse {
    let state = op.state();
    let list: Vec<_> = state
        .policies
        .iter()
        .map(|p| json!({ "name": p.name, "scope": p.scope, "rules": p.rules.len(), "text": p.to_string() }))
        .collect();
    Json(json!(list))
}

/// Body is `.mpol` source text.
async fn apply_policies(State(op): State<Shared>, headers: HeaderMap, body: String) -> ApiResult<impl IntoResponse> {
    let names = op.apply_policies(&actor(&headers), &body)?;
    Ok((StatusCode::CREATED, Json(json!({ "applied": names }))))
}

#[derive(Deserialize)]
struct DecisionBody {
    subject: Subject,
    action: Action,
    port: PortRef,
    #[serde(default)]
    column: Option<String>,
    #[serde(default)]
    explain: bool,
}

/// A dry run: evaluates without granting and without an audit entry.
async fn decide(State(op): State<Shared>, Json(body): Json<DecisionBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(op.decide(
        body.subject,
        body.action,
        &body.port,
        body.column.as_deref(),
        body.explain,
    )?))
}

#[derive(Deserialize)]
struct AccessBody {
    subject: Subject,
    port: PortRef,
    #[serde(default = "read")]
    action: Action,
    mode: Mode,
    #[serde(default)]
    ttl_seconds: Option<u64>,
}

fn read() -> Action {
    Action::Read
}

fn outcome_status(o: &AccessOutcome) -> StatusCode {
    if o.grant.is_some() {
        StatusCode::OK
    } else {
        StatusCode::FORBIDDEN
    }
}

async fn access_request(
    State(op): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<AccessBody>,
) -> ApiResult<impl IntoResponse> {
    let outcome = op.submit_access_request(
        &actor(&headers),
        &body.subject,
        &body.port,
        body.action,
        body.mode,
        body.ttl_seconds,
    )?;
    Ok((outcome_status(&outcome), Json(outcome)))
}

#[derive(Deserialize)]
struct QueryBody {
    subject: Subject,
    sql: String,
}

#[derive(Serialize)]
struct QueryResponse<'a> {
    #[serde(flatten)]
    outcome: &'a crate::enforcement::Outcome<crate::store::Table>,
}

async fn query(
    State(op): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<QueryBody>,
) -> ApiResult<impl IntoResponse> {
    let outcome = op.query(&actor(&headers), &body.subject, &body.sql)?;
    let status = if outcome.is_granted() {
        StatusCode::OK
    } else {
        StatusCode::FORBIDDEN
    };
    Ok((status, Json(json!(QueryResponse { outcome: &outcome }))))
}

#[derive(Deserialize)]
struct KeyBody {
    subject: Subject,
}

async fn request_key(
    State(op): State<Shared>,
    headers: HeaderMap,
    Path(key_id): Path<String>,
    Json(body): Json<KeyBody>,
) -> ApiResult<impl IntoResponse> {
    let outcome = op.request_key(&actor(&headers), &body.subject, &key_id)?;
    let status = if outcome.is_granted() {
        StatusCode::OK
    } else {
        StatusCode::FORBIDDEN
    };
    Ok((status, Json(outcome)))
}

#[derive(Deserialize)]
struct VerifyBody {
    token: String,
    port: PortRef,
}

async fn verify_token(State(op): State<Shared>, Json(body): Json<VerifyBody>) -> impl IntoResponse {
    let v: Verification = op.verify_token(&body.token, &body.port);
    Json(json!({ "verification": v, "valid": v.is_valid() }))
}

async fn run_contracts(
    State(op): State<Shared>,
    headers: HeaderMap,
    Path(segments): Path<Vec<String>>,
) -> ApiResult<impl IntoResponse> {
    let port = port_ref(&segments)?;
    Ok(Json(op.run_contracts(&actor(&headers), &port)?))
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    label: Option<String>,
}

async fn search_catalog(State(op): State<Shared>, Query(q): Query<SearchQuery>) -> impl IntoResponse {
    Json(op.search_catalog(&q.q, q.label.as_deref()))
}

async fn forget(State(op): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(op.forget_subject(&actor(&headers), &id)?))
}

async fn state_hash(State(op): State<Shared>) -> impl IntoResponse {
    let state = op.state();
    Json(json!({ "seq": state.last_seq, "hash": state.hash() }))
}
