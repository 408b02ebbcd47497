//! HTTP routes under `/api/v1`.

mod admin;
mod annotate;
mod export;
mod metrics;
mod projects;
mod sessions;

use std::str::FromStr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Request};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::Utc;
use labelforge_core::{Action, Coder, ProjectState, Role};
use serde::de::DeserializeOwned;

use crate::app::App;
use crate::error::{ApiError, ApiResult};

pub const API_PREFIX: &str = "/api/v1";

/// Who may call an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Public,
    /// Any signed-in account.
    Authenticated,
    /// Admin accounts only, outside any project.
    Admin,
    /// Admins, or coders who are members of the project.
    Member,
    /// Project access plus the named permission.
    Permission(Action),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub method: &'static str,
    pub path: &'static str,
    pub access: Access,
}

const fn ep(method: &'static str, path: &'static str, access: Access) -> Endpoint {
    Endpoint { method, path, access }
}

/// Every route the service answers, with its access rule.
pub const ENDPOINTS: &[Endpoint] = &[
    ep("GET", "/healthz", Access::Public),
    ep("GET", "/api/v1/healthz", Access::Public),
    ep("POST", "/api/v1/sessions", Access::Public),
    ep("DELETE", "/api/v1/sessions", Access::Authenticated),
    ep("GET", "/api/v1/projects", Access::Authenticated),
    ep("POST", "/api/v1/projects", Access::Admin),
    ep("GET", "/api/v1/projects/{id}", Access::Member),
    ep("PATCH", "/api/v1/projects/{id}/settings", Access::Permission(Action::EditSettings)),
    ep("POST", "/api/v1/projects/{id}/coders", Access::Permission(Action::EditSettings)),
    ep("GET", "/api/v1/projects/{id}/codebook", Access::Member),
    ep("GET", "/api/v1/projects/{id}/next", Access::Permission(Action::Annotate)),
    ep("POST", "/api/v1/assignments/{id}/label", Access::Permission(Action::Annotate)),
    ep("POST", "/api/v1/assignments/{id}/skip", Access::Permission(Action::Annotate)),
    ep("GET", "/api/v1/projects/{id}/history", Access::Permission(Action::ViewHistory)),
    ep("PATCH", "/api/v1/annotations/{id}", Access::Permission(Action::ViewHistory)),
    ep("GET", "/api/v1/projects/{id}/admin/skipped", Access::Permission(Action::ResolveSkips)),
    ep("GET", "/api/v1/projects/{id}/admin/disagreements", Access::Permission(Action::AdjudicateIrr)),
    ep("POST", "/api/v1/records/{id}/adjudicate", Access::Permission(Action::ResolveSkips)),
    ep("POST", "/api/v1/records/{id}/discard", Access::Permission(Action::Discard)),
    ep("POST", "/api/v1/records/{id}/admin-label", Access::Permission(Action::AdminLabel)),
    ep("GET", "/api/v1/projects/{id}/metrics/labels", Access::Permission(Action::ViewDashboard)),
    ep("GET", "/api/v1/projects/{id}/metrics/timing", Access::Permission(Action::ViewDashboard)),
    ep("GET", "/api/v1/projects/{id}/metrics/model", Access::Permission(Action::ViewDashboard)),
    ep("GET", "/api/v1/projects/{id}/metrics/irr", Access::Permission(Action::ViewDashboard)),
    ep("GET", "/api/v1/projects/{id}/export/data", Access::Permission(Action::Export)),
    ep("GET", "/api/v1/projects/{id}/export/model", Access::Permission(Action::Export)),
];

pub fn router(app: Arc<App>) -> Router {
    let limit = app.config.max_upload_bytes;
    let api = Router::new()
        .route("/healthz", get(health))
        .route("/sessions", post(sessions::login).delete(sessions::logout))
        .route("/projects", get(projects::list).post(projects::create))
        .route("/projects/{id}", get(projects::detail))
        .route("/projects/{id}/settings", patch(projects::update_settings))
        .route("/projects/{id}/coders", post(projects::add_coder))
        .route("/projects/{id}/codebook", get(projects::codebook))
        .route("/projects/{id}/next", get(annotate::next))
        .route("/assignments/{id}/label", post(annotate::label))
        .route("/assignments/{id}/skip", post(annotate::skip))
        .route("/projects/{id}/history", get(annotate::history))
        .route("/annotations/{id}", patch(annotate::modify))
        .route("/projects/{id}/admin/skipped", get(admin::skipped))
        .route("/projects/{id}/admin/disagreements", get(admin::disagreements))
        .route("/records/{id}/adjudicate", post(admin::adjudicate))
        .route("/records/{id}/discard", post(admin::discard))
        .route("/records/{id}/admin-label", post(admin::admin_label))
        .route("/projects/{id}/metrics/labels", get(metrics::labels))
        .route("/projects/{id}/metrics/timing", get(metrics::timing))
        .route("/projects/{id}/metrics/model", get(metrics::model))
        .route("/projects/{id}/metrics/irr", get(metrics::irr))
        .route("/projects/{id}/export/data", get(export::data))
        .route("/projects/{id}/export/model", get(export::model));
    Router::new()
        .route("/healthz", get(health))
        .nest(API_PREFIX, api)
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(app)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn not_found() -> ApiError {
    ApiError::not_found("route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

/// The signed-in account behind a bearer token.
pub struct Actor(pub Coder);

impl FromRequestParts<Arc<App>> for Actor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &Arc<App>) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(ApiError::unauthenticated)?;
        let session = app.store.session(token)?.ok_or_else(ApiError::unauthenticated)?;
        if session.expires_at <= Utc::now() {
            return Err(ApiError::unauthenticated());
        }
        let user = app.store.user(session.coder_id)?.ok_or_else(ApiError::unauthenticated)?;
        Ok(Actor(user.coder))
    }
}

impl Actor {
    pub fn require_admin(&self) -> ApiResult<()> {
        if self.0.role == Role::Admin {
            Ok(())
        } else {
            Err(ApiError::forbidden())
        }
    }
}

/// JSON request body whose rejections use the service's error format.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(rejection) => Err(json_rejection(rejection)),
        }
    }
}

fn json_rejection(rejection: JsonRejection) -> ApiError {
    let status = rejection.status();
    let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
        "payload_too_large"
    } else {
        "bad_request"
    };
    ApiError::new(status, code, rejection.body_text())
}

/// Parses an id path segment; malformed ids are simply not found.
pub fn parse_id<T: FromStr>(raw: &str, what: &str) -> ApiResult<T> {
    raw.parse().map_err(|_| ApiError::not_found(what))
}

/// Project access for members and admins.
pub fn require_member(state: &ProjectState, actor: &Coder) -> ApiResult<()> {
    if actor.role == Role::Admin || state.is_member(actor.id) {
        Ok(())
    } else {
        Err(ApiError::forbidden())
    }
}
