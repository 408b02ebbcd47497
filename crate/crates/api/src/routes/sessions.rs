use std::sync::Arc;

use axum::extract::State;
use axum::http::header::AUTHORIZATION;
use axum::http::{HeaderMap, StatusCode};
use axum::Json;
use chrono::{DateTime, Utc};
use labelforge_core::Coder;
use serde::{Deserialize, Serialize};

use super::{Actor, JsonBody};
use crate::app::App;
use crate::auth::{new_session, verify_password};
use crate::error::{ApiError, ApiResult};

#[derive(Debug, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub expires_at: DateTime<Utc>,
    pub coder: Coder,
}

pub async fn login(State(app): State<Arc<App>>, JsonBody(req): JsonBody<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let rejected = || ApiError::new(StatusCode::UNAUTHORIZED, "invalid_credentials", "unknown username or wrong password");
    let user = app.store.user_by_name(&req.username)?.ok_or_else(rejected)?;
    let hash = user.password_hash.clone();
    let password = req.password;
    let valid = tokio::task::spawn_blocking(move || verify_password(&password, &hash))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    if !valid {
        return Err(rejected());
    }
    let session = new_session(&user.coder, app.config.session_ttl, Utc::now());
    app.store.insert_session(&session)?;
    Ok(Json(LoginResponse {
        token: session.token,
        expires_at: session.expires_at,
        coder: user.coder,
    }))
}

pub async fn logout(State(app): State<Arc<App>>, _actor: Actor, headers: HeaderMap) -> ApiResult<StatusCode> {
    if let Some(token) = headers
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    {
        app.store.delete_session(token.trim())?;
    }
    Ok(StatusCode::NO_CONTENT)
}
