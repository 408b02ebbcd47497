use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use labelforge_core::export::{export_labeled_zip, export_model_bundle};
use labelforge_core::Action;

use super::{parse_id, Actor};
use crate::app::App;
use crate::error::ApiResult;

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    let s = s.trim_matches('-').to_string();
    if s.is_empty() {
        "project".into()
    } else {
        s
    }
}

fn zip_response(filename: String, bytes: Vec<u8>) -> Response {
    (
        [
            (header::CONTENT_TYPE, "application/zip".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\"")),
        ],
        bytes,
    )
        .into_response()
}

pub async fn data(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::Export)?;
        let bytes = export_labeled_zip(s)?;
        Ok(zip_response(format!("{}-labeled-data.zip", slug(&s.project.name)), bytes))
    })
    .await
}

pub async fn model(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::Export)?;
        let bytes = export_model_bundle(s)?;
        Ok(zip_response(format!("{}-model.zip", slug(&s.project.name)), bytes))
    })
    .await
}
