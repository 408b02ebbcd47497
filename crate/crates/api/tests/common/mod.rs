#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::Utc;
use labelforge_api::auth::{create_account, new_session};
use labelforge_api::{router, App, ServiceConfig};
use labelforge_core::Role;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub const BOUNDARY: &str = "labelforge-test-boundary";

pub struct Response {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", String::from_utf8_lossy(&self.body)))
    }
}

pub struct Harness {
    pub app: Arc<App>,
    pub router: Router,
    pub admin_token: String,
    pub dir: TempDir,
}

pub struct Part<'a> {
    pub name: &'a str,
    pub filename: Option<&'a str>,
    pub content_type: &'a str,
    pub bytes: Vec<u8>,
}

pub fn multipart(parts: &[Part]) -> Vec<u8> {
    let mut body = Vec::new();
    for p in parts {
        body.extend(format!("--{BOUNDARY}\r\n").bytes());
        match p.filename {
            Some(f) => body.extend(
                format!("Content-Disposition: form-data; name=\"{}\"; filename=\"{f}\"\r\n", p.name).bytes(),
            ),
            None => body.extend(format!("Content-Disposition: form-data; name=\"{}\"\r\n", p.name).bytes()),
        }
        body.extend(format!("Content-Type: {}\r\n\r\n", p.content_type).bytes());
        body.extend(&p.bytes);
        body.extend(b"\r\n");
    }
    body.extend(format!("--{BOUNDARY}--\r\n").bytes());
    body
}

/// Form for a new project. `settings` and `coders` go into the metadata
/// part.
pub fn project_form(name: &str, labels: &[&str], csv: &str, settings: Value, coders: &[&str]) -> Vec<u8> {
    let metadata = json!({
        "name": name,
        "description": "test project",
        "settings": settings,
        "coders": coders,
    });
    multipart(&[
        Part {
            name: "metadata",
            filename: None,
            content_type: "application/json",
            bytes: metadata.to_string().into_bytes(),
        },
        Part {
            name: "labels",
            filename: None,
            content_type: "application/json",
            bytes: serde_json::to_vec(labels).unwrap(),
        },
        Part {
            name: "data",
            filename: Some("data.csv"),
            content_type: "text/csv",
            bytes: csv.as_bytes().to_vec(),
        },
    ])
}

/// `n` distinct texts: even rows lean on "alpha" words, odd rows on
/// "omega" words.
pub fn corpus_csv(n: usize) -> String {
    let mut csv = String::from("ID,Text\n");
    for i in 0..n {
        let topic = if i % 2 == 0 { "alpha beta gamma" } else { "omega sigma delta" };
        csv.push_str(&format!("r{i},{topic} item{i} word{}\n", i % 7));
    }
    csv
}

impl Harness {
    pub async fn new() -> Self {
        Self::with_config(|_| {}).await
    }

    pub async fn with_config(edit: impl FnOnce(&mut ServiceConfig)) -> Self {
        let dir = TempDir::new().unwrap();
        let mut config = ServiceConfig {
            data_dir: dir.path().to_path_buf(),
            ..ServiceConfig::default()
        };
        edit(&mut config);
        let app = App::open(config).unwrap();
        let (_, password) = create_account(&app.store, "admin", Role::Admin, Utc::now()).unwrap();
        let router = router_for(&app);
        let mut h = Self {
            app,
            router,
            admin_token: String::new(),
            dir,
        };
        h.admin_token = h.login("admin", &password).await;
        h
    }

    /// Drops the service and opens a new one on the same data directory.
    pub async fn reopen(self) -> Self {
        let Harness { app, router, dir, .. } = self;
        let config = app.config.clone();
        drop(router);
        let start = Instant::now();
        let mut app = Some(app);
        // a retrain thread may still hold a reference for a moment
        while Arc::strong_count(app.as_ref().unwrap()) > 1 {
            assert!(start.elapsed() < Duration::from_secs(60), "service still referenced");
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        drop(app.take());
        let app = App::open(config).unwrap();
        let admin = app.store.user_by_name("admin").unwrap().unwrap().coder;
        let session = new_session(&admin, Duration::from_secs(3600), Utc::now());
        app.store.insert_session(&session).unwrap();
        Self {
            router: router_for(&app),
            app,
            admin_token: session.token,
            dir,
        }
    }

    pub async fn send(&self, method: Method, path: &str, token: Option<&str>, content_type: Option<&str>, body: Vec<u8>) -> Response {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        if let Some(ct) = content_type {
            req = req.header(header::CONTENT_TYPE, ct);
        }
        let res = self
            .router
            .clone()
            .oneshot(req.body(Body::from(body)).unwrap())
            .await
            .unwrap();
        let status = res.status();
        let headers = res.headers().clone();
        let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
        Response { status, headers, body }
    }

    pub async fn get(&self, path: &str, token: &str) -> Response {
        self.send(Method::GET, path, Some(token), None, Vec::new()).await
    }

    pub async fn post_json(&self, path: &str, token: Option<&str>, body: Value) -> Response {
        self.send(Method::POST, path, token, Some("application/json"), body.to_string().into_bytes())
            .await
    }

    pub async fn patch_json(&self, path: &str, token: &str, body: Value) -> Response {
        self.send(Method::PATCH, path, Some(token), Some("application/json"), body.to_string().into_bytes())
            .await
    }

    pub async fn login(&self, username: &str, password: &str) -> String {
        let res = self
            .post_json("/api/v1/sessions", None, json!({"username": username, "password": password}))
            .await;
        assert_eq!(res.status, StatusCode::OK, "login failed: {}", String::from_utf8_lossy(&res.body));
        res.json()["token"].as_str().unwrap().to_string()
    }

    pub async fn create_project(&self, name: &str, labels: &[&str], csv: &str, settings: Value, coders: &[&str]) -> Response {
        let body = project_form(name, labels, csv, settings, coders);
        self.send(
            Method::POST,
            "/api/v1/projects",
            Some(&self.admin_token),
            Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
            body,
        )
        .await
    }

    /// Creates a coder account through the project endpoint and signs it in.
    pub async fn add_coder(&self, project: &str, username: &str) -> String {
        let res = self
            .post_json(
                &format!("/api/v1/projects/{project}/coders"),
                Some(&self.admin_token),
                json!({"username": username}),
            )
            .await;
        assert_eq!(res.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&res.body));
        let password = res.json()["password"].as_str().unwrap().to_string();
        self.login(username, &password).await
    }

    /// Polls the project until `batches` exist and no retrain is running.
    pub async fn wait_for_batches(&self, project: &str, batches: usize) -> Value {
        let start = Instant::now();
        loop {
            let detail = self.get(&format!("/api/v1/projects/{project}"), &self.admin_token).await.json();
            let n = detail["batches"].as_array().unwrap().len();
            if n >= batches && detail["cycle_in_progress"] == json!(false) {
                return detail;
            }
            assert!(start.elapsed() < Duration::from_secs(120), "timed out waiting for batch {batches}");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    /// Label id by name.
    pub async fn label_ids(&self, project: &str) -> Vec<(String, String)> {
        let detail = self.get(&format!("/api/v1/projects/{project}"), &self.admin_token).await.json();
        detail["project"]["labels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| (l["name"].as_str().unwrap().to_string(), l["id"].as_str().unwrap().to_string()))
            .collect()
    }
}

pub fn label_id<'a>(labels: &'a [(String, String)], name: &str) -> &'a str {
    &labels.iter().find(|(n, _)| n == name).unwrap().1
}

fn router_for(app: &Arc<App>) -> Router {
    router(Arc::clone(app))
}

/// The label a careful coder would pick for a [`corpus_csv`] text.
pub fn true_label(text: &str) -> &'static str {
    if text.contains("alpha") {
        "a"
    } else {
        "b"
    }
}
