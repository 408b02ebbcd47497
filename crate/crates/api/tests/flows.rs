mod common;

use axum::http::{header, Method, StatusCode};
use common::{corpus_csv, label_id, true_label, Harness, Part, BOUNDARY};
use labelforge_core::export::{read_model_bundle, read_zip, LABELED_DATA_FILE};
use serde_json::{json, Value};

fn assert_error(res: &common::Response, status: StatusCode, code: &str) -> Value {
    assert_eq!(res.status, status, "{}", String::from_utf8_lossy(&res.body));
    let body = res.json();
    assert_eq!(body["code"], json!(code), "{body}");
    assert!(body["message"].is_string());
    assert!(body["details"].is_array());
    body
}

async fn new_project(h: &Harness, csv: &str, settings: Value) -> String {
    let res = h.create_project("flow", &["a", "b"], csv, settings, &[]).await;
    assert_eq!(res.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&res.body));
    res.json()["id"].as_str().unwrap().to_string()
}

/// Labels whatever `next` serves, up to `limit` records or until the coder
/// has nothing left.
async fn label_all(h: &Harness, project: &str, token: &str, labels: &[(String, String)], limit: usize, pick: impl Fn(&str) -> &'static str) -> usize {
    let mut n = 0;
    while n < limit {
        let next = h.get(&format!("/api/v1/projects/{project}/next"), token).await;
        assert_eq!(next.status, StatusCode::OK);
        let next = next.json();
        if next["assignment"].is_null() {
            return n;
        }
        let text = next["assignment"]["record"]["text"].as_str().unwrap().to_string();
        let id = next["assignment"]["id"].as_str().unwrap().to_string();
        let res = h
            .post_json(
                &format!("/api/v1/assignments/{id}/label"),
                Some(token),
                json!({"label_id": label_id(labels, pick(&text))}),
            )
            .await;
        assert_eq!(res.status, StatusCode::OK, "{}", String::from_utf8_lossy(&res.body));
        n += 1;
    }
    n
}

#[tokio::test]
async fn health_and_error_format() {
    let h = Harness::new().await;
    for path in ["/healthz", "/api/v1/healthz"] {
        let res = h.send(Method::GET, path, None, None, Vec::new()).await;
        assert_eq!(res.status, StatusCode::OK);
        assert_eq!(res.json()["status"], json!("ok"));
    }
    let res = h.get("/api/v1/nothing-here", &h.admin_token).await;
    assert_error(&res, StatusCode::NOT_FOUND, "not_found");
    let res = h.send(Method::PUT, "/api/v1/projects", Some(&h.admin_token), None, Vec::new()).await;
    assert_error(&res, StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed");
    let res = h
        .send(Method::POST, "/api/v1/sessions", None, Some("application/json"), b"{not json".to_vec())
        .await;
    assert_error(&res, StatusCode::BAD_REQUEST, "bad_request");
    let res = h
        .post_json("/api/v1/sessions", None, json!({"username": "admin", "password": "wrong"}))
        .await;
    assert_error(&res, StatusCode::UNAUTHORIZED, "invalid_credentials");
    let res = h.get("/api/v1/projects/not-an-id", &h.admin_token).await;
    assert_error(&res, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn project_creation_is_validated() {
    let h = Harness::new().await;
    let res = h.create_project("p", &["a", "b"], "ID,Body\n1,x\n", json!({}), &[]).await;
    assert_error(&res, StatusCode::BAD_REQUEST, "missing_text_column");

    let res = h
        .create_project("", &["only"], &corpus_csv(10), json!({"batch_size": 0}), &["ghost"])
        .await;
    let body = assert_error(&res, StatusCode::BAD_REQUEST, "bad_request");
    let details: Vec<String> = body["details"].as_array().unwrap().iter().map(|d| d.as_str().unwrap().to_string()).collect();
    assert!(details.len() >= 3, "{details:?}");
    assert!(details.iter().any(|d| d.contains("ghost")), "{details:?}");
    assert!(details.iter().any(|d| d.contains("batch_size")), "{details:?}");

    let res = h
        .send(
            Method::POST,
            "/api/v1/projects",
            Some(&h.admin_token),
            Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
            common::multipart(&[Part {
                name: "data",
                filename: Some("d.csv"),
                content_type: "text/csv",
                bytes: b"Text\nx\n".to_vec(),
            }]),
        )
        .await;
    let body = assert_error(&res, StatusCode::BAD_REQUEST, "bad_request");
    assert!(body["details"].as_array().unwrap().len() >= 2);

    let res = h
        .create_project("dupes", &["a", "b"], "Text,Label\nsame,a\nsame,a\nother,zzz\nfresh,\n", json!({"batch_size": 1}), &[])
        .await;
    assert_eq!(res.status, StatusCode::CREATED);
    let ingest = &res.json()["ingest"];
    assert_eq!(ingest["rows_accepted"], json!(2));
    assert_eq!(ingest["duplicates_dropped"], json!(1));
    assert_eq!(ingest["issues"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn oversized_uploads_are_rejected() {
    let h = Harness::with_config(|c| c.max_upload_bytes = 4096).await;
    let res = h.create_project("big", &["a", "b"], &corpus_csv(400), json!({}), &[]).await;
    assert_error(&res, StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large");
    let res = h.create_project("small", &["a", "b"], &corpus_csv(20), json!({}), &[]).await;
    assert_eq!(res.status, StatusCode::CREATED);
    let huge = json!({"username": "x".repeat(8000), "password": "y"});
    let res = h.post_json("/api/v1/sessions", None, huge).await;
    assert_error(&res, StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn coder_and_admin_flow() {
    let h = Harness::new().await;
    let project = new_project(&h, &corpus_csv(40), json!({"batch_size": 10, "cv_folds": 2})).await;
    let labels = h.label_ids(&project).await;
    let coder = h.add_coder(&project, "casey").await;
    let res = h
        .post_json(&format!("/api/v1/projects/{project}/coders"), Some(&h.admin_token), json!({"username": "casey"}))
        .await;
    assert_eq!(res.status, StatusCode::OK);
    assert!(res.json()["password"].is_null());

    let listed = h.get("/api/v1/projects", &coder).await.json();
    assert_eq!(listed.as_array().unwrap().len(), 1);

    // label, then correct it from history
    let served = h.get(&format!("/api/v1/projects/{project}/next"), &coder).await.json();
    let a = &served["assignment"];
    assert_eq!(a["labels"].as_array().unwrap().len(), 2);
    assert!(a["codebook_url"].is_null());
    let again = h.get(&format!("/api/v1/projects/{project}/next"), &coder).await.json();
    assert_eq!(again["assignment"]["id"], a["id"], "an open lease is served again");
    let text = a["record"]["text"].as_str().unwrap();
    let wrong = if true_label(text) == "a" { "b" } else { "a" };
    let res = h
        .post_json(
            &format!("/api/v1/assignments/{}/label", a["id"].as_str().unwrap()),
            Some(&coder),
            json!({"label_id": label_id(&labels, wrong)}),
        )
        .await;
    assert_eq!(res.json()["outcome"], json!("finalized"));
    let history = h.get(&format!("/api/v1/projects/{project}/history?per_page=5"), &coder).await.json();
    assert_eq!(history["total"], json!(1));
    let annotation = history["items"][0]["annotation_id"].as_str().unwrap().to_string();
    let res = h
        .patch_json(&format!("/api/v1/annotations/{annotation}"), &coder, json!({"label_id": label_id(&labels, true_label(text))}))
        .await;
    assert_eq!(res.status, StatusCode::OK);
    let res = h
        .patch_json(&format!("/api/v1/annotations/{annotation}"), &coder, json!({"label_id": label_id(&labels, wrong)}))
        .await;
    assert_error(&res, StatusCode::CONFLICT, "conflict");
    let history = h.get(&format!("/api/v1/projects/{project}/history"), &coder).await.json();
    assert_eq!(history["items"][0]["label"], json!(true_label(text)));

    // skip goes to the admin queue
    let served = h.get(&format!("/api/v1/projects/{project}/next"), &coder).await.json();
    let skip_id = served["assignment"]["id"].as_str().unwrap().to_string();
    let skipped_record = served["assignment"]["record"]["id"].clone();
    let skipped_text = served["assignment"]["record"]["text"].as_str().unwrap().to_string();
    let res = h.post_json(&format!("/api/v1/assignments/{skip_id}/skip"), Some(&coder), json!({})).await;
    assert_eq!(res.json()["skipped"], skipped_record);
    let queue = h.get(&format!("/api/v1/projects/{project}/admin/skipped"), &h.admin_token).await.json();
    assert_eq!(queue.as_array().unwrap().len(), 1);
    assert_eq!(queue[0]["id"], skipped_record);
    let record = skipped_record.as_str().unwrap();
    let res = h
        .post_json(&format!("/api/v1/records/{record}/adjudicate"), Some(&h.admin_token), json!({"discard": true, "label_id": label_id(&labels, "a")}))
        .await;
    assert_error(&res, StatusCode::BAD_REQUEST, "bad_request");
    let res = h
        .post_json(
            &format!("/api/v1/records/{record}/adjudicate"),
            Some(&h.admin_token),
            json!({"label_id": label_id(&labels, true_label(&skipped_text))}),
        )
        .await;
    assert_eq!(res.status, StatusCode::OK);
    assert_eq!(res.json()["record"]["status"], json!("labeled"));
    let res = h
        .post_json(&format!("/api/v1/records/{record}/adjudicate"), Some(&h.admin_token), json!({"discard": true}))
        .await;
    assert_eq!(res.status, StatusCode::CONFLICT);

    // batch size is frozen, other settings are not
    let res = h.patch_json(&format!("/api/v1/projects/{project}/settings"), &h.admin_token, json!({"batch_size": 5})).await;
    assert_error(&res, StatusCode::CONFLICT, "conflict");
    let res = h
        .patch_json(&format!("/api/v1/projects/{project}/settings"), &h.admin_token, json!({"irr_overlap_percent": 101}))
        .await;
    assert_eq!(res.status, StatusCode::BAD_REQUEST);
    let res = h
        .patch_json(&format!("/api/v1/projects/{project}/settings"), &h.admin_token, json!({"al_method": "entropy"}))
        .await;
    assert_eq!(res.json()["al_method"], json!("entropy"));

    assert_error(&h.get(&format!("/api/v1/projects/{project}/export/model"), &h.admin_token).await, StatusCode::NOT_FOUND, "model_unavailable");
    assert_error(&h.get(&format!("/api/v1/projects/{project}/codebook"), &coder).await, StatusCode::NOT_FOUND, "not_found");

    let finished = label_all(&h, &project, &coder, &labels, 8, true_label).await;
    assert_eq!(finished, 8);
    let detail = h.wait_for_batches(&project, 2).await;
    assert_eq!(detail["batches"][0]["status"], json!("complete"));
    assert_eq!(detail["batches"][1]["selection_method"], json!("entropy"));
    assert_eq!(detail["snapshots"], json!(1));

    let model = h.get(&format!("/api/v1/projects/{project}/metrics/model"), &h.admin_token).await.json();
    assert_eq!(model["enabled"], json!(true));
    assert_eq!(model["series"][0]["labeled_count"], json!(10));
    let counts = h.get(&format!("/api/v1/projects/{project}/metrics/labels"), &h.admin_token).await.json();
    let casey = counts["coders"].as_array().unwrap().iter().find(|c| c["username"] == json!("casey")).unwrap();
    let total: u64 = casey["counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 9);
    let timing = h.get(&format!("/api/v1/projects/{project}/metrics/timing"), &h.admin_token).await.json();
    assert_eq!(timing["coders"][0]["stats"]["count"], json!(9));
    let irr = h.get(&format!("/api/v1/projects/{project}/metrics/irr"), &h.admin_token).await.json();
    assert_eq!(irr, json!({"enabled": false}));

    let res = h.get(&format!("/api/v1/projects/{project}/export/data"), &h.admin_token).await;
    assert_eq!(res.headers[header::CONTENT_TYPE], "application/zip");
    assert!(res.headers[header::CONTENT_DISPOSITION].to_str().unwrap().starts_with("attachment"));
    let files = read_zip(&res.body).unwrap();
    let csv = String::from_utf8(files.iter().find(|(n, _)| n == LABELED_DATA_FILE).unwrap().1.clone()).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("ID,Text,Label"));
    for line in csv.lines().skip(1) {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(line.as_bytes());
        let row = rdr.records().next().unwrap().unwrap();
        assert_eq!(true_label(&row[1]), &row[2], "{line}");
    }

    let res = h.get(&format!("/api/v1/projects/{project}/export/model"), &h.admin_token).await;
    assert_eq!(res.status, StatusCode::OK);
    let bundle = read_model_bundle(&res.body).unwrap();
    assert_eq!(bundle.model.classes, vec!["a".to_string(), "b".to_string()]);
    assert_eq!(bundle.model.metadata.batch_index, 0);
    let p = bundle.model.predict_proba("alpha beta gamma").unwrap();
    assert!(p[0] > p[1]);
}

#[tokio::test]
async fn admin_label_and_discard() {
    let h = Harness::new().await;
    let project = new_project(&h, &corpus_csv(20), json!({"batch_size": 4})).await;
    let labels = h.label_ids(&project).await;
    let ids: Vec<(String, String)> = h
        .app
        .read(project.parse().unwrap(), |s| Ok(s.records().iter().map(|r| (r.id.to_string(), r.text.clone())).collect()))
        .unwrap();
    let (first, text) = &ids[0];
    let res = h
        .post_json(&format!("/api/v1/records/{first}/admin-label"), Some(&h.admin_token), json!({"label_id": label_id(&labels, true_label(text))}))
        .await;
    assert_eq!(res.status, StatusCode::OK);
    assert_eq!(res.json()["record"]["status"], json!("labeled"));
    let res = h
        .post_json(&format!("/api/v1/records/{first}/admin-label"), Some(&h.admin_token), json!({"label_id": label_id(&labels, "a")}))
        .await;
    assert_eq!(res.status, StatusCode::CONFLICT);
    let (second, _) = &ids[1];
    let res = h.post_json(&format!("/api/v1/records/{second}/discard"), Some(&h.admin_token), json!({})).await;
    assert_eq!(res.json()["record"]["status"], json!("discarded"));
    let res = h.post_json(&format!("/api/v1/records/{second}/discard"), Some(&h.admin_token), json!({})).await;
    assert_error(&res, StatusCode::CONFLICT, "conflict");
    let res = h
        .post_json(&format!("/api/v1/records/{}/admin-label", labels[0].1), Some(&h.admin_token), json!({"label_id": labels[0].1}))
        .await;
    assert_error(&res, StatusCode::NOT_FOUND, "not_found");
    let detail = h.get(&format!("/api/v1/projects/{project}"), &h.admin_token).await.json();
    assert_eq!(detail["status_counts"]["discarded"], json!(1));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn double_coding_and_adjudication() {
    let h = Harness::new().await;
    let project = new_project(
        &h,
        &corpus_csv(30),
        json!({"batch_size": 6, "irr_enabled": true, "irr_overlap_percent": 100, "al_method": "random"}),
    )
    .await;
    let labels = h.label_ids(&project).await;
    let ana = h.add_coder(&project, "ana").await;
    let ben = h.add_coder(&project, "ben").await;
    assert_eq!(label_all(&h, &project, &ana, &labels, 100, true_label).await, 6);
    // ben calls everything "a"
    assert_eq!(label_all(&h, &project, &ben, &labels, 100, |_| "a").await, 6);

    let disagreements = h.get(&format!("/api/v1/projects/{project}/admin/disagreements"), &h.admin_token).await.json();
    let list = disagreements.as_array().unwrap();
    assert!(!list.is_empty());
    for d in list {
        assert_eq!(d["votes"].as_array().unwrap().len(), 2);
        assert_eq!(true_label(d["record"]["text"].as_str().unwrap()), "b");
    }

    let irr = h.get(&format!("/api/v1/projects/{project}/metrics/irr"), &h.admin_token).await.json();
    assert_eq!(irr["enabled"], json!(true));
    assert_eq!(irr["statistic"], json!("cohen"));
    assert_eq!(irr["item_count"], json!(6));
    let agree = 6 - list.len();
    assert!((irr["percent_agreement"].as_f64().unwrap() - agree as f64 / 6.0).abs() < 1e-12);
    let counts = irr["matrix"]["counts"].as_array().unwrap();
    let total: u64 = counts.iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 6);
    let pair = h
        .get(&format!("/api/v1/projects/{project}/metrics/irr?coder_a=ana&coder_b=ben"), &h.admin_token)
        .await
        .json();
    assert_eq!(pair["matrix"]["coders"], json!(["ana", "ben"]));
    let res = h.get(&format!("/api/v1/projects/{project}/metrics/irr?coder_a=ana"), &h.admin_token).await;
    assert_eq!(res.status, StatusCode::BAD_REQUEST);

    for d in list {
        let record = d["record"]["id"].as_str().unwrap();
        let res = h
            .post_json(&format!("/api/v1/records/{record}/adjudicate"), Some(&h.admin_token), json!({"label_id": label_id(&labels, "b")}))
            .await;
        assert_eq!(res.status, StatusCode::OK);
    }
    let detail = h.wait_for_batches(&project, 2).await;
    assert_eq!(detail["batches"][0]["status"], json!("complete"));
    assert_eq!(detail["batches"][1]["selection_method"], json!("random"));
    let model = h.get(&format!("/api/v1/projects/{project}/metrics/model"), &h.admin_token).await.json();
    assert_eq!(model, json!({"enabled": false, "series": []}));
    let res = h.get(&format!("/api/v1/projects/{project}/export/model"), &h.admin_token).await;
    assert_error(&res, StatusCode::NOT_FOUND, "model_unavailable");
}

#[tokio::test]
async fn codebook_is_served_to_members() {
    let h = Harness::new().await;
    let metadata = json!({"name": "cb", "description": "", "settings": {"batch_size": 2}});
    let form = common::multipart(&[
        Part { name: "metadata", filename: None, content_type: "application/json", bytes: metadata.to_string().into_bytes() },
        Part { name: "labels", filename: None, content_type: "application/json", bytes: br#"[{"name":"a","description":"first"},"b"]"#.to_vec() },
        Part { name: "data", filename: Some("d.csv"), content_type: "text/csv", bytes: corpus_csv(6).into_bytes() },
        Part { name: "codebook", filename: Some("guide.pdf"), content_type: "application/pdf", bytes: b"%PDF-1.4 guide".to_vec() },
    ]);
    let res = h
        .send(Method::POST, "/api/v1/projects", Some(&h.admin_token), Some(&format!("multipart/form-data; boundary={BOUNDARY}")), form)
        .await;
    assert_eq!(res.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&res.body));
    let project = res.json()["id"].as_str().unwrap().to_string();
    let coder = h.add_coder(&project, "reader").await;
    let next = h.get(&format!("/api/v1/projects/{project}/next"), &coder).await.json();
    let url = next["assignment"]["codebook_url"].as_str().unwrap().to_string();
    assert_eq!(next["assignment"]["labels"][0]["description"], json!("first"));
    let res = h.get(&url, &coder).await;
    assert_eq!(res.status, StatusCode::OK);
    assert_eq!(res.headers[header::CONTENT_TYPE], "application/pdf");
    assert_eq!(res.body, b"%PDF-1.4 guide");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn state_survives_a_restart() {
    let h = Harness::new().await;
    let project = new_project(&h, &corpus_csv(24), json!({"batch_size": 4})).await;
    let labels = h.label_ids(&project).await;
    let coder = h.add_coder(&project, "dana").await;
    assert_eq!(label_all(&h, &project, &coder, &labels, 4, true_label).await, 4);
    h.wait_for_batches(&project, 2).await;
    let served = h.get(&format!("/api/v1/projects/{project}/next"), &coder).await.json();
    let lease = served["assignment"]["id"].clone();
    let before = h.get(&format!("/api/v1/projects/{project}"), &h.admin_token).await.json();
    let export_before = h.get(&format!("/api/v1/projects/{project}/export/data"), &h.admin_token).await.body;

    let h = h.reopen().await;
    let after = h.get(&format!("/api/v1/projects/{project}"), &h.admin_token).await.json();
    assert_eq!(before, after);
    let export_after = h.get(&format!("/api/v1/projects/{project}/export/data"), &h.admin_token).await.body;
    assert_eq!(export_before, export_after);
    let user = h.app.store.user_by_name("dana").unwrap().unwrap().coder;
    let session = labelforge_api::auth::new_session(&user, std::time::Duration::from_secs(60), chrono::Utc::now());
    h.app.store.insert_session(&session).unwrap();
    let served = h.get(&format!("/api/v1/projects/{project}/next"), &session.token).await.json();
    assert_eq!(served["assignment"]["id"], lease, "the open lease survives");
}

#[tokio::test]
async fn history_pages() {
    let h = Harness::new().await;
    let project = new_project(&h, &corpus_csv(20), json!({"batch_size": 7, "al_method": "random"})).await;
    let labels = h.label_ids(&project).await;
    let coder = h.add_coder(&project, "pat").await;
    assert_eq!(label_all(&h, &project, &coder, &labels, 7, true_label).await, 7);
    let page = h.get(&format!("/api/v1/projects/{project}/history?page=2&per_page=3"), &coder).await.json();
    assert_eq!(page["total"], json!(7));
    assert_eq!(page["items"].as_array().unwrap().len(), 3);
    let last = h.get(&format!("/api/v1/projects/{project}/history?page=3&per_page=3"), &coder).await.json();
    assert_eq!(last["items"].as_array().unwrap().len(), 1);
    let all = h.get(&format!("/api/v1/projects/{project}/history"), &coder).await.json();
    let times: Vec<&str> = all["items"].as_array().unwrap().iter().map(|i| i["created_at"].as_str().unwrap()).collect();
    let mut sorted = times.clone();
    sorted.sort_by(|a, b| b.cmp(a));
    assert_eq!(times, sorted, "newest first");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn prelabels_seed_the_first_model() {
    let h = Harness::new().await;
    let mut csv = String::from("ID,Text,Label\n");
    for i in 0..45 {
        let (topic, label) = match i % 3 {
            0 => ("alpha beta", "zeta"),
            1 => ("omega sigma", "mid"),
            _ => ("kappa lambda", "alpha"),
        };
        let pre = if i < 9 { label } else { "" };
        csv.push_str(&format!("x{i},{topic} note{i},{pre}\n"));
    }
    let res = h
        .create_project("three", &["zeta", "mid", "alpha"], &csv, json!({"batch_size": 6, "cv_folds": 2}), &[])
        .await;
    assert_eq!(res.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&res.body));
    let body = res.json();
    assert_eq!(body["batch"]["selection_method"], json!("least_confident"));
    let project = body["id"].as_str().unwrap().to_string();
    let labels = h.label_ids(&project).await;
    let coder = h.add_coder(&project, "lee").await;
    let truth = |text: &str| -> &'static str {
        if text.contains("alpha beta") {
            "zeta"
        } else if text.contains("omega") {
            "mid"
        } else {
            "alpha"
        }
    };

    let next = h.get(&format!("/api/v1/projects/{project}/next"), &coder).await.json();
    let id = next["assignment"]["id"].as_str().unwrap().to_string();
    let text = next["assignment"]["record"]["text"].as_str().unwrap().to_string();
    let res = h
        .post_json(&format!("/api/v1/assignments/{id}/label"), Some(&coder), json!({"label_id": project}))
        .await;
    assert_eq!(res.status, StatusCode::BAD_REQUEST, "unknown label id");
    let good = json!({"label_id": label_id(&labels, truth(&text))});
    let res = h.post_json(&format!("/api/v1/assignments/{id}/label"), Some(&coder), good.clone()).await;
    assert_eq!(res.status, StatusCode::OK);
    let res = h.post_json(&format!("/api/v1/assignments/{id}/label"), Some(&coder), good).await;
    assert_eq!(res.status, StatusCode::CONFLICT, "replayed label");

    for batch in 1..=2 {
        let done = if batch == 1 { 5 } else { 6 };
        assert_eq!(label_all(&h, &project, &coder, &labels, done, truth).await, done);
        h.wait_for_batches(&project, batch + 1).await;
    }
    let model = h.get(&format!("/api/v1/projects/{project}/metrics/model"), &h.admin_token).await.json();
    let series = model["series"].as_array().unwrap();
    assert_eq!(series.len(), 2);
    assert_eq!(series[0]["batch_index"], json!(0));
    assert_eq!(series[1]["labeled_count"], json!(21));

    let res = h.get(&format!("/api/v1/projects/{project}/export/data"), &h.admin_token).await;
    let files = read_zip(&res.body).unwrap();
    let mut rdr = csv::Reader::from_reader(files[0].1.as_slice());
    let got: Vec<String> = rdr.records().map(|r| r.unwrap()[2].to_string()).collect();
    assert_eq!(got.len(), 21);
    let mut sorted = got.clone();
    sorted.sort();
    assert_eq!(got, sorted, "rows sorted by label");
    assert_eq!(got.first().map(String::as_str), Some("alpha"));
    assert_eq!(got.last().map(String::as_str), Some("zeta"));
}
