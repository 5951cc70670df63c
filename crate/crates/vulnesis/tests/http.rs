use std::process::Command;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use vulnesis::api::{router, SCHEMA_HEADER};
use vulnesis::Workspace;

struct Reply {
    status: StatusCode,
    content_type: String,
    schema: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }

    fn ok(self) -> Reply {
        assert!(self.status.is_success(), "{}: {}", self.status, self.text());
        self
    }
}

async fn send(app: &Router, method: Method, uri: &str, content_type: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder().method(method).uri(uri).header(header::CONTENT_TYPE, content_type).body(body.into());
    let res = app.clone().oneshot(req.unwrap()).await.unwrap();
    let status = res.status();
    let content_type =
        res.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let schema = res.headers().get(SCHEMA_HEADER).map(|v| v.to_str().unwrap().to_string());
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, content_type, schema, body }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, "application/json", Body::empty()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::POST, uri, "application/json", body.to_string()).await
}

fn app() -> (TempDir, Router) {
    let dir = TempDir::new().unwrap();
    let app = router(Workspace::new(dir.path()));
    (dir, app)
}

fn cadastre_csv() -> String {
    let mut s = String::from("dep,centro,distrito,manzana,lote,edificacion,pared,techo,uso,estado,anio\n");
    for i in 1..=12 {
        let wall = if i % 3 == 0 { "ADOBE" } else { "BLOQUE" };
        s += &format!("08,01,02,U20{},{i},1,{wall},ZINC,HAB,BUENO,{}\n", i % 2, 1950 + 3 * i);
    }
    s
}

/// Fills the class and location columns of a report B export.
fn fill_report_b(report: &str) -> String {
    let mut rdr = csv::Reader::from_reader(report.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).unwrap();
    for (i, row) in rdr.records().enumerate() {
        let row = row.unwrap();
        let filled: Vec<String> = header
            .iter()
            .zip(row.iter())
            .map(|(h, v)| match h {
                "x" => format!("{}", 10 + i),
                "y" => "5".into(),
                "observer" => "obs".into(),
                "date" => "2007-05-01".into(),
                p if p.starts_with('p') && p[1..].parse::<usize>().is_ok() => {
                    let k: usize = p[1..].parse().unwrap();
                    ["A", "B", "C", "D"][(i + k) % 4].into()
                }
                _ => v.to_string(),
            })
            .collect();
        w.write_record(&filled).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Drives a project from creation to a surveyed, propagated state.
async fn surveyed_project(app: &Router) {
    post(app, "/projects", json!({"id": "demo", "name": "Demo", "cutoff_year": 1972})).await.ok();
    let r = send(app, Method::POST, "/projects/demo/cadastre", "text/csv", cadastre_csv()).await.ok();
    assert_eq!(r.json()["imported"], 12);

    for (category, code) in
        [("Wall", "ADOBE"), ("Wall", "BLOQUE"), ("Roof", "ZINC"), ("Use", "HAB"), ("State", "BUENO")]
    {
        post(app, "/projects/demo/types", json!({"action": "register", "category": category, "code": code})).await.ok();
    }
    post(app, "/projects/demo/state", json!({"target": "TypesReconciled"})).await.ok();

    let subs = get(app, "/projects/demo/subtypologies").await.ok().json();
    let keys: Vec<Value> = subs.as_array().unwrap().iter().map(|s| s["key"].clone()).collect();
    assert_eq!(keys.len(), 4);
    let t = post(app, "/projects/demo/typologies", json!({"name": "Mamposteria", "description": ""})).await;
    assert_eq!(t.status, StatusCode::CREATED);
    let tid = t.json()["id"].as_str().unwrap().to_string();
    post(app, &format!("/projects/demo/typologies/{tid}/keys"), json!({ "keys": keys })).await.ok();
    post(app, "/projects/demo/state", json!({"target": "TypologiesDefined"})).await.ok();

    let sample = post(app, "/projects/demo/sample", json!({"mode": "TotalCount", "value": 4.0, "seed": 7})).await.ok();
    assert_eq!(sample.json()["selected"].as_array().unwrap().len(), 4);
    post(app, "/projects/demo/state", json!({"target": "Sampled"})).await.ok();
    post(app, "/projects/demo/state", json!({"target": "FieldWork"})).await.ok();

    let report_b = get(app, "/projects/demo/field-forms?report=b").await.ok();
    assert!(report_b.content_type.starts_with("text/csv"));
    let filled = fill_report_b(&report_b.text());
    let ingest = send(app, Method::POST, "/projects/demo/field-data", "text/csv", filled).await.ok().json();
    assert_eq!(ingest["applied"].as_array().unwrap().len(), 4);
    assert!(ingest["errors"].as_array().unwrap().is_empty());

    let prop = post(app, "/projects/demo/propagate", json!({})).await.ok().json();
    assert_eq!(prop["propagated"], 8);
}

#[tokio::test]
async fn empty_root_lists_nothing_then_one_project() {
    let (_dir, app) = app();
    let r = get(&app, "/projects").await.ok();
    assert_eq!(r.json(), json!([]));
    assert_eq!(r.schema.as_deref(), Some("1"));

    let created = post(&app, "/projects", json!({"id": "p1", "name": "Uno"})).await;
    assert_eq!(created.status, StatusCode::CREATED);
    assert_eq!(created.json()["state"], "Created");

    let list = get(&app, "/projects").await.ok().json();
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], "p1");

    let again = post(&app, "/projects", json!({"id": "p1", "name": "Uno"})).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    assert_eq!(again.json()["code"], "ProjectExists");
}

#[tokio::test]
async fn error_bodies_carry_code_and_schema() {
    let (_dir, app) = app();
    let missing = get(&app, "/projects/nope").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.json()["code"], "UnknownProject");
    assert_eq!(missing.json()["schema_version"], 1);
    assert_eq!(missing.schema.as_deref(), Some("1"));

    let route = get(&app, "/nowhere").await;
    assert_eq!(route.status, StatusCode::NOT_FOUND);
    assert_eq!(route.json()["code"], "NotFound");

    let garbage = send(&app, Method::POST, "/projects", "application/json", "{not json").await;
    assert_eq!(garbage.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(garbage.json()["code"], "Invalid");

    post(&app, "/projects", json!({"id": "p", "name": "p"})).await.ok();
    let illegal = post(&app, "/projects/p/state", json!({"target": "Closed"})).await;
    assert_eq!(illegal.status, StatusCode::CONFLICT);
    assert_eq!(illegal.json()["code"], "IllegalTransition");

    let bad_ag = post(&app, "/projects/p/scenarios", json!({"ag": -0.1})).await;
    assert_eq!(bad_ag.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn full_workflow_over_http() {
    let (_dir, app) = app();
    surveyed_project(&app).await;

    let s = post(&app, "/projects/demo/scenarios", json!({"name": "base", "ag": 0.2})).await;
    assert_eq!(s.status, StatusCode::CREATED);
    let sid = s.json()["id"].as_str().unwrap().to_string();
    assert_eq!(s.json()["buildings"], 12);

    let dup = post(&app, "/projects/demo/scenarios", json!({"ag": 0.2})).await;
    assert_eq!(dup.status, StatusCode::CONFLICT);
    assert_eq!(dup.json()["code"], "DuplicateAcceleration");

    let surveyed = get(&app, "/projects/demo/buildings?survey_kind=Encuestadas").await.ok().json();
    assert_eq!(surveyed["total"], 12);
    assert_eq!(surveyed["filtered"], 4);

    let map = get(&app, &format!("/projects/demo/maps?metric=damage&scenario={sid}&granularity=building")).await.ok();
    assert!(map.content_type.starts_with("application/geo+json"));
    let fc = map.json();
    assert_eq!(fc["type"], "FeatureCollection");
    assert_eq!(fc["features"].as_array().unwrap().len(), 12);
    assert_eq!(fc["features"][0]["properties"]["scenario_id"], sid.as_str());

    let block = get(&app, "/projects/demo/maps?granularity=block").await;
    assert_eq!(block.status, StatusCode::CONFLICT);
    assert_eq!(block.json()["code"], "MissingLayer");

    post(&app, "/projects/demo/settings", json!({"vuln_thresholds": [30.0, 60.0]})).await.ok();
    let stale = get(&app, "/projects/demo/maps").await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.json()["code"], "StaleProject");

    post(&app, "/projects/demo/recompute", json!({})).await.ok();
    get(&app, "/projects/demo/maps").await.ok();

    let summary = get(&app, "/projects/demo").await.ok().json();
    assert_eq!(summary["state"], "FieldWork");
    assert_eq!(summary["stale"], false);
}

#[tokio::test]
async fn cli_map_export_matches_api_bytes() {
    let (dir, app) = app();
    surveyed_project(&app).await;
    let api = get(&app, "/projects/demo/maps?metric=vulnerability&granularity=building").await.ok();

    let out = dir.path().join("map.geojson");
    let status = Command::new(env!("CARGO_BIN_EXE_vulnesis"))
        .args(["--root", dir.path().to_str().unwrap(), "map", "--project", "demo"])
        .args(["--metric", "vulnerability", "--granularity", "building", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(&out).unwrap(), api.body);
}

#[tokio::test]
async fn cli_reports_error_codes() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vulnesis"))
        .args(["--root", dir.path().to_str().unwrap(), "show", "--project", "ghost"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownProject"));
}

#[tokio::test]
async fn serves_over_a_real_socket() {
    let dir = TempDir::new().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(vulnesis::api::serve(listener, Workspace::new(dir.path())));

    let raw = tokio::task::spawn_blocking(move || {
        use std::io::{Read, Write};
        let mut stream = std::net::TcpStream::connect(addr).unwrap();
        stream.write_all(b"GET /projects HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut raw = String::new();
        stream.read_to_string(&mut raw).unwrap();
        raw
    })
    .await
    .unwrap();
    assert!(raw.starts_with("HTTP/1.1 200"), "{raw}");
    assert!(raw.to_ascii_lowercase().contains("x-schema-version: 1"));
    assert!(raw.ends_with("[]"));
    server.abort();
}
