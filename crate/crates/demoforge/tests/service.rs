mod common;

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use demoforge::core::correspondence::{CorrespondenceParams, DescriptorBackend, DescriptorMap, GeometricBackend, ViewSet};
use demoforge::core::primitives::{self, TeapotParams};
use demoforge::core::Vec3;
use demoforge::dmap::{self, DescriptorFilesBackend, ModelInfo};
use demoforge::files::write_json;
use demoforge::service::{ServiceBackend, ServiceOptions};
use demoforge::Error;

#[derive(Debug, Clone)]
struct Request {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

enum Reply {
    Status(u16),
    Json(String),
    /// DMAP of the PNG's size with this many channels.
    Map(usize),
}

/// Minimal HTTP/1.1 server answering queued replies per path, then the
/// last reply forever.
struct MockServer {
    url: String,
    log: Arc<Mutex<Vec<Request>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut r = BufReader::new(stream);
    let mut line = String::new();
    if r.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        r.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut req = Request { method, path, headers, body: Vec::new() };
    if let Some(n) = req.header("content-length") {
        let mut body = vec![0; n.parse().ok()?];
        r.read_exact(&mut body).ok()?;
        req.body = body;
    } else if req.header("transfer-encoding").is_some_and(|v| v.contains("chunked")) {
        loop {
            let mut size = String::new();
            r.read_line(&mut size).ok()?;
            let n = usize::from_str_radix(size.trim(), 16).ok()?;
            let mut chunk = vec![0; n + 2];
            r.read_exact(&mut chunk).ok()?;
            if n == 0 {
                break;
            }
            req.body.extend_from_slice(&chunk[..n]);
        }
    }
    Some(req)
}

fn png_size(body: &[u8]) -> (usize, usize) {
    let at = body.windows(8).position(|w| w == b"\x89PNG\r\n\x1a\n").expect("png in body");
    let be = |i: usize| u32::from_be_bytes(body[at + i..at + i + 4].try_into().unwrap()) as usize;
    (be(16), be(20))
}

fn respond(stream: &mut TcpStream, status: u16, content_type: &str, body: &[u8]) {
    let head = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(body);
}

impl MockServer {
    fn start(routes: Vec<(&'static str, Vec<Reply>)>) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&log);
        let mut routes: Vec<(&str, VecDeque<Reply>)> = routes.into_iter().map(|(p, r)| (p, r.into())).collect();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let Some(req) = read_request(&mut stream) else { continue };
                seen.lock().unwrap().push(req.clone());
                let Some((_, queue)) = routes.iter_mut().find(|(p, _)| *p == req.path) else {
                    respond(&mut stream, 404, "text/plain", b"no route");
                    continue;
                };
                let reply = if queue.len() > 1 { queue.pop_front().unwrap() } else { clone_reply(&queue[0]) };
                match reply {
                    Reply::Status(s) => respond(&mut stream, s, "text/plain", b"busy"),
                    Reply::Json(j) => respond(&mut stream, 200, "application/json", j.as_bytes()),
                    Reply::Map(dim) => {
                        let (w, h) = png_size(&req.body);
                        let data = (0..w * h * dim).map(|i| ((i % 97) as f32) / 97.0).collect();
                        let map = DescriptorMap::new(w, h, dim, data).unwrap();
                        respond(&mut stream, 200, "application/octet-stream", &dmap::encode(&map));
                    }
                }
            }
        });
        MockServer { url, log }
    }

    fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }
}

fn clone_reply(r: &Reply) -> Reply {
    match r {
        Reply::Status(s) => Reply::Status(*s),
        Reply::Json(j) => Reply::Json(j.clone()),
        Reply::Map(d) => Reply::Map(*d),
    }
}

fn fast() -> ServiceOptions {
    ServiceOptions { backoff_ms: 1, ..ServiceOptions::default() }
}

fn small_params() -> CorrespondenceParams {
    CorrespondenceParams { views: 2, resolution: 32, ..CorrespondenceParams::default() }
}

const HEALTH: &str = r#"{"model": "toy-vit-s14", "dim": 3}"#;

#[test]
fn retries_unavailable_then_describes() {
    let server = MockServer::start(vec![
        ("/health", vec![Reply::Status(503), Reply::Json(HEALTH.into())]),
        ("/describe", vec![Reply::Status(503), Reply::Status(503), Reply::Map(3)]),
    ]);
    let backend = ServiceBackend::connect(&server.url, ServiceOptions { stride: 4, ..fast() }).unwrap();
    assert_eq!(backend.model(), &ModelInfo { model: "toy-vit-s14".into(), dim: 3 });
    assert_eq!(backend.name(), "service:toy-vit-s14");

    let mesh = primitives::cuboid(Vec3::new(0.1, 0.08, 0.06));
    let views = ViewSet::build(&mesh, "box", &backend, &small_params()).unwrap();
    assert_eq!(views.maps.len(), 2);
    assert_eq!((views.maps[0].width(), views.maps[0].height(), views.maps[0].dim()), (32, 32, 3));

    let reqs = server.requests();
    let health: Vec<_> = reqs.iter().filter(|r| r.path == "/health").collect();
    assert_eq!(health.len(), 2);
    assert!(health.iter().all(|r| r.method == "GET"));
    let describe: Vec<_> = reqs.iter().filter(|r| r.path == "/describe").collect();
    // two 503s, then one success per view
    assert_eq!(describe.len(), 4);
    let last = describe.last().unwrap();
    assert_eq!(last.method, "POST");
    assert!(last.header("content-type").unwrap().starts_with("multipart/form-data"));
    let body = String::from_utf8_lossy(&last.body);
    assert!(body.contains("name=\"image\""));
    assert!(body.contains("image/png"));
    assert!(body.contains("name=\"params\""));
    assert!(body.contains("\"stride\":4"), "{body}");
    assert!(body.contains("\"mesh_id\":\"box\""));
    assert!(body.contains("\"view\":1"));
}

#[test]
fn errors_are_not_retried_and_retries_run_out() {
    let server = MockServer::start(vec![("/health", vec![Reply::Status(500)])]);
    assert!(matches!(ServiceBackend::connect(&server.url, fast()), Err(Error::Service(_))));
    assert_eq!(server.requests().len(), 1);

    let server = MockServer::start(vec![("/health", vec![Reply::Status(503)])]);
    let opts = ServiceOptions { retries: 2, ..fast() };
    assert!(matches!(ServiceBackend::connect(&server.url, opts), Err(Error::Service(_))));
    assert_eq!(server.requests().len(), 3);

    let server = MockServer::start(vec![("/health", vec![Reply::Json("{\"model\": 1}".into())])]);
    assert!(matches!(ServiceBackend::connect(&server.url, fast()), Err(Error::Service(_))));

    let bad_stride = ServiceOptions { stride: 3, ..fast() };
    assert!(matches!(ServiceBackend::connect("http://127.0.0.1:9", bad_stride), Err(Error::Config(_))));
}

#[test]
fn wrong_dim_is_rejected() {
    let server = MockServer::start(vec![("/health", vec![Reply::Json(HEALTH.into())]), ("/describe", vec![Reply::Map(5)])]);
    let backend = ServiceBackend::connect(&server.url, fast()).unwrap();
    let mesh = primitives::cuboid(Vec3::new(0.1, 0.08, 0.06));
    assert!(ViewSet::build(&mesh, "box", &backend, &small_params()).is_err());
}

#[test]
fn service_backend_records_model_in_results() {
    let server = MockServer::start(vec![("/health", vec![Reply::Json(HEALTH.into())]), ("/describe", vec![Reply::Map(3)])]);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kp");
    let cfg = common::correspond_config(dir.path(), &format!(r#"{{"kind": "service", "url": "{}", "options": {{"backoff_ms": 1, "single_flight": true}}}}"#, server.url));
    let summary = demoforge::pipeline::cmd_correspond(&cfg, &out).unwrap();
    assert_eq!(summary.backend, "service:toy-vit-s14");
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(written["backend"], "service:toy-vit-s14");
    for id in &summary.succeeded {
        let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("{id}.json"))).unwrap()).unwrap();
        assert_eq!(r["backend"], "service:toy-vit-s14");
    }
    assert_eq!(summary.succeeded.len() + summary.failed.len(), 2);
}

#[test]
fn descriptor_files_backend_reads_maps() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = primitives::toy_teapot(&TeapotParams::default()).mesh;
    let params = small_params();
    // precompute with the geometric backend and store as files
    let reference = ViewSet::build(&mesh, "pot", &GeometricBackend, &params).unwrap();
    for (i, m) in reference.maps.iter().enumerate() {
        std::fs::create_dir_all(dir.path().join("pot")).unwrap();
        dmap::write(&dmap::view_path(dir.path(), "pot", i), m).unwrap();
    }
    write_json(&dir.path().join("model.json"), &ModelInfo { model: "geo".into(), dim: reference.maps[0].dim() }).unwrap();
    let backend = DescriptorFilesBackend::new(dir.path()).unwrap();
    assert_eq!(backend.name(), "descriptor-files:geo");
    let views = ViewSet::build(&mesh, "pot", &backend, &params).unwrap();
    assert_eq!(views.maps, reference.maps);

    assert!(ViewSet::build(&mesh, "other", &backend, &params).is_err());
    write_json(&dir.path().join("model.json"), &ModelInfo { model: "geo".into(), dim: 99 }).unwrap();
    let backend = DescriptorFilesBackend::new(dir.path()).unwrap();
    assert!(ViewSet::build(&mesh, "pot", &backend, &params).is_err());
    assert!(matches!(DescriptorFilesBackend::new(dir.path().join("nope")), Err(Error::Config(_))));
}

#[test]
fn exported_views_are_pngs_with_cameras() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::correspond_config(dir.path(), r#"{"kind": "geometric"}"#);
    let out = dir.path().join("views");
    assert_eq!(demoforge::pipeline::cmd_export_views(&cfg, &out).unwrap(), 3);
    for id in ["source", "t0", "t1"] {
        for v in 0..2 {
            let png = std::fs::read(out.join(id).join(format!("view_{v}.png"))).unwrap();
            assert_eq!(png_size(&png), (32, 32));
            assert!(out.join(id).join(format!("view_{v}.json")).is_file());
        }
    }
}
