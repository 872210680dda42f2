//! Client for a remote descriptor service: `GET /health` answers
//! `{"model", "dim"}`, `POST /describe` takes a multipart PNG plus JSON
//! parameters and answers a DMAP body.

use std::thread;
use std::time::Duration;

use demoforge_core::correspondence::{BackendError, DescriptorBackend, DescriptorMap, RenderedView};
use reqwest::blocking::{multipart, Client};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use crate::dmap::{self, ModelInfo};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceOptions {
    /// Output stride requested from the model.
    pub stride: u32,
    /// Attempts after the first 503.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff_ms: u64,
    pub timeout_s: f64,
    /// Serialize describe calls across workers.
    pub single_flight: bool,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { stride: 1, retries: 5, backoff_ms: 200, timeout_s: 60.0, single_flight: false }
    }
}

pub const STRIDES: [u32; 5] = [1, 2, 4, 8, 14];

#[derive(Debug, Clone, Serialize)]
struct DescribeParams<'a> {
    stride: u32,
    mesh_id: &'a str,
    view: usize,
}

#[derive(Debug)]
pub struct ServiceBackend {
    base: String,
    client: Client,
    options: ServiceOptions,
    info: ModelInfo,
}

impl ServiceBackend {
    /// Checks `/health`, retrying 503 while the model loads.
    pub fn connect(url: &str, options: ServiceOptions) -> Result<Self> {
        if !STRIDES.contains(&options.stride) {
            return Err(Error::Config(format!("stride {} not in {STRIDES:?}", options.stride)));
        }
        if !(options.timeout_s > 0.0) {
            return Err(Error::Config("service timeout must be positive".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(options.timeout_s))
            .build()
            .map_err(|e| Error::Service(e.to_string()))?;
        let base = url.trim_end_matches('/').to_string();
        let health = format!("{base}/health");
        let body = with_retries(&options, || client.get(&health).send())?;
        let info: ModelInfo =
            serde_json::from_slice(&body).map_err(|e| Error::Service(format!("{health}: bad health response: {e}")))?;
        if info.dim == 0 {
            return Err(Error::Service(format!("{health}: model reports dim 0")));
        }
        Ok(Self { base, client, options, info })
    }

    pub fn model(&self) -> &ModelInfo {
        &self.info
    }

    fn request(&self, view: &RenderedView<'_>) -> Result<DescriptorMap> {
        let png = dmap::shaded_png(view)?;
        let params = serde_json::to_string(&DescribeParams {
            stride: self.options.stride,
            mesh_id: view.mesh_id,
            view: view.view_index,
        })
        .expect("plain struct serializes");
        let url = format!("{}/describe", self.base);
        let body = with_retries(&self.options, || {
            let image = multipart::Part::bytes(png.clone())
                .file_name("view.png")
                .mime_str("image/png")
                .expect("static mime type");
            let json = multipart::Part::text(params.clone()).mime_str("application/json").expect("static mime type");
            let form = multipart::Form::new().part("image", image).part("params", json);
            self.client.post(&url).multipart(form).send()
        })?;
        let map = dmap::decode(&body).map_err(|e| Error::Service(format!("{url}: {e}")))?;
        if map.dim() != self.info.dim {
            return Err(Error::Service(format!("{url}: map dim {} but /health said {}", map.dim(), self.info.dim)));
        }
        Ok(map)
    }
}

/// Sends until a non-503 answer, sleeping `backoff · 2^k` between attempts.
fn with_retries(
    options: &ServiceOptions,
    mut send: impl FnMut() -> reqwest::Result<reqwest::blocking::Response>,
) -> Result<Vec<u8>> {
    let mut attempt = 0;
    loop {
        let resp = send().map_err(|e| Error::Service(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::SERVICE_UNAVAILABLE && attempt < options.retries {
            let delay = options.backoff_ms.saturating_mul(1 << attempt.min(16));
            log::debug!("{} answered 503, retrying in {delay} ms", resp.url());
            thread::sleep(Duration::from_millis(delay));
            attempt += 1;
            continue;
        }
        let url = resp.url().to_string();
        let body = resp.bytes().map_err(|e| Error::Service(e.to_string()))?;
        if !status.is_success() {
            let text = String::from_utf8_lossy(&body);
            return Err(Error::Service(format!("{url}: {status}: {}", text.trim())));
        }
        return Ok(body.to_vec());
    }
}

impl DescriptorBackend for ServiceBackend {
    fn describe(&self, view: &RenderedView<'_>) -> std::result::Result<DescriptorMap, BackendError> {
        self.request(view).map_err(|e| BackendError::new(e.to_string()))
    }

    fn single_flight(&self) -> bool {
        self.options.single_flight
    }

    fn name(&self) -> String {
        format!("service:{}", self.info.model)
    }
}
