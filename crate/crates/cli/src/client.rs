//! Blocking HTTP client for the `/api/v1` endpoints.

use std::fmt;
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use segcrowd_core::mask::ImageRecord;
use segcrowd_core::store::VersionEntry;
use segcrowd_core::workflow::{Role, Task};
use segcrowd_server::{AnnotatorView, ApiError, RegisterResponse, MAX_PAGE_LIMIT};

#[derive(Debug)]
pub enum ClientError {
    /// The server answered with an error body.
    Api(ApiError),
    /// No usable answer at all.
    Transport(String),
}

impl fmt::Display for ClientError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientError::Api(e) => write!(f, "server answered {} {}: {}", e.status, e.code, e.message),
            ClientError::Transport(e) => write!(f, "request failed: {e}"),
        }
    }
}

impl std::error::Error for ClientError {}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

pub struct Enrolled {
    pub record: ImageRecord,
    pub duplicate: bool,
}

pub struct ApiClient {
    base: String,
    token: Option<String>,
    http: Client,
}

impl ApiClient {
    pub fn new(server: &str, token: Option<String>) -> Result<Self> {
        let http = Client::builder()
            .timeout(None::<Duration>)
            .connect_timeout(Duration::from_secs(10))
            .build()?;
        Ok(Self {
            base: format!("{}/api/v1", server.trim_end_matches('/')),
            token,
            http,
        })
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        let req = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => req.header(AUTHORIZATION, format!("Bearer {t}")),
            None => req,
        }
    }

    fn send(req: RequestBuilder) -> Result<Response> {
        let resp = req.send()?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body = resp.bytes()?;
        Err(ClientError::Api(serde_json::from_slice(&body).unwrap_or_else(|_| ApiError {
            status,
            code: "unexpected_response".into(),
            message: String::from_utf8_lossy(&body).into_owned(),
        })))
    }

    fn json<T: DeserializeOwned>(req: RequestBuilder) -> Result<T> {
        Ok(Self::send(req)?.json()?)
    }

    fn post_json<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T> {
        Self::json(self.request(Method::POST, path).json(body))
    }

    pub fn health(&self) -> Result<serde_json::Value> {
        Self::json(self.request(Method::GET, "/health"))
    }

    pub fn enroll(&self, png: Vec<u8>, source_name: &str) -> Result<Enrolled> {
        let resp = Self::send(
            self.request(Method::POST, "/images")
                .header(CONTENT_TYPE, "image/png")
                .header("X-Source-Name", source_name)
                .body(png),
        )?;
        let duplicate = resp.headers().get("x-duplicate").is_some_and(|v| v == "true");
        Ok(Enrolled { record: resp.json()?, duplicate })
    }

    pub fn images(&self) -> Result<Vec<ImageRecord>> {
        let mut all = Vec::new();
        loop {
            let page: Vec<ImageRecord> = Self::json(
                self.request(Method::GET, "/images")
                    .query(&[("offset", all.len()), ("limit", MAX_PAGE_LIMIT)]),
            )?;
            let done = page.len() < MAX_PAGE_LIMIT;
            all.extend(page);
            if done {
                return Ok(all);
            }
        }
    }

    pub fn history(&self, image_id: &str) -> Result<Vec<VersionEntry>> {
        let mut all = Vec::new();
        loop {
            let page: Vec<VersionEntry> = Self::json(
                self.request(Method::GET, &format!("/images/{image_id}/segmentations"))
                    .query(&[("offset", all.len()), ("limit", MAX_PAGE_LIMIT)]),
            )?;
            let done = page.len() < MAX_PAGE_LIMIT;
            all.extend(page);
            if done {
                return Ok(all);
            }
        }
    }

    pub fn segmentation(&self, image_id: &str, version_no: u32) -> Result<Vec<u8>> {
        Ok(Self::send(self.request(Method::GET, &format!("/segmentations/{image_id}/{version_no}")))?
            .bytes()?
            .to_vec())
    }

    pub fn submit(&self, image_id: &str, lseg: Vec<u8>) -> Result<VersionEntry> {
        Self::json(
            self.request(Method::POST, &format!("/images/{image_id}/segmentations"))
                .header(CONTENT_TYPE, "application/octet-stream")
                .body(lseg),
        )
    }

    pub fn restore(&self, image_id: &str, version_no: u32) -> Result<VersionEntry> {
        Self::json(self.request(Method::POST, &format!("/images/{image_id}/restore/{version_no}")))
    }

    pub fn my_tasks(&self) -> Result<Vec<Task>> {
        Self::json(self.request(Method::GET, "/tasks").query(&[("mine", "true")]))
    }

    pub fn skip(&self, task_id: &str, reason: &str, quality_grade: Option<f64>) -> Result<Task> {
        self.post_json(
            &format!("/tasks/{task_id}/skip"),
            &json!({"reason": reason, "quality_grade": quality_grade}),
        )
    }

    /// Senior review. A correction carries the corrected `.lseg`.
    pub fn review(&self, task_id: &str, correction: Option<Vec<u8>>) -> Result<VersionEntry> {
        let path = format!("/tasks/{task_id}/review");
        match correction {
            Some(lseg) => Self::json(
                self.request(Method::POST, &path)
                    .query(&[("verdict", "corrected")])
                    .header(CONTENT_TYPE, "application/octet-stream")
                    .body(lseg),
            ),
            None => self.post_json(&path, &json!({"verdict": "approved"})),
        }
    }

    pub fn assign(&self, image_id: &str, annotator_id: &str) -> Result<Task> {
        self.post_json("/assignments", &json!({"image_id": image_id, "annotator_id": annotator_id}))
    }

    pub fn register(&self, display_name: &str, role: Role) -> Result<RegisterResponse> {
        self.post_json("/annotators", &json!({"display_name": display_name, "role": role}))
    }

    pub fn annotators(&self) -> Result<Vec<AnnotatorView>> {
        let mut all = Vec::new();
        loop {
            let page: Vec<AnnotatorView> = Self::json(
                self.request(Method::GET, "/annotators")
                    .query(&[("offset", all.len()), ("limit", MAX_PAGE_LIMIT)]),
            )?;
            let done = page.len() < MAX_PAGE_LIMIT;
            all.extend(page);
            if done {
                return Ok(all);
            }
        }
    }

    pub fn deactivate(&self, annotator_id: &str) -> Result<AnnotatorView> {
        Self::json(self.request(Method::POST, &format!("/annotators/{annotator_id}/deactivate")))
    }

    pub fn next_batch(&self, strategy: &str, k: usize, seed: Option<u64>) -> Result<Vec<String>> {
        let mut req = self
            .request(Method::GET, "/next-batch")
            .query(&[("strategy", strategy)])
            .query(&[("k", k)]);
        if let Some(seed) = seed {
            req = req.query(&[("seed", seed)]);
        }
        Self::json(req)
    }

    pub fn export(&self, selector: &str) -> Result<Vec<u8>> {
        Ok(Self::send(self.request(Method::GET, "/export").query(&[("selector", selector)]))?
            .bytes()?
            .to_vec())
    }
}
