//! HTTP service over the segmentation store.
//!
//! All routes live under `/api/v1`. Every route except `GET /api/v1/health`
//! needs `Authorization: Bearer <token>`; failures of any kind come back as
//! an [`ApiError`] JSON body.

pub mod cache;
pub mod error;
pub mod extract;
mod handlers;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use thiserror::Error;

use segcrowd_core::mask::LabelClass;
use segcrowd_core::store::{Durability, Store, StoreError};
use segcrowd_core::vision::{preseg_provider, quality_provider, PresegProvider, QualityProvider};
use segcrowd_core::workflow::Registration;

pub use cache::Cache;
pub use error::{ApiError, ERROR_TABLE};
pub use handlers::{AnnotatorView, AssignRequest, RegisterRequest, RegisterResponse, ReviewRequest, SkipRequest};

pub const DEFAULT_MAX_UPLOAD: usize = 64 * 1024 * 1024;
pub const DEFAULT_PAGE_LIMIT: usize = 100;
pub const MAX_PAGE_LIMIT: usize = 1000;

#[derive(Clone, Debug)]
pub struct ApiConfig {
    pub listen: SocketAddr,
    pub data_root: PathBuf,
    pub preseg_provider: String,
    pub quality_provider: String,
    pub max_upload: usize,
    pub durability: Durability,
}

impl ApiConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_root: data_root.into(),
            preseg_provider: "frangi-v1".into(),
            quality_provider: "heuristic-q1".into(),
            max_upload: DEFAULT_MAX_UPLOAD,
            durability: Durability::Fsync,
        }
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("unknown pre-segmentation provider {0:?}")]
    UnknownPresegProvider(String),
    #[error("unknown quality provider {0:?}")]
    UnknownQualityProvider(String),
    #[error("upload limit {limit} is below the largest enrolled image ({largest} bytes)")]
    UploadLimitTooSmall { limit: usize, largest: u64 },
    #[error("cannot open data root: {0}")]
    Store(#[from] StoreError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared handler state. Everything mutable lives in the store or the
/// on-disk cache.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub preseg: Arc<dyn PresegProvider>,
    pub quality: Arc<dyn QualityProvider>,
    pub cache: Arc<Cache>,
    pub classes: Arc<Vec<LabelClass>>,
    pub max_upload: usize,
}

/// Default project palette handed to pre-segmentation providers.
pub fn default_classes() -> Vec<LabelClass> {
    vec![
        LabelClass::new("arteriole", 0, 0.5).expect("valid class"),
        LabelClass::new("venule", 1, 0.5).expect("valid class"),
    ]
}

impl AppState {
    /// Opens the data root and checks the configuration against it.
    pub fn open(config: &ApiConfig) -> Result<Self, StartupError> {
        let preseg = preseg_provider(&config.preseg_provider)
            .ok_or_else(|| StartupError::UnknownPresegProvider(config.preseg_provider.clone()))?;
        let quality = quality_provider(&config.quality_provider)
            .ok_or_else(|| StartupError::UnknownQualityProvider(config.quality_provider.clone()))?;
        let store = Store::open(&config.data_root, config.durability)?;
        let largest = store
            .images()
            .iter()
            .filter_map(|i| std::fs::metadata(store.blobs().path_of(&i.image_id)).ok())
            .map(|m| m.len())
            .max()
            .unwrap_or(0);
        if largest > config.max_upload as u64 {
            return Err(StartupError::UploadLimitTooSmall {
                limit: config.max_upload,
                largest,
            });
        }
        Ok(Self {
            cache: Arc::new(Cache::open(&config.data_root)?),
            store: Arc::new(store),
            preseg: Arc::from(preseg),
            quality: Arc::from(quality),
            classes: Arc::new(default_classes()),
            max_upload: config.max_upload,
        })
    }

    /// Creates the first researcher when the deployment has no annotators.
    pub fn bootstrap(&self, display_name: &str) -> Result<Option<Registration>, StoreError> {
        self.store.bootstrap_researcher(display_name)
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(handlers::health))
        .route("/images", post(handlers::enroll).get(handlers::list_images))
        .route("/images/{id}", get(handlers::image))
        .route("/images/{id}/enhanced", get(handlers::enhanced))
        .route("/images/{id}/presegmentation", get(handlers::presegmentation))
        .route("/images/{id}/quality", get(handlers::quality))
        .route(
            "/images/{id}/segmentations",
            get(handlers::history).post(handlers::submit),
        )
        .route("/images/{id}/restore/{version_no}", post(handlers::restore))
        .route("/segmentations/{image_id}/{version_no}", get(handlers::segmentation))
        .route("/tasks", get(handlers::tasks))
        .route("/tasks/{task_id}", get(handlers::task))
        .route("/tasks/{task_id}/start", post(handlers::start))
        .route("/tasks/{task_id}/skip", post(handlers::skip))
        .route("/tasks/{task_id}/review", post(handlers::review))
        .route("/assignments", post(handlers::assign))
        .route("/annotators", post(handlers::register).get(handlers::annotators))
        .route("/annotators/{id}/deactivate", post(handlers::deactivate))
        .route("/next-batch", get(handlers::next_batch))
        .route("/export", get(handlers::export));
    Router::new()
        .nest("/api/v1", api)
        .fallback(handlers::not_found)
        .method_not_allowed_fallback(handlers::not_found)
        .layer(DefaultBodyLimit::max(state.max_upload))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests. Every
/// acknowledged write is already in the journal, so nothing is left to flush.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
