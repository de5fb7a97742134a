//! Session store and HTTP API for the lens explanation engine.
//!
//! `POST /sessions` ingests an agent session against a repository and streams
//! Level 1 cards over `GET /sessions/{id}/events`. Level 2 documents are
//! computed only on `POST /sessions/{id}/changes/{i}/level2` and cached for
//! the life of the session. Everything is persisted as append-only records,
//! so a restarted service serves the same bytes.

pub mod api;
pub mod config;
pub mod error;
pub mod sessions;
pub mod store;

use std::future::Future;
use std::sync::Arc;

use lens_core::explain::EngineConfig;
use tokio::net::TcpListener;

pub use api::router;
pub use config::ServiceConfig;
pub use error::ApiError;
pub use sessions::{Registry, Session, Status, StreamEvent};
pub use store::{Record, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Server(#[source] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Core(#[from] lens_core::Error),
}

pub fn engine_config(config: &ServiceConfig) -> EngineConfig {
    EngineConfig {
        budget: config.backend.budget,
        max_repairs: config.backend.max_repairs,
        ..EngineConfig::default()
    }
}

/// Opens the store and restores persisted sessions.
pub fn open_registry(config: &ServiceConfig) -> Result<Arc<Registry>, ServeError> {
    let store = Store::open(&config.store_dir)?;
    let backend = config.backend.build()?;
    Ok(Arc::new(Registry::open(
        store,
        backend,
        engine_config(config),
    )?))
}

pub async fn bind(config: &ServiceConfig) -> Result<TcpListener, ServeError> {
    let addr = format!("{}:{}", config.host, config.port);
    TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })
}

/// Serves until `shutdown` resolves. Every record is synced as it is
/// written, so returning from here leaves the store complete.
pub async fn serve(
    listener: TcpListener,
    registry: Arc<Registry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServeError::Server)
}
