//! HTTP query service over a run store.
//!
//! Every endpoint except `POST /runs` is a read-only view of an immutable run,
//! so handlers share loaded runs through an in-memory cache without locking
//! on the query path. Epochs in query strings and responses are 1-based.

pub mod error;
mod routes;

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use epochflow_core::ingest::RunStore;
use epochflow_core::TrainingRun;

pub use error::{ApiError, ErrorCode};

pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024 * 1024;
pub const DEFAULT_CACHE_RUNS: usize = 8;

#[derive(Debug, Clone)]
pub struct Config {
    pub listen: SocketAddr,
    pub store_root: PathBuf,
    /// Largest accepted request body in bytes.
    pub body_limit: usize,
    /// Number of parsed runs kept in memory.
    pub cache_runs: usize,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: RunStore,
    cache: RwLock<HashMap<String, Arc<TrainingRun>>>,
    order: Mutex<VecDeque<String>>,
    capacity: usize,
}

impl AppState {
    pub fn new(store: RunStore, cache_runs: usize) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                cache: RwLock::new(HashMap::new()),
                order: Mutex::new(VecDeque::new()),
                capacity: cache_runs.max(1),
            }),
        }
    }

    pub fn store(&self) -> &RunStore {
        &self.inner.store
    }

    /// Loads a run, parsing it from the store on first use.
    pub fn run(&self, run_id: &str) -> Result<Arc<TrainingRun>, ApiError> {
        if let Some(run) = self.inner.cache.read().unwrap_or_else(|p| p.into_inner()).get(run_id) {
            return Ok(run.clone());
        }
        let run = Arc::new(self.inner.store.load_run(run_id)?);
        let mut cache = self.inner.cache.write().unwrap_or_else(|p| p.into_inner());
        if let Some(existing) = cache.get(run_id) {
            return Ok(existing.clone());
        }
        let mut order = self.inner.order.lock().unwrap_or_else(|p| p.into_inner());
        while order.len() >= self.inner.capacity {
            if let Some(old) = order.pop_front() {
                cache.remove(&old);
            }
        }
        order.push_back(run_id.to_string());
        cache.insert(run_id.to_string(), run.clone());
        Ok(run)
    }
}

pub fn router(state: AppState, body_limit: usize) -> Router {
    Router::new()
        .route("/runs", post(routes::create_run).get(routes::list_runs))
        .route("/runs/{id}", get(routes::get_run))
        .route("/runs/{id}/flow", get(routes::flow))
        .route("/runs/{id}/flow/band", get(routes::band))
        .route("/runs/{id}/glyphs", get(routes::glyphs))
        .route("/runs/{id}/traces", get(routes::traces))
        .route("/runs/{id}/table", post(routes::table))
        .route("/runs/{id}/confusion", get(routes::confusion))
        .fallback(routes::not_found)
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

/// Binds `config.listen` and serves until ctrl-c.
pub async fn serve(config: Config) -> anyhow::Result<()> {
    let store = RunStore::open(&config.store_root)?;
    let app = router(AppState::new(store, config.cache_runs), config.body_limit);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %config.store_root.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
