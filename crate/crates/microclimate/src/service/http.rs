//! HTTP/JSON endpoints: reading submission, forecast retrieval, bundle
//! inventory and health.
//!
//! Concurrency contract: submissions serialize through a single writer lock;
//! forecasts are computed from immutable snapshots (an `Arc` of the readings
//! plus an `Arc` of the bundle), so a bundle reload swaps atomically and a
//! reader observes either the old or the new model, never a mixture.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::forecaster::{predict, ForecastResult, ModelBundle};
use crate::pipeline::{build_series, grid_bounds};
use crate::providers::{FileProvider, ForecastProvider, SimulatedProvider};
use crate::service::store::{ForecastStore, ForecastStoreEntry, ReadingStore};
use crate::service::{AppConfig, ProviderChoice};
use crate::timeseries::{ChannelSpec, SensorReading, Timestamp};

/// Atomically swappable map from target channel to its bundle.
pub struct BundleRegistry {
    inner: RwLock<Arc<BTreeMap<String, Arc<ModelBundle>>>>,
}

impl BundleRegistry {
    pub fn new(bundles: BTreeMap<String, Arc<ModelBundle>>) -> BundleRegistry {
        BundleRegistry {
            inner: RwLock::new(Arc::new(bundles)),
        }
    }

    /// Load every `*.json` bundle under `dir`, keyed by target channel.
    pub fn load_dir(dir: &std::path::Path) -> crate::Result<BTreeMap<String, Arc<ModelBundle>>> {
        let mut map = BTreeMap::new();
        if !dir.exists() {
            return Ok(map);
        }
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bundle = ModelBundle::load(&path)?;
            if let Some(existing) = map.insert(bundle.target.clone(), Arc::new(bundle)) {
                return Err(Error::Config(format!(
                    "two bundles for target {} in {}",
                    existing.target,
                    dir.display()
                )));
            }
        }
        Ok(map)
    }

    pub fn snapshot(&self) -> Arc<BTreeMap<String, Arc<ModelBundle>>> {
        self.inner.read().expect("registry lock").clone()
    }

    pub fn get(&self, channel: &str) -> Option<Arc<ModelBundle>> {
        self.snapshot().get(channel).cloned()
    }

    /// Replace the whole inventory in one atomic step.
    pub fn swap(&self, bundles: BTreeMap<String, Arc<ModelBundle>>) {
        *self.inner.write().expect("registry lock") = Arc::new(bundles);
    }
}

type ForecastKey = (String, String, Timestamp, String);

/// Shared service state.
pub struct ServiceState {
    pub config: AppConfig,
    reading_store: Mutex<ReadingStore>,
    readings: RwLock<Arc<Vec<SensorReading>>>,
    pub bundles: BundleRegistry,
    forecast_store: Mutex<ForecastStore>,
    forecast_index: Mutex<BTreeMap<ForecastKey, ForecastResult>>,
    provider: Box<dyn ForecastProvider + Send + Sync>,
}

impl ServiceState {
    fn readings_snapshot(&self) -> Arc<Vec<SensorReading>> {
        self.readings.read().expect("readings lock").clone()
    }

    /// Append accepted readings: disk first, then the in-memory snapshot.
    fn append_readings(&self, accepted: Vec<SensorReading>) -> crate::Result<()> {
        if accepted.is_empty() {
            return Ok(());
        }
        let store = self.reading_store.lock().expect("store lock");
        store.append(&accepted)?;
        let mut guard = self.readings.write().expect("readings lock");
        let mut next = (**guard).clone();
        next.extend(accepted);
        *guard = Arc::new(next);
        Ok(())
    }
}

/// Build the service state: open stores, load bundles, set up the provider.
pub fn build_state(config: AppConfig) -> crate::Result<Arc<ServiceState>> {
    let reading_store = ReadingStore::open(config.data_dir.join("readings"))?;
    let initial = reading_store.load()?;
    let forecast_store = ForecastStore::open(config.data_dir.join("forecast-log"))?;
    let mut index = BTreeMap::new();
    for entry in forecast_store.load()? {
        index.insert(entry.key(), entry.result);
    }
    let bundles = BundleRegistry::new(BundleRegistry::load_dir(&config.model_dir)?);
    let provider: Box<dyn ForecastProvider + Send + Sync> = match &config.provider {
        ProviderChoice::File => Box::new(FileProvider::open("file", config.forecast_csv_path())?),
        ProviderChoice::Simulated { preset } => Box::new(SimulatedProvider::new(
            &crate::presets::by_name(preset)?.scenario,
        )?),
    };
    Ok(Arc::new(ServiceState {
        config,
        reading_store: Mutex::new(reading_store),
        readings: RwLock::new(Arc::new(initial)),
        bundles,
        forecast_store: Mutex::new(forecast_store),
        forecast_index: Mutex::new(index),
        provider,
    }))
}

enum ApiError {
    BadRequest(String),
    NotFound(String),
    InsufficientHistory { required: usize, available: usize },
    MissingForecast(Vec<usize>),
    NoBundle(String),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        match e {
            Error::InsufficientHistory { required, available } => {
                ApiError::InsufficientHistory { required, available }
            }
            Error::MissingForecast(steps) => ApiError::MissingForecast(steps),
            Error::InvalidArgument(m) => ApiError::BadRequest(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(message) => (
                StatusCode::BAD_REQUEST,
                json!({ "error": { "class": "bad-request", "message": message } }),
            ),
            ApiError::NotFound(message) => (
                StatusCode::NOT_FOUND,
                json!({ "error": { "class": "not-found", "message": message } }),
            ),
            ApiError::InsufficientHistory { required, available } => (
                StatusCode::CONFLICT,
                json!({ "error": {
                    "class": "insufficient-history",
                    "message": format!("{required} trailing valid steps required, {available} available"),
                    "required_steps": required,
                    "available_steps": available,
                } }),
            ),
            ApiError::MissingForecast(steps) => (
                StatusCode::CONFLICT,
                json!({ "error": {
                    "class": "missing-forecast",
                    "message": format!("no station forecast for horizon step(s) {steps:?}"),
                    "missing_horizon_steps": steps,
                } }),
            ),
            ApiError::NoBundle(message) => (
                StatusCode::SERVICE_UNAVAILABLE,
                json!({ "error": { "class": "no-bundle", "message": message } }),
            ),
            ApiError::Internal(message) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": { "class": "internal", "message": message } }),
            ),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct ReadingDto {
    sensor_id: String,
    channel: String,
    timestamp_utc: String,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct ReadingsSubmission {
    readings: Vec<ReadingDto>,
}

#[derive(Debug, Serialize)]
struct RejectionDto {
    index: usize,
    reason: String,
}

#[derive(Debug, Serialize)]
struct SubmissionResponse {
    accepted: usize,
    rejected: usize,
    rejections: Vec<RejectionDto>,
}

async fn post_readings(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<ReadingsSubmission>, JsonRejection>,
) -> Result<Json<SubmissionResponse>, ApiError> {
    let Json(submission) = body.map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let mut accepted = Vec::new();
    let mut rejections = Vec::new();
    for (index, dto) in submission.readings.into_iter().enumerate() {
        if dto.sensor_id != state.config.sensor_id {
            rejections.push(RejectionDto {
                index,
                reason: format!("unknown sensor `{}`", dto.sensor_id),
            });
            continue;
        }
        let Some(spec) = ChannelSpec::builtin(&dto.channel) else {
            rejections.push(RejectionDto {
                index,
                reason: format!("unknown channel `{}`", dto.channel),
            });
            continue;
        };
        let time = match Timestamp::parse_rfc3339(&dto.timestamp_utc) {
            Ok(t) => t,
            Err(e) => {
                rejections.push(RejectionDto {
                    index,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if !spec.contains(dto.value) {
            rejections.push(RejectionDto {
                index,
                reason: format!(
                    "value {} outside plausible range [{}, {}] {}",
                    dto.value, spec.plausible_min, spec.plausible_max, spec.unit
                ),
            });
            continue;
        }
        accepted.push(SensorReading {
            sensor_id: dto.sensor_id,
            channel: dto.channel,
            time,
            value: dto.value,
        });
    }
    let n_accepted = accepted.len();
    state.append_readings(accepted)?;
    Ok(Json(SubmissionResponse {
        accepted: n_accepted,
        rejected: rejections.len(),
        rejections,
    }))
}

#[derive(Debug, Deserialize)]
struct ForecastQuery {
    sensor: String,
    channel: String,
    issue: Option<String>,
}

#[derive(Debug, Serialize)]
struct HorizonDto {
    horizon_steps: usize,
    valid_time_utc: String,
    station_value: f64,
    predicted_error: f64,
    predicted_value: f64,
}

#[derive(Debug, Serialize)]
struct ForecastResponse {
    sensor_id: String,
    channel: String,
    issue_time_utc: String,
    bundle_hash: String,
    cached: bool,
    horizons: Vec<HorizonDto>,
}

fn forecast_response(
    sensor: &str,
    channel: &str,
    result: &ForecastResult,
    bundle_hash: &str,
    cached: bool,
) -> ForecastResponse {
    ForecastResponse {
        sensor_id: sensor.to_string(),
        channel: channel.to_string(),
        issue_time_utc: result.issue_time.to_rfc3339(),
        bundle_hash: bundle_hash.to_string(),
        cached,
        horizons: result
            .horizons
            .iter()
            .map(|h| HorizonDto {
                horizon_steps: h.horizon_steps,
                valid_time_utc: h.valid_time.to_rfc3339(),
                station_value: h.station_value,
                predicted_error: h.predicted_error,
                predicted_value: h.predicted_value,
            })
            .collect(),
    }
}

/// How many issue times the no-`issue` path walks back looking for an
/// admissible one before reporting the newest failure.
const ADMISSIBLE_LOOKBACK: usize = 8;

fn compute_forecast(
    state: &ServiceState,
    channel: &str,
    issue: Option<Timestamp>,
) -> Result<(ForecastResult, String, bool), ApiError> {
    let bundle = state
        .bundles
        .get(channel)
        .ok_or_else(|| ApiError::NoBundle(format!("no bundle loaded for channel `{channel}`")))?;
    let hash = bundle.content_hash();
    let readings = state.readings_snapshot();
    if readings.is_empty() {
        return Err(ApiError::InsufficientHistory {
            required: bundle.config.window + crate::decompose::warmup_len(bundle.config.levels),
            available: 0,
        });
    }
    let step = bundle.resolution_seconds;
    let (start, end) = grid_bounds(&readings, step).map_err(ApiError::from)?;
    let series = build_series(
        &readings,
        &bundle.predictor_channels,
        start,
        step,
        end,
        state.config.max_gap_steps,
    )
    .map_err(ApiError::from)?;

    let candidates: Vec<Timestamp> = match issue {
        Some(t) => vec![t],
        // Newest grid boundary first, then walk back.
        None => (0..ADMISSIBLE_LOOKBACK)
            .map(|k| Timestamp(end.0 - (k as u64 * step) as i64))
            .collect(),
    };

    let mut last_err: Option<ApiError> = None;
    for candidate in candidates {
        let cache_key: ForecastKey = (
            state.config.sensor_id.clone(),
            channel.to_string(),
            candidate,
            hash.clone(),
        );
        if let Some(result) = state.forecast_index.lock().expect("index lock").get(&cache_key) {
            return Ok((result.clone(), hash, true));
        }
        let records = state
            .provider
            .fetch_forecasts(channel, candidate, candidate)
            .map_err(ApiError::from)?;
        match predict(&bundle, &series, candidate, &records) {
            Ok(result) => {
                let entry = ForecastStoreEntry {
                    sensor_id: state.config.sensor_id.clone(),
                    target: channel.to_string(),
                    issue_time: candidate,
                    bundle_hash: hash.clone(),
                    created_at: Timestamp(chrono::Utc::now().timestamp()),
                    result: result.clone(),
                };
                state
                    .forecast_store
                    .lock()
                    .expect("store lock")
                    .append(&entry)
                    .map_err(ApiError::from)?;
                state
                    .forecast_index
                    .lock()
                    .expect("index lock")
                    .insert(cache_key, result.clone());
                return Ok((result, hash, false));
            }
            Err(e) => last_err = Some(ApiError::from(e)),
        }
    }
    Err(last_err.unwrap_or_else(|| ApiError::Internal("no candidate issue times".into())))
}

async fn get_forecast(
    State(state): State<Arc<ServiceState>>,
    Query(query): Query<ForecastQuery>,
) -> Result<Json<ForecastResponse>, ApiError> {
    if query.sensor != state.config.sensor_id {
        return Err(ApiError::NotFound(format!("unknown sensor `{}`", query.sensor)));
    }
    if ChannelSpec::builtin(&query.channel).is_none() {
        return Err(ApiError::NotFound(format!("unknown channel `{}`", query.channel)));
    }
    let issue = match &query.issue {
        Some(text) => Some(
            Timestamp::parse_rfc3339(text).map_err(|e| ApiError::BadRequest(e.to_string()))?,
        ),
        None => None,
    };
    let (result, hash, cached) = compute_forecast(&state, &query.channel, issue)?;
    Ok(Json(forecast_response(
        &query.sensor,
        &query.channel,
        &result,
        &hash,
        cached,
    )))
}

#[derive(Debug, Serialize)]
struct ModelDto {
    sensor_id: String,
    channel: String,
    bundle_hash: String,
    schema_version: u32,
    architecture: String,
    resolution_seconds: u64,
    horizons: Vec<usize>,
    window: usize,
    levels: usize,
}

async fn get_models(State(state): State<Arc<ServiceState>>) -> Json<serde_json::Value> {
    let models: Vec<ModelDto> = state
        .bundles
        .snapshot()
        .iter()
        .map(|(channel, bundle)| ModelDto {
            sensor_id: state.config.sensor_id.clone(),
            channel: channel.clone(),
            bundle_hash: bundle.content_hash(),
            schema_version: bundle.schema_version,
            architecture: bundle.config.architecture.to_string(),
            resolution_seconds: bundle.resolution_seconds,
            horizons: bundle.config.horizons.clone(),
            window: bundle.config.window,
            levels: bundle.config.levels,
        })
        .collect();
    Json(json!({ "models": models }))
}

async fn get_health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(get_health))
        .route("/v1/readings", post(post_readings))
        .route("/v1/forecast", get(get_forecast))
        .route("/v1/models", get(get_models))
        .with_state(state)
}

/// Serve until interrupted (CLI path).
pub async fn serve(config: AppConfig) -> crate::Result<()> {
    let bind = config.bind.clone();
    let state = build_state(config)?;
    let listener = tokio::net::TcpListener::bind(&bind)
        .await
        .map_err(|e| Error::Config(format!("cannot bind {bind}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Error::Config(e.to_string()))?;
    println!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Config(format!("server error: {e}")))
}

/// A service running on a background thread with its own runtime; used by
/// integration tests and the serve example.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningService {
    pub fn start(config: AppConfig) -> crate::Result<RunningService> {
        let state = build_state(config)?;
        let bind = state.config.bind.clone();
        let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let thread = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(&bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(Error::Config(format!("cannot bind {bind}: {e}"))));
                        return;
                    }
                };
                let addr = listener.local_addr().expect("local addr");
                let _ = addr_tx.send(Ok(addr));
                let _ = axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = shutdown_rx.await;
                    })
                    .await;
            });
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| Error::Config("server thread died before binding".into()))??;
        Ok(RunningService {
            addr,
            shutdown: Some(shutdown_tx),
            thread: Some(thread),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
