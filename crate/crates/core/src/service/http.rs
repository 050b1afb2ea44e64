//! JSON over HTTP for the fleet service and the mock remote solver.

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{FleetService, LocationFix, ServiceError, ARRIVAL_RECORD_RADIUS_M};
use crate::analysis::{analyse, static_baseline_overlap};
use crate::geo::{BoundingBox, GeoPoint};
use crate::ids::{LineTag, TripId, VehicleId};
use crate::qubo::BqmWire;
use crate::solver::MockRemote;

const PLACEHOLDER_CONSOLE: &str = "<!doctype html><title>qshuttle</title><p>No console installed. \
Start the server with --console-dir to serve one.</p>";

pub type Clock = Arc<dyn Fn() -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<FleetService>,
    pub clock: Clock,
    pub console: Option<Arc<str>>,
}

impl AppState {
    /// State using wall-clock seconds since the Unix epoch.
    pub fn new(service: Arc<FleetService>, console: Option<String>) -> Self {
        let clock: Clock =
            Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()));
        Self { service, clock, console: console.map(Into::into) }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let (status, kind) = match &e {
            UnknownVehicle(_) => (StatusCode::NOT_FOUND, "unknown_vehicle"),
            UnknownLine(_) => (StatusCode::NOT_FOUND, "unknown_line"),
            UnknownTrip(_) => (StatusCode::NOT_FOUND, "unknown_trip"),
            UnknownExclusion(_) => (StatusCode::NOT_FOUND, "unknown_exclusion"),
            VehicleBusy(_) => (StatusCode::CONFLICT, "vehicle_busy"),
            NoActiveTrip(_) => (StatusCode::CONFLICT, "no_active_trip"),
            NoActiveTrips => (StatusCode::CONFLICT, "no_active_trips"),
            OptimizationInFlight => (StatusCode::CONFLICT, "optimization_in_flight"),
            InvalidGeometry(_) => (StatusCode::BAD_REQUEST, "invalid_geometry"),
            Unroutable { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unroutable"),
            Persistence(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persistence"),
        };
        ApiError(status, ErrorBody { error: kind.into(), message: e.to_string() })
    }
}

impl ApiError {
    fn internal(message: impl Into<String>) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, ErrorBody { error: "internal".into(), message: message.into() })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct UpdateBody {
    pub vehicles: Vec<LocationFix>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct OptimizeBody {
    /// Origins to use instead of the projected locations.
    #[serde(default)]
    pub origins: BTreeMap<VehicleId, GeoPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartTripBody {
    pub vehicle_id: VehicleId,
    pub line: LineTag,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/update", post(update))
        .route("/optimize", post(optimize))
        .route("/fleet", get(fleet))
        .route("/trips", post(start_trip).get(list_trips))
        .route("/trips/{id}/end", post(end_trip))
        .route("/exclusions", get(list_exclusions).post(add_exclusion))
        .route("/exclusions/{id}", delete(remove_exclusion))
        .route("/report", get(report))
        .route("/console", get(console))
        .with_state(state)
}

async fn update(State(s): State<AppState>, Json(body): Json<UpdateBody>) -> ApiResult<super::UpdateAck> {
    Ok(Json(s.service.handle_update(&body.vehicles)?))
}

async fn optimize(State(s): State<AppState>, body: Bytes) -> ApiResult<super::OptimizeOutcome> {
    let body: OptimizeBody = if body.iter().all(u8::is_ascii_whitespace) {
        OptimizeBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| {
            ApiError(StatusCode::BAD_REQUEST, ErrorBody { error: "invalid_body".into(), message: e.to_string() })
        })?
    };
    let now = (s.clock)();
    let service = Arc::clone(&s.service);
    let out = tokio::task::spawn_blocking(move || service.handle_optimize(now, &body.origins))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(out))
}

async fn fleet(State(s): State<AppState>) -> Json<super::FleetSnapshot> {
    Json(s.service.snapshot((s.clock)()))
}

async fn start_trip(
    State(s): State<AppState>,
    Json(body): Json<StartTripBody>,
) -> Result<(StatusCode, Json<super::TripRecord>), ApiError> {
    let trip = s.service.start_trip(&body.vehicle_id, &body.line, (s.clock)())?;
    Ok((StatusCode::CREATED, Json(trip)))
}

async fn list_trips(State(s): State<AppState>) -> Json<Vec<super::TripRecord>> {
    Json(s.service.trips())
}

async fn end_trip(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<super::TripRecord> {
    Ok(Json(s.service.end_trip(TripId(id), true, (s.clock)())?))
}

async fn list_exclusions(State(s): State<AppState>) -> Json<Vec<super::Exclusion>> {
    Json(s.service.exclusions())
}

async fn add_exclusion(
    State(s): State<AppState>,
    Json(bbox): Json<BoundingBox>,
) -> Result<(StatusCode, Json<super::Exclusion>), ApiError> {
    Ok((StatusCode::CREATED, Json(s.service.add_exclusion(bbox)?)))
}

async fn remove_exclusion(State(s): State<AppState>, Path(id): Path<u64>) -> Result<StatusCode, ApiError> {
    s.service.remove_exclusion(id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn report(State(s): State<AppState>) -> ApiResult<crate::analysis::AnalysisReport> {
    let service = Arc::clone(&s.service);
    let r = tokio::task::spawn_blocking(move || {
        let baseline = static_baseline_overlap(service.graph(), &service.lines()).ok();
        analyse(&service.trips(), ARRIVAL_RECORD_RADIUS_M, baseline)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(r))
}

async fn console(State(s): State<AppState>) -> Html<String> {
    Html(s.console.as_deref().unwrap_or(PLACEHOLDER_CONSOLE).to_string())
}

#[derive(Debug, Deserialize)]
struct SolveQuery {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_time_limit")]
    time_limit_ms: u64,
}

fn default_time_limit() -> u64 {
    super::DEFAULT_SOLVER_BUDGET_MS
}

/// `POST /solve?seed=&time_limit_ms=` with a wire-format model; answers
/// like a remote sampler, including injected failures as 503.
pub fn mock_remote_router(remote: Arc<MockRemote>) -> Router {
    Router::new().route("/solve", post(solve)).with_state(remote)
}

async fn solve(
    State(remote): State<Arc<MockRemote>>,
    Query(q): Query<SolveQuery>,
    Json(wire): Json<BqmWire>,
) -> Response {
    let r = tokio::task::spawn_blocking(move || remote.handle(&wire, q.seed, q.time_limit_ms, &AtomicBool::new(false))).await;
    match r {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(message)) => {
            (StatusCode::SERVICE_UNAVAILABLE, Json(ErrorBody { error: "solver_failed".into(), message })).into_response()
        }
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

/// Serves `app` on `listen` until Ctrl-C.
pub async fn serve(listen: &str, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
