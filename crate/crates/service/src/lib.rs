//! HTTP/JSON facade over campaign operations.
//!
//! Every response is an [`ApiEnvelope`]. Each campaign sits behind its own
//! mutex together with a version counter; successful mutations bump the
//! version by one and measurement posts must quote the version they saw.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use doe_core::report::report_single;
use doe_core::{
    init_campaign, AlConfig, BeadGeometry, CampaignState, DesignPoint, DesignSpace, Error,
    FileLock, InitOptions, MetricPair, OracleSpec, Status, Strategy, Suggestion, TraceEntry,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    /// Offending input field, when one can be named.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiEnvelope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
    /// Absent for responses not tied to a single campaign.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign_version: Option<u64>,
}

struct Reply {
    status: StatusCode,
    envelope: ApiEnvelope,
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (self.status, Json(self.envelope)).into_response()
    }
}

fn ok(status: StatusCode, data: impl Serialize, version: Option<u64>) -> Reply {
    match serde_json::to_value(data) {
        Ok(v) => Reply {
            status,
            envelope: ApiEnvelope {
                data: Some(v),
                error: None,
                campaign_version: version,
            },
        },
        Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, "json", e.to_string(), None, version),
    }
}

fn fail(
    status: StatusCode,
    code: &str,
    message: impl Into<String>,
    field: Option<String>,
    version: Option<u64>,
) -> Reply {
    Reply {
        status,
        envelope: ApiEnvelope {
            data: None,
            error: Some(ApiError {
                code: code.to_string(),
                message: message.into(),
                field,
            }),
            campaign_version: version,
        },
    }
}

fn domain_error(e: &Error, version: Option<u64>) -> Reply {
    let status = match e {
        Error::Conflict(_) | Error::NotReady(_) | Error::MissingCoverage { .. } => StatusCode::CONFLICT,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    let field = match e {
        Error::InvalidGeometry { field, .. } => Some(field.to_string()),
        _ => None,
    };
    fail(status, e.code(), e.to_string(), field, version)
}

fn not_found(id: &str) -> Reply {
    fail(StatusCode::NOT_FOUND, "not found", format!("no campaign '{id}'"), None, None)
}

fn bad_body(e: JsonRejection) -> Reply {
    fail(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text(), None, None)
}

struct Entry {
    state: CampaignState,
    version: u64,
}

struct Inner {
    campaigns: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
    data_dir: Option<PathBuf>,
}

/// Shared registry of live campaigns.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// In-memory only.
    pub fn new() -> Self {
        AppState {
            inner: Arc::new(Inner {
                campaigns: RwLock::new(BTreeMap::new()),
                data_dir: None,
            }),
        }
    }

    /// Persists every mutation under `dir` and loads the `*.json` campaigns already there.
    pub fn with_data_dir(dir: &Path) -> doe_core::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut campaigns = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let state = CampaignState::load(&path)?;
            campaigns.insert(state.id.clone(), Arc::new(Mutex::new(Entry { state, version: 0 })));
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                campaigns: RwLock::new(campaigns),
                data_dir: Some(dir.to_path_buf()),
            }),
        })
    }

    fn get(&self, id: &str) -> Option<Arc<Mutex<Entry>>> {
        self.inner.campaigns.read().unwrap().get(id).cloned()
    }

    fn persist(&self, state: &CampaignState) -> doe_core::Result<()> {
        if let Some(dir) = &self.inner.data_dir {
            let path = dir.join(format!("{}.json", state.id));
            let _lock = FileLock::acquire(&path)?;
            state.save(&path)?;
        }
        Ok(())
    }
}

impl Default for AppState {
    fn default() -> Self {
        Self::new()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/campaigns", get(list_campaigns).post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/suggestion", get(get_suggestion))
        .route("/campaigns/{id}/measurements", axum::routing::post(post_measurement))
        .route("/campaigns/{id}/metrics", get(get_metrics))
        .route("/campaigns/{id}/report", get(get_report))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub strategy: String,
    /// `manual` or `synthetic:<surface-id>`.
    pub oracle: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub space_preset: Option<String>,
    #[serde(default)]
    pub space: Option<DesignSpace>,
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub config: Option<AlConfig>,
}

#[derive(Debug, Serialize)]
struct Summary {
    id: String,
    strategy: Strategy,
    status: Status,
    runs: usize,
    version: u64,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

async fn list_campaigns(State(app): State<AppState>) -> Reply {
    let entries: Vec<_> = app.inner.campaigns.read().unwrap().values().cloned().collect();
    let list: Vec<Summary> = entries
        .iter()
        .map(|e| {
            let e = e.lock().unwrap();
            Summary {
                id: e.state.id.clone(),
                strategy: e.state.strategy,
                status: e.state.status,
                runs: e.state.runs.len(),
                version: e.version,
            }
        })
        .collect();
    ok(StatusCode::OK, list, None)
}

fn build(req: CreateRequest) -> doe_core::Result<CampaignState> {
    let strategy: Strategy = req.strategy.parse()?;
    let space = match (req.space, req.space_preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Validation("give either space or space_preset, not both".into()))
        }
        (Some(s), None) => s,
        (None, Some(p)) => DesignSpace::preset(&p)?,
        (None, None) => DesignSpace::waam_default(),
    };
    let oracle = OracleSpec::from_flag(
        &req.oracle,
        req.noise_sd.unwrap_or(doe_core::oracle::DEFAULT_NOISE_SD),
        doe_core::campaign::oracle_seed(req.seed),
    )?;
    let mut options = InitOptions {
        id: req.id,
        ..InitOptions::default()
    };
    if let Some(n) = req.test_size {
        options.test_size = n;
    }
    init_campaign(space, strategy, oracle, req.config.unwrap_or_default(), req.seed, options)
}

async fn create_campaign(
    State(app): State<AppState>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Reply {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_body(e),
    };
    let state = match build(req) {
        Ok(s) => s,
        Err(e) => return domain_error(&e, None),
    };
    if !valid_id(&state.id) {
        return fail(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation",
            "id may contain only letters, digits, '-', '_' and '.'",
            Some("id".into()),
            None,
        );
    }
    let mut map = app.inner.campaigns.write().unwrap();
    if map.contains_key(&state.id) {
        return fail(
            StatusCode::CONFLICT,
            "conflict",
            format!("campaign '{}' already exists", state.id),
            Some("id".into()),
            None,
        );
    }
    if let Err(e) = app.persist(&state) {
        return domain_error(&e, None);
    }
    let reply = ok(StatusCode::CREATED, &state, Some(0));
    map.insert(state.id.clone(), Arc::new(Mutex::new(Entry { state, version: 0 })));
    reply
}

async fn get_campaign(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Reply {
    let Some(entry) = app.get(&id) else { return not_found(&id) };
    let e = entry.lock().unwrap();
    ok(StatusCode::OK, &e.state, Some(e.version))
}

#[derive(Debug, Serialize)]
struct SuggestionBody {
    complete: bool,
    point: Option<DesignPoint>,
    /// Factor name to real level value.
    settings: Option<BTreeMap<String, f64>>,
    status: Status,
}

async fn get_suggestion(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Reply {
    let Some(entry) = app.get(&id) else { return not_found(&id) };
    let mut e = entry.lock().unwrap();
    let mut next = e.state.clone();
    let suggestion = match next.suggest() {
        Ok(s) => s,
        Err(err) => return domain_error(&err, Some(e.version)),
    };
    if next != e.state {
        if let Err(err) = app.persist(&next) {
            return domain_error(&err, Some(e.version));
        }
        e.state = next;
        e.version += 1;
    }
    let point = match suggestion {
        Suggestion::Point(p) => Some(p),
        Suggestion::Complete => None,
    };
    let settings = point.as_ref().and_then(|p| {
        let real = e.state.space.to_real(p).ok()?;
        Some(
            e.state
                .space
                .factors
                .iter()
                .zip(real.0)
                .map(|(f, v)| (f.name.clone(), v))
                .collect(),
        )
    });
    let body = SuggestionBody {
        complete: point.is_none(),
        point,
        settings,
        status: e.state.status,
    };
    ok(StatusCode::OK, body, Some(e.version))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PointInput {
    Indices(Vec<usize>),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct MeasurementRequest {
    pub point: PointInput,
    pub d: f64,
    pub w: f64,
    pub h: f64,
    pub expected_version: u64,
}

async fn post_measurement(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<MeasurementRequest>, JsonRejection>,
) -> Reply {
    let Some(entry) = app.get(&id) else { return not_found(&id) };
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_body(e),
    };
    let mut e = entry.lock().unwrap();
    if req.expected_version != e.version {
        return fail(
            StatusCode::CONFLICT,
            "version conflict",
            format!("expected_version {} but campaign is at {}", req.expected_version, e.version),
            Some("expected_version".into()),
            Some(e.version),
        );
    }
    let point = match req.point {
        PointInput::Indices(v) => DesignPoint(v),
        PointInput::Text(t) => match t.parse() {
            Ok(p) => p,
            Err(err) => {
                let mut r = domain_error(&err, Some(e.version));
                if let Some(er) = r.envelope.error.as_mut() {
                    er.field = Some("point".into());
                }
                return r;
            }
        },
    };
    let geometry = match BeadGeometry::new(req.d, req.w, req.h) {
        Ok(g) => g,
        Err(err) => return domain_error(&err, Some(e.version)),
    };
    let mut next = e.state.clone();
    if let Err(err) = next.record_result(&point, geometry) {
        return domain_error(&err, Some(e.version));
    }
    if let Err(err) = app.persist(&next) {
        return domain_error(&err, Some(e.version));
    }
    e.state = next;
    e.version += 1;
    ok(StatusCode::OK, &e.state, Some(e.version))
}

#[derive(Debug, Serialize)]
struct MetricsBody {
    training_size: usize,
    /// Test-set metrics of the current model; absent until it can be evaluated.
    current: Option<MetricPair>,
    trace: Vec<TraceEntry>,
}

async fn get_metrics(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Reply {
    let Some(entry) = app.get(&id) else { return not_found(&id) };
    let e = entry.lock().unwrap();
    let body = MetricsBody {
        training_size: e.state.runs.len(),
        current: e.state.evaluate().ok(),
        trace: e.state.trace.clone(),
    };
    ok(StatusCode::OK, body, Some(e.version))
}

async fn get_report(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Reply {
    let Some(entry) = app.get(&id) else { return not_found(&id) };
    let e = entry.lock().unwrap();
    match report_single(&e.state) {
        Ok(r) => ok(StatusCode::OK, r, Some(e.version)),
        Err(err) => domain_error(&err, Some(e.version)),
    }
}
