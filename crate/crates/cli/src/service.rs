//! Judging service. Tasks come from the data directory's tables; judgments
//! go through a single mutex-guarded writer to an append-only JSON-lines
//! log, which is replayed on startup.
//!
//! | method | path                       | answer                                   |
//! |--------|----------------------------|------------------------------------------|
//! | GET    | `/api/tasks/next?judge=ID` | next unanswered task, 204 when exhausted |
//! | POST   | `/api/judgments`           | 201, 400 invalid, 409 duplicate          |
//! | GET    | `/api/tally`               | per-table points                         |
//! | GET    | `/api/report`              | metrics against the crowd gold           |
//! | GET    | `/plots/{image_id}.png`    | PNG, 404 if unknown                      |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chartsel_core::eval::{
    aggregate_tally, crowd_gold, generate_tasks, metrics, read_judgment_log, JudgmentLog, JudgmentRecord, Metrics,
    PointsTally, Task, TaskPlan,
};
use chartsel_core::regressor::load_bundle;
use chartsel_core::render::render_candidates;
use chartsel_core::select::select;
use chartsel_core::table::normalize;
use chartsel_core::{DataTable, Error, ModelBundle, PlotType, RenderConfig, Scoring};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::data::load_tables;
use crate::CliError;

struct Judgments {
    log: JudgmentLog,
    records: Vec<JudgmentRecord>,
    answered: HashSet<(String, String)>,
}

pub struct AppState {
    tasks: Vec<Task>,
    index: HashMap<String, usize>,
    images: HashMap<String, Vec<u8>>,
    predictions: Option<BTreeMap<String, PlotType>>,
    scoring: Scoring,
    judgments: Mutex<Judgments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub scoring: Scoring,
    /// Tables with at least one judgment.
    pub tables: usize,
    /// Absent until some table has been judged.
    pub metrics: Option<Metrics>,
}

impl AppState {
    /// Renders the images, builds the task list and replays the judgment
    /// log at `log_path`.
    pub fn build(
        tables: &[DataTable],
        bundle: Option<&ModelBundle>,
        scoring: Scoring,
        render: &RenderConfig,
        log_path: &Path,
    ) -> Result<Self, CliError> {
        let normalized: Vec<DataTable> = tables.iter().map(normalize).collect();
        let mut images = HashMap::new();
        for t in &normalized {
            for img in render_candidates(t, render)?.into_values() {
                images.insert(img.image_id(), img.to_png());
            }
        }
        let tasks = generate_tasks(&normalized, &TaskPlan::default())?;
        let index: HashMap<String, usize> = tasks.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        let predictions = bundle
            .map(|b| {
                tables
                    .iter()
                    .map(|t| Ok((t.id.clone(), select(t, b, scoring, render)?.chosen)))
                    .collect::<Result<BTreeMap<_, _>, Error>>()
            })
            .transpose()?;

        let records = read_judgment_log(log_path)?;
        let mut answered = HashSet::new();
        for r in &records {
            let task = index.get(&r.task_id).ok_or_else(|| Error::UnknownTask(r.task_id.clone()))?;
            r.validate(&tasks[*task])?;
            answered.insert((r.judge_id.clone(), r.task_id.clone()));
        }
        log::info!("{} tasks, {} judgments replayed", tasks.len(), records.len());
        Ok(AppState {
            tasks,
            index,
            images,
            predictions,
            scoring,
            judgments: Mutex::new(Judgments {
                log: JudgmentLog::open(log_path)?,
                records,
                answered,
            }),
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// Task indices in the fixed order a judge receives them.
    pub fn judge_order(&self, judge: &str) -> Vec<usize> {
        let digest = Sha256::digest(judge.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut order: Vec<usize> = (0..self.tasks.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    pub fn next_task(&self, judge: &str) -> Option<&Task> {
        let order = self.judge_order(judge);
        let j = self.judgments.lock().expect("judgment lock");
        order
            .into_iter()
            .map(|i| &self.tasks[i])
            .find(|t| !j.answered.contains(&(judge.to_string(), t.id.clone())))
    }

    pub fn tally(&self) -> chartsel_core::Result<Vec<PointsTally>> {
        let records = self.judgments.lock().expect("judgment lock").records.clone();
        aggregate_tally(&records, &self.tasks)
    }

    pub fn report(&self) -> Option<chartsel_core::Result<ReportBody>> {
        let preds = self.predictions.as_ref()?;
        Some(self.tally().and_then(|tallies| {
            let golds = crowd_gold(&tallies);
            let metrics = if golds.is_empty() {
                None
            } else {
                let judged = preds
                    .iter()
                    .filter(|(k, _)| golds.contains_key(*k))
                    .map(|(k, v)| (k.clone(), *v))
                    .collect();
                Some(metrics(&judged, &golds)?)
            };
            Ok(ReportBody {
                scoring: self.scoring,
                tables: golds.len(),
                metrics,
            })
        }))
    }

    /// Validates and durably records a judgment.
    pub fn submit(&self, mut record: JudgmentRecord) -> Result<JudgmentRecord, Rejection> {
        let task = self
            .index
            .get(&record.task_id)
            .map(|&i| &self.tasks[i])
            .ok_or_else(|| Rejection::Invalid(Error::UnknownTask(record.task_id.clone()).to_string()))?;
        record.validate(task).map_err(|e| Rejection::Invalid(e.to_string()))?;
        if record.timestamp == 0 {
            record.timestamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64);
        }
        let key = (record.judge_id.clone(), record.task_id.clone());
        let mut j = self.judgments.lock().expect("judgment lock");
        if j.answered.contains(&key) {
            return Err(Rejection::Duplicate(format!(
                "judge {:?} already answered {:?}",
                key.0, key.1
            )));
        }
        j.log.append(&record).map_err(|e| Rejection::Storage(e.to_string()))?;
        j.answered.insert(key);
        j.records.push(record.clone());
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    Invalid(String),
    Duplicate(String),
    Storage(String),
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

impl IntoResponse for Rejection {
    fn into_response(self) -> Response {
        match self {
            Rejection::Invalid(m) => error(StatusCode::BAD_REQUEST, m),
            Rejection::Duplicate(m) => error(StatusCode::CONFLICT, m),
            Rejection::Storage(m) => error(StatusCode::INTERNAL_SERVER_ERROR, m),
        }
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    judge: Option<String>,
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let Some(judge) = q.judge.filter(|j| !j.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing judge parameter");
    };
    match state.next_task(&judge) {
        Some(task) => Json(task.public()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_judgment(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let record: JudgmentRecord = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid judgment: {e}")),
    };
    match state.submit(record) {
        Ok(r) => (StatusCode::CREATED, Json(r)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn tally(State(state): State<Arc<AppState>>) -> Response {
    match state.tally() {
        Ok(t) => Json(t).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn report(State(state): State<Arc<AppState>>) -> Response {
    match state.report() {
        None => error(StatusCode::SERVICE_UNAVAILABLE, "no model bundle loaded"),
        Some(Ok(r)) => Json(r).into_response(),
        Some(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn plot(State(state): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> Response {
    match file.strip_suffix(".png").and_then(|id| state.images.get(id)) {
        Some(png) => ([(header::CONTENT_TYPE, "image/png")], png.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no image {file:?}")),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/judgments", post(post_judgment))
        .route("/api/tally", get(tally))
        .route("/api/report", get(report))
        .route("/plots/{file}", get(plot))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Builds the state from `cfg` and serves until interrupted.
pub fn run_blocking(cfg: &PipelineConfig) -> Result<(), CliError> {
    let tables = load_tables(&cfg.data_dir)?;
    let bundle = match &cfg.models {
        Some(p) => Some(load_bundle(p)?),
        None => {
            log::warn!("no model bundle configured; /api/report is unavailable");
            None
        }
    };
    let state = Arc::new(AppState::build(&tables, bundle.as_ref(), cfg.scoring, &cfg.render, &cfg.judgments)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Service(e.to_string()))?;
    runtime.block_on(async {
        let addr = (cfg.host.as_str(), cfg.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Service(format!("cannot bind {}:{}: {e}", cfg.host, cfg.port)))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::Service(e.to_string()))?);
        serve(listener, state).await.map_err(|e| CliError::Service(e.to_string()))
    })
}
