use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;
use uala_core::agent::{EscalationQueue, OracleMode, RunMonitor};
use uala_core::canonical::to_canonical_string;

use crate::commands::{execute, run_header, write_run_outputs};
use crate::config::Mode;
use crate::{ServeArgs, UsageError};

/// Shared state behind the escalation API.
#[derive(Clone)]
pub struct ApiState {
    pub queue: Arc<EscalationQueue>,
    pub monitor: Arc<RunMonitor>,
}

#[derive(Debug, Deserialize)]
pub struct AnswerBody {
    pub answer: String,
}

fn canonical_json<T: serde::Serialize>(v: &T) -> Response {
    match to_canonical_string(v) {
        Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn list_escalations(State(s): State<ApiState>) -> Response {
    canonical_json(&s.queue.pending())
}

async fn answer_escalation(
    State(s): State<ApiState>,
    Path(episode_id): Path<String>,
    Json(body): Json<AnswerBody>,
) -> Response {
    let answer = body.answer.trim();
    if answer.is_empty() {
        return (StatusCode::UNPROCESSABLE_ENTITY, "answer must not be empty").into_response();
    }
    if s.queue.answer(&episode_id, answer) {
        tracing::info!(episode = %episode_id, "oracle answered");
        StatusCode::NO_CONTENT.into_response()
    } else {
        (StatusCode::NOT_FOUND, format!("no pending escalation for {episode_id}")).into_response()
    }
}

async fn current_run(State(s): State<ApiState>) -> Response {
    canonical_json(&s.monitor.progress())
}

/// The escalation API, with `assets` hosted at `/` when given.
pub fn router(state: ApiState, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/escalations", get(list_escalations))
        .route("/api/escalations/{episode_id}/answer", post(answer_escalation))
        .route("/api/runs/current", get(current_run))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let mut cfg = a.common.resolve()?;
    if !matches!(cfg.mode, Mode::UalaS | Mode::UalaM | Mode::Verbal) {
        return Err(UsageError(format!("{:?} never escalates to an oracle", cfg.mode)).into());
    }
    cfg.oracle = OracleMode::Interactive;
    let strategy = cfg.strategy()?;
    let items = cfg.items()?;
    let queue = Arc::new(EscalationQueue::new());
    let monitor = Arc::new(RunMonitor::new());
    let (agent, _) = cfg.agent(None, None)?;
    let agent = agent.with_escalations(queue.clone());

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind((a.bind.as_str(), a.port)))
        .with_context(|| format!("cannot listen on {}:{}", a.bind, a.port))?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");

    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(ApiState { queue, monitor: monitor.clone() }, a.assets.clone());
    let exit_when_done = a.exit_when_done;
    let server = rt.spawn(async move {
        let shutdown = async move {
            if exit_when_done {
                tokio::select! {
                    _ = done_rx => {}
                    _ = tokio::signal::ctrl_c() => {}
                }
            } else {
                let _ = tokio::signal::ctrl_c().await;
            }
        };
        axum::serve(listener, app).with_graceful_shutdown(shutdown).await
    });

    let outputs = execute(&cfg, &agent, &items, &strategy, Some(&monitor))?;
    let report = write_run_outputs(&a.out, &run_header(&cfg, &strategy), &outputs)?;
    print!("{}", report.to_table());
    if !exit_when_done {
        println!("all episodes finished; serving until interrupted");
    }
    let _ = done_tx.send(());
    rt.block_on(server)??;
    Ok(())
}
