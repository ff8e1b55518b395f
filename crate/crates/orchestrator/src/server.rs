//! HTTP API and server-sent event stream.
//!
//! The engine runs on its own thread and owns all mutable state. Handlers
//! talk to it through a queue and read the published log and snapshot.

use crate::engine::{Engine, Input};
use crate::events::EventRecord;
use abyssal_core::scenario::Intervention;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use parking_lot::RwLock;
use serde::Deserialize;
use serde_json::{json, Value};
use std::convert::Infallible;
use std::io::Write;
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::sync::{oneshot, watch};

pub const SCENARIO_ENV: &str = "ABYSSAL_SCENARIO";

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second; `None` runs unpaced.
    pub speed: Option<f64>,
    /// Simulated time at which the run ends.
    pub until: f64,
    pub start_paused: bool,
    /// Append every event line to this file as it is produced.
    pub log_path: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { speed: Some(10.0), until: f64::INFINITY, start_paused: false, log_path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Control {
    Pause,
    Resume,
    Seed { seed: u64 },
}

enum Request {
    Input(Input),
    Control(Control),
}

type Reply = (StatusCode, Value);

struct Shared {
    lines: RwLock<Vec<String>>,
    snapshot: RwLock<Value>,
    head: watch::Sender<usize>,
}

/// Cloneable handle to a running engine thread.
#[derive(Clone)]
pub struct EngineHandle {
    shared: Arc<Shared>,
    tx: mpsc::Sender<(Request, oneshot::Sender<Reply>)>,
}

impl EngineHandle {
    pub fn head(&self) -> usize {
        *self.shared.head.borrow()
    }

    pub fn lines(&self) -> Vec<String> {
        self.shared.lines.read().clone()
    }

    pub fn snapshot(&self) -> Value {
        self.shared.snapshot.read().clone()
    }

    async fn request(&self, request: Request) -> Reply {
        let (reply_tx, reply_rx) = oneshot::channel();
        if self.tx.send((request, reply_tx)).is_err() {
            return (StatusCode::SERVICE_UNAVAILABLE, json!({ "error": "engine stopped" }));
        }
        reply_rx
            .await
            .unwrap_or((StatusCode::SERVICE_UNAVAILABLE, json!({ "error": "engine stopped" })))
    }

    /// Waits until the log holds at least `n` records.
    pub async fn wait_for(&self, n: usize) {
        let mut rx = self.shared.head.subscribe();
        let _ = rx.wait_for(|h| *h >= n).await;
    }
}

struct Runner {
    engine: Engine,
    shared: Arc<Shared>,
    opts: ServeOptions,
    paused: bool,
    published: usize,
    log_file: Option<std::fs::File>,
}

impl Runner {
    fn publish(&mut self) {
        let lines = self.engine.log().lines();
        if let Some(f) = self.log_file.as_mut() {
            for line in &lines[self.published..] {
                let _ = writeln!(f, "{line}");
            }
            let _ = f.flush();
        }
        let mut snapshot = self.engine.snapshot();
        snapshot["paused"] = json!(self.paused);
        *self.shared.snapshot.write() = snapshot;
        self.shared.lines.write().extend_from_slice(&lines[self.published..]);
        self.published = lines.len();
        self.shared.head.send_replace(self.published);
    }

    fn handle(&mut self, request: Request) -> Reply {
        let input = match request {
            Request::Control(Control::Pause) => {
                self.paused = true;
                return (StatusCode::OK, json!({ "paused": true }));
            }
            Request::Control(Control::Resume) => {
                self.paused = false;
                return (StatusCode::OK, json!({ "paused": false }));
            }
            Request::Control(Control::Seed { seed }) => Input::Seed(seed),
            Request::Input(input) => input,
        };
        if self.engine.is_finished() {
            return (StatusCode::CONFLICT, json!({ "error": "the run has ended" }));
        }
        let ack = self.engine.apply_input(input);
        let status = if ack.applied { StatusCode::OK } else { StatusCode::UNPROCESSABLE_ENTITY };
        (status, serde_json::to_value(ack).expect("acks serialize"))
    }

    fn run(mut self, rx: mpsc::Receiver<(Request, oneshot::Sender<Reply>)>) {
        let mut anchor = (Instant::now(), self.engine.time());
        loop {
            let running = !self.paused && !self.engine.is_finished();
            let wait = if !running {
                Duration::from_millis(50)
            } else {
                match self.opts.speed {
                    Some(speed) if speed > 0.0 => {
                        let due = anchor.0 + Duration::from_secs_f64((self.engine.time() - anchor.1) / speed);
                        due.saturating_duration_since(Instant::now())
                    }
                    _ => Duration::ZERO,
                }
            };
            let first = if wait.is_zero() {
                rx.try_recv().map_err(|e| matches!(e, mpsc::TryRecvError::Disconnected))
            } else {
                rx.recv_timeout(wait).map_err(|e| matches!(e, mpsc::RecvTimeoutError::Disconnected))
            };
            match first {
                Ok((request, reply)) => {
                    let was_paused = self.paused;
                    let answer = self.handle(request);
                    if was_paused && !self.paused {
                        anchor = (Instant::now(), self.engine.time());
                    }
                    self.publish();
                    let _ = reply.send(answer);
                    continue;
                }
                Err(true) => return,
                Err(false) => {}
            }
            if !running {
                continue;
            }
            if self.engine.time() >= self.opts.until.min(self.engine.max_time()) - 1e-9 {
                self.engine.finish();
            } else if let Err(e) = self.engine.step() {
                self.engine.finish();
                eprintln!("engine stopped: {e}");
            }
            self.publish();
        }
    }
}

/// Starts the engine thread and returns a handle to it.
pub fn spawn_engine(engine: Engine, opts: ServeOptions) -> std::io::Result<EngineHandle> {
    let log_file = match &opts.log_path {
        Some(p) => Some(std::fs::File::create(p)?),
        None => None,
    };
    let (head, _) = watch::channel(0);
    let shared = Arc::new(Shared { lines: RwLock::new(Vec::new()), snapshot: RwLock::new(Value::Null), head });
    let (tx, rx) = mpsc::channel();
    let mut runner = Runner { engine, shared: shared.clone(), paused: opts.start_paused, opts, published: 0, log_file };
    runner.publish();
    std::thread::Builder::new().name("abyssal-engine".into()).spawn(move || runner.run(rx))?;
    Ok(EngineHandle { shared, tx })
}

pub fn router(handle: EngineHandle) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/missions", post(post_mission))
        .route("/interventions", post(post_intervention))
        .route("/events", get(get_events))
        .route("/control", post(post_control))
        .with_state(handle)
}

async fn get_state(State(h): State<EngineHandle>) -> Json<Value> {
    Json(h.snapshot())
}

#[derive(Debug, Deserialize)]
struct MissionBody {
    robot: String,
    text: String,
}

async fn post_mission(State(h): State<EngineHandle>, Json(body): Json<MissionBody>) -> Response {
    let (status, value) = h.request(Request::Input(Input::Mission { robot: body.robot, text: body.text })).await;
    (status, Json(value)).into_response()
}

async fn post_intervention(State(h): State<EngineHandle>, Json(iv): Json<Intervention>) -> Response {
    let (status, value) = h.request(Request::Input(Input::Intervention(iv))).await;
    (status, Json(value)).into_response()
}

async fn post_control(State(h): State<EngineHandle>, Json(c): Json<Control>) -> Response {
    let (status, value) = h.request(Request::Control(c)).await;
    (status, Json(value)).into_response()
}

#[derive(Debug, Deserialize)]
struct Since {
    #[serde(default)]
    since: usize,
}

fn sse_event(line: &str) -> Event {
    let record: EventRecord = serde_json::from_str(line).expect("published lines are records");
    Event::default().id(record.seq.to_string()).event(record.kind).data(line)
}

/// Replays from `since`, then follows the live log.
pub fn event_stream(h: &EngineHandle, since: usize) -> impl Stream<Item = Result<Event, Infallible>> + use<> {
    let rx = h.shared.head.subscribe();
    let shared = h.shared.clone();
    futures::stream::unfold((since, rx), move |(next, mut rx)| {
        let shared = shared.clone();
        async move {
            loop {
                if let Some(line) = shared.lines.read().get(next).cloned() {
                    return Some((Ok(sse_event(&line)), (next + 1, rx)));
                }
                rx.changed().await.ok()?;
            }
        }
    })
}

async fn get_events(State(h): State<EngineHandle>, Query(q): Query<Since>) -> Response {
    let head = h.head();
    if q.since > head {
        let body = json!({ "error": "BadCursor", "since": q.since, "head": head });
        return (StatusCode::BAD_REQUEST, Json(body)).into_response();
    }
    Sse::new(event_stream(&h, q.since)).keep_alive(KeepAlive::default()).into_response()
}

/// Serves the API on `addr` until the process exits.
pub async fn serve(handle: EngineHandle, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(handle)).await
}
