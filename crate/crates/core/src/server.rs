//! Live episodes for a human operator over WebSocket.
//!
//! Every frame carries one JSON object with a `"type"` field. On connect the
//! server sends `SessionStart` and a `StateUpdate`; each valid
//! `ActionChoice` advances the episode and is answered by the next
//! `StateUpdate` or by `EpisodeEnd`, after which the server closes the
//! connection. Invalid input gets an `Error` reply and changes nothing.
//!
//! [`Session`] holds the protocol logic and knows nothing about sockets;
//! [`serve`] drives sessions over a listener one connection at a time.

use std::fs::OpenOptions;
use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use crate::env::{self, EnvConfig, EnvError, EpisodeState, StepLog, TerminalKind, REWARD_FAILURE};
use crate::features::REGIONS_PER_SIDE;
use crate::harness::{self, aggregate_trace, EpisodeRecord, HarnessError};
use crate::nn::digest_f64;
use crate::rng::{self, streams};
use crate::scene::Scene;

pub const HUMAN_POLICY: &str = "Human";
pub const TRACE_FILE: &str = "human_trace.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";

/// Coarse top-down view: rescaled mean heights of the 16×16 regions of the
/// orientation-0 heightmap, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightmapSummary {
    pub regions_per_side: usize,
    pub region_cm: f64,
    pub z_max: f64,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SessionMessage {
    SessionStart {
        config_digest: String,
        episode: usize,
        w: usize,
        n_primitives: usize,
        t_max: usize,
    },
    StateUpdate {
        scene: Scene,
        heightmap: HeightmapSummary,
        legal_actions: usize,
        t: usize,
        last_reward: Option<f64>,
        total_reward: f64,
        min_dist: Option<f64>,
    },
    ActionChoice {
        u: usize,
    },
    EpisodeEnd {
        terminal: TerminalKind,
        actions: usize,
        total_reward: f64,
    },
    Error {
        message: String,
    },
}

impl SessionMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("session messages serialize")
    }
}

/// Digest of every environment setting, so a client can tell configs apart.
pub fn config_digest(cfg: &EnvConfig) -> String {
    let text = format!("{cfg:?}");
    let h = digest_f64(text.bytes().map(f64::from));
    format!("{h:016x}")
}

/// One human-played episode. Scenes are keyed by episode index exactly like
/// evaluation episodes, so human and agent results cover the same scenes.
pub struct Session {
    cfg: EnvConfig,
    episode: usize,
    ep: EpisodeState,
    steps: Vec<StepLog>,
    total: f64,
    last_reward: Option<f64>,
    finished: Option<EpisodeRecord>,
}

impl Session {
    pub fn new(cfg: &EnvConfig, seed: u64, episode: usize) -> Result<Session, EnvError> {
        let mut scene_rng = rng::stream(seed, streams::EVAL_SCENES, episode as u64);
        let ep = env::reset(cfg, &mut scene_rng)?;
        Ok(Session {
            cfg: cfg.clone(),
            episode,
            ep,
            steps: Vec::new(),
            total: 0.0,
            last_reward: None,
            finished: None,
        })
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn scene(&self) -> &Scene {
        &self.ep.scene
    }

    /// The record of the episode once it has ended.
    pub fn finished(&self) -> Option<&EpisodeRecord> {
        self.finished.as_ref()
    }

    /// Messages sent when a client connects.
    pub fn opening(&self) -> Vec<SessionMessage> {
        vec![
            SessionMessage::SessionStart {
                config_digest: config_digest(&self.cfg),
                episode: self.episode,
                w: self.cfg.w,
                n_primitives: self.cfg.n_primitives(),
                t_max: self.cfg.t_max,
            },
            self.state_update(),
        ]
    }

    fn state_update(&self) -> SessionMessage {
        let fc = &self.cfg.feature_cfg;
        let d = self.ep.scene.min_obstacle_distance();
        SessionMessage::StateUpdate {
            scene: self.ep.scene.clone(),
            heightmap: HeightmapSummary {
                regions_per_side: REGIONS_PER_SIDE,
                region_cm: fc.cells_per_region as f64 * fc.cell_size,
                z_max: fc.z_max,
                z: self.ep.state.features[0].z().to_vec(),
            },
            legal_actions: self.cfg.n_actions(),
            t: self.ep.t,
            last_reward: self.last_reward,
            total_reward: self.total,
            min_dist: d.is_finite().then_some(d),
        }
    }

    fn error(message: impl Into<String>) -> Vec<SessionMessage> {
        vec![SessionMessage::Error { message: message.into() }]
    }

    /// Replies to one client line.
    pub fn handle_line(&mut self, line: &str) -> Vec<SessionMessage> {
        match serde_json::from_str::<SessionMessage>(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => Self::error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: SessionMessage) -> Vec<SessionMessage> {
        let u = match msg {
            SessionMessage::ActionChoice { u } => u,
            _ => return Self::error("only ActionChoice messages are accepted"),
        };
        if self.finished.is_some() {
            return Self::error("episode has ended");
        }
        let n = self.cfg.n_actions();
        if u >= n {
            return Self::error(format!("action {u} out of range 0..{n}"));
        }
        let t = self.ep.t;
        let (reward, terminal) = match env::step(&mut self.ep, u, &self.cfg) {
            Ok(r) => (r.reward, r.terminal),
            Err(EnvError::SimFault(_)) => (REWARD_FAILURE, TerminalKind::SimFault),
            Err(e) => return Self::error(e.to_string()),
        };
        self.total += reward;
        self.last_reward = Some(reward);
        self.steps.push(StepLog::new(self.episode, t, u, reward, terminal, &self.ep.scene));
        if !terminal.is_terminal() {
            return vec![self.state_update()];
        }
        self.finished = Some(EpisodeRecord {
            index: self.episode,
            terminal,
            total_reward: self.total,
            steps: self.steps.clone(),
        });
        vec![SessionMessage::EpisodeEnd {
            terminal,
            actions: self.steps.len(),
            total_reward: self.total,
        }]
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("websocket: {0}")]
    Ws(#[from] tungstenite::Error),
}

pub struct ServeOptions {
    pub env: EnvConfig,
    pub seed: u64,
    /// Receives the human trace and the metrics file.
    pub out_dir: PathBuf,
    /// Stop after this many connections; `None` serves forever.
    pub max_sessions: Option<usize>,
}

/// Appends a finished episode to the trace and refreshes the Human row of
/// the metrics file from the whole trace.
pub fn record_episode(out_dir: &Path, record: &EpisodeRecord) -> Result<(), ServeError> {
    std::fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join(TRACE_FILE);
    let mut f = OpenOptions::new().create(true).append(true).open(&trace_path)?;
    harness::write_trace(&mut f, std::slice::from_ref(record))?;
    drop(f);
    let steps = harness::read_trace(BufReader::new(std::fs::File::open(&trace_path)?))?;
    let report = aggregate_trace(HUMAN_POLICY, &steps)?;
    harness::upsert_metrics_row(&out_dir.join(METRICS_FILE), &report)?;
    Ok(())
}

fn next_episode(out_dir: &Path) -> Result<usize, ServeError> {
    let path = out_dir.join(TRACE_FILE);
    if !path.exists() {
        return Ok(0);
    }
    let steps = harness::read_trace(BufReader::new(std::fs::File::open(path)?))?;
    Ok(steps.iter().map(|s| s.episode + 1).max().unwrap_or(0))
}

fn send(ws: &mut WebSocket<TcpStream>, msgs: &[SessionMessage]) -> Result<(), tungstenite::Error> {
    for m in msgs {
        ws.send(Message::text(m.to_line()))?;
    }
    Ok(())
}

/// Runs one connection to completion. Returns the finished episode, or
/// `None` if the client left early.
fn run_connection(stream: TcpStream, session: &mut Session) -> Result<Option<EpisodeRecord>, ServeError> {
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => ServeError::Ws(e),
        tungstenite::HandshakeError::Interrupted(_) => ServeError::Io(std::io::ErrorKind::WouldBlock.into()),
    })?;
    send(&mut ws, &session.opening())?;
    loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t.as_str().to_string(),
            Ok(Message::Close(_)) | Err(tungstenite::Error::ConnectionClosed) => return Ok(None),
            Ok(_) => continue,
            Err(e) => return Err(e.into()),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let replies = session.handle_line(line);
            send(&mut ws, &replies)?;
        }
        if let Some(rec) = session.finished() {
            let rec = rec.clone();
            ws.close(None)?;
            // Drain until the client acknowledges the close.
            while ws.read().is_ok() {}
            return Ok(Some(rec));
        }
    }
}

/// Serves human sessions on `listener`, one connection at a time. Each
/// connection plays one fresh episode; abandoned episodes are discarded.
pub fn serve(listener: TcpListener, opts: &ServeOptions) -> Result<(), ServeError> {
    opts.env.validate()?;
    let mut episode = next_episode(&opts.out_dir)?;
    if opts.max_sessions == Some(0) {
        return Ok(());
    }
    for (served, stream) in listener.incoming().enumerate() {
        let mut session = Session::new(&opts.env, opts.seed, episode)?;
        match run_connection(stream?, &mut session) {
            Ok(Some(rec)) => {
                record_episode(&opts.out_dir, &rec)?;
                episode += 1;
            }
            Ok(None) => {}
            Err(e) => eprintln!("session for episode {episode} ended: {e}"),
        }
        if opts.max_sessions.is_some_and(|m| served + 1 >= m) {
            break;
        }
    }
    Ok(())
}

/// Binds `127.0.0.1:port` and serves forever.
pub fn serve_session(port: u16, env_cfg: &EnvConfig, seed: u64, out_dir: &Path) -> Result<(), ServeError> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    eprintln!("serving on ws://{}", listener.local_addr()?);
    serve(
        listener,
        &ServeOptions {
            env: env_cfg.clone(),
            seed,
            out_dir: out_dir.to_path_buf(),
            max_sessions: None,
        },
    )
}

/// Writes a transcript line per message; used by scripted clients.
pub fn write_transcript<W: Write>(mut out: W, msgs: &[SessionMessage]) -> std::io::Result<()> {
    for m in msgs {
        writeln!(out, "{}", m.to_line())?;
    }
    Ok(())
}
