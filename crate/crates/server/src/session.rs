//! Session state, persisted as three files per session in the log
//! directory:
//!
//! - `{id}.meta.json`: who, which schedule, creation index;
//! - `{id}.rounds.jsonl`: round start and close marks;
//! - `{id}.jsonl`: decision events, the exported log.
//!
//! Every record is flushed before the request that produced it returns, and
//! the in-memory state is rebuilt from the files on startup.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use refereval_core::rng::{SeedTree, StreamKind};
use refereval_core::{Hypothesis, TaskId};
use refereval_microworld::{resolve_unclassified, Attributes, Decision, Event, EventWriter, Round, Schedule, SessionLog, Source};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::ApiError;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub log_dir: PathBuf,
    /// Seeds the auto-resolve coin of every session.
    pub seed: u64,
    /// Decisions up to `deadline + grace_ms` are accepted.
    pub grace_ms: u64,
    /// Schedules sessions can be created from, by name.
    pub schedules: BTreeMap<String, Arc<Schedule>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub participant: String,
    pub config: String,
    /// Creation order; selects the session's auto-resolve streams.
    pub index: u64,
    pub created_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MarkKind {
    Started,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct RoundMark {
    round_id: u32,
    mark: MarkKind,
    timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub participant: String,
    pub total_rounds: usize,
    pub practice_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub attributes: Attributes,
}

/// What a participant sees of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPayload {
    pub round_id: u32,
    pub practice: bool,
    pub duration_s: u32,
    pub started_ms: u64,
    pub deadline_ms: u64,
    pub remaining_ms: u64,
    pub tasks: Vec<TaskView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextRound {
    /// True once every round has been played; no round follows.
    pub complete: bool,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub round: Option<RoundPayload>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub round_id: u32,
    pub task_id: TaskId,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round_id: u32,
    pub human_decisions: usize,
    pub auto_resolved: usize,
    pub closed_ms: u64,
}

#[derive(Debug, Clone, Copy)]
struct Active {
    index: usize,
    started_ms: u64,
    deadline_ms: u64,
    closed: bool,
}

struct Session {
    meta: SessionMeta,
    schedule: Arc<Schedule>,
    log: SessionLog,
    /// Rounds started so far; the last one is `active`.
    started: usize,
    active: Option<Active>,
    summaries: BTreeMap<u32, RoundSummary>,
    events: EventWriter,
    marks: File,
    marks_path: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

fn append_line(file: &mut File, path: &Path, line: &str) -> Result<(), ApiError> {
    file.write_all(line.as_bytes()).and_then(|()| file.flush()).map_err(|e| io_err(path, e))
}

/// Reads a JSON-lines file, dropping an unterminated last line left by a
/// crash mid-write.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ApiError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        tracing::warn!(path = %path.display(), "dropping unterminated last line");
        std::fs::write(path, complete).map_err(|e| io_err(path, e))?;
    }
    complete.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(|e| io_err(path, e))).collect()
}

impl Session {
    fn paths(dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
        (dir.join(format!("{id}.meta.json")), dir.join(format!("{id}.rounds.jsonl")), dir.join(format!("{id}.jsonl")))
    }

    fn open(dir: &Path, meta: SessionMeta, schedule: Arc<Schedule>, events: Vec<Event>, marks: Vec<RoundMark>) -> Result<Self, ApiError> {
        let (_, marks_path, events_path) = Self::paths(dir, &meta.session_id);
        let mut log = SessionLog::new(meta.session_id.clone(), meta.participant.clone());
        log.events = events;
        let mut s = Session {
            events: EventWriter::open(&events_path)?,
            marks: OpenOptions::new().create(true).append(true).open(&marks_path).map_err(|e| io_err(&marks_path, e))?,
            marks_path,
            meta,
            schedule,
            log,
            started: 0,
            active: None,
            summaries: BTreeMap::new(),
        };
        for m in marks {
            let index = s.schedule.rounds.iter().position(|r| r.round_id == m.round_id).ok_or_else(|| ApiError::internal(format!("mark for unknown round {}", m.round_id)))?;
            match m.mark {
                MarkKind::Started => {
                    let round = &s.schedule.rounds[index];
                    s.started = index + 1;
                    s.active = Some(Active { index, started_ms: m.timestamp_ms, deadline_ms: m.timestamp_ms + u64::from(round.duration_s) * 1000, closed: false });
                }
                MarkKind::Closed => {
                    if let Some(a) = s.active.as_mut().filter(|a| a.index == index) {
                        a.closed = true;
                    }
                    let summary = s.summary(index, m.timestamp_ms);
                    s.summaries.insert(m.round_id, summary);
                }
            }
        }
        Ok(s)
    }

    fn round(&self, index: usize) -> &Round {
        &self.schedule.rounds[index]
    }

    fn summary(&self, index: usize, closed_ms: u64) -> RoundSummary {
        let round = self.round(index);
        let terminal = self.log.terminal_events(round.round_id);
        let auto = terminal.values().filter(|e| e.source == Source::AutoResolve).count();
        RoundSummary { round_id: round.round_id, human_decisions: terminal.len() - auto, auto_resolved: auto, closed_ms }
    }

    fn mark(&mut self, round_id: u32, mark: MarkKind, timestamp_ms: u64) -> Result<(), ApiError> {
        let mut line = serde_json::to_string(&RoundMark { round_id, mark, timestamp_ms }).expect("mark serializes");
        line.push('\n');
        append_line(&mut self.marks, &self.marks_path, &line)
    }

    fn append(&mut self, event: Event) -> Result<(), ApiError> {
        self.events.append(&event)?;
        self.log.events.push(event);
        Ok(())
    }

    fn payload(&self, a: Active, now: u64) -> RoundPayload {
        let round = self.round(a.index);
        RoundPayload {
            round_id: round.round_id,
            practice: round.practice,
            duration_s: round.duration_s,
            started_ms: a.started_ms,
            deadline_ms: a.deadline_ms,
            remaining_ms: a.deadline_ms.saturating_sub(now),
            tasks: round
                .task_ids
                .iter()
                .map(|&id| TaskView { task_id: id, attributes: self.schedule.task(id).map(|t| t.attributes.clone()).unwrap_or_default() })
                .collect(),
        }
    }

    fn close(&mut self, seed: u64, now: u64) -> Result<RoundSummary, ApiError> {
        let a = self.active.expect("an active round");
        let round_id = self.round(a.index).round_id;
        if a.closed {
            return Ok(self.summaries[&round_id].clone());
        }
        let mut rng = SeedTree::new(seed).stream(StreamKind::Resolve, self.meta.index, u64::from(round_id));
        let schedule = Arc::clone(&self.schedule);
        for e in resolve_unclassified(&schedule.rounds[a.index], &self.log, now, &mut rng) {
            self.append(e)?;
        }
        self.mark(round_id, MarkKind::Closed, now)?;
        self.active = Some(Active { closed: true, ..a });
        let summary = self.summary(a.index, now);
        self.summaries.insert(round_id, summary.clone());
        Ok(summary)
    }

    fn next(&mut self, config: &ServerConfig, now: u64) -> Result<NextRound, ApiError> {
        if let Some(a) = self.active.filter(|a| !a.closed) {
            if now <= a.deadline_ms + config.grace_ms {
                // Re-delivery after a reload.
                return Ok(NextRound { complete: false, round: Some(self.payload(a, now)) });
            }
            self.close(config.seed, now)?;
        }
        if self.started == self.schedule.rounds.len() {
            return Ok(NextRound { complete: true, round: None });
        }
        let index = self.started;
        let round = self.round(index);
        let a = Active { index, started_ms: now, deadline_ms: now + u64::from(round.duration_s) * 1000, closed: false };
        let round_id = round.round_id;
        self.mark(round_id, MarkKind::Started, now)?;
        self.started += 1;
        self.active = Some(a);
        Ok(NextRound { complete: false, round: Some(self.payload(a, now)) })
    }

    /// The open round with this id, or why there is none.
    fn open_round(&self, round_id: u32) -> Result<Active, ApiError> {
        if self.summaries.contains_key(&round_id) {
            return Err(ApiError::round_closed(round_id));
        }
        match self.active {
            Some(a) if self.round(a.index).round_id == round_id => Ok(a),
            _ => Err(ApiError::round_not_active(round_id)),
        }
    }

    fn decide(&mut self, config: &ServerConfig, round_id: u32, d: &DecisionRequest, now: u64) -> Result<Ack, ApiError> {
        let a = self.open_round(round_id)?;
        let round = self.round(a.index);
        if !round.task_ids.contains(&d.task_id) {
            return Err(ApiError::unknown_task(d.task_id, round_id));
        }
        if now > a.deadline_ms + config.grace_ms {
            return Err(ApiError::deadline(round_id, now - a.deadline_ms));
        }
        if self.log.events.iter().any(|e| e.round_id == round_id && e.task_id == d.task_id && e.is_terminal()) {
            return Err(ApiError::duplicate(d.task_id));
        }
        let mut event = self.log.event(now, round, d.task_id, Decision::from(d.label), Source::Human);
        event.client_ts = d.client_ts;
        self.append(event)?;
        Ok(Ack { round_id, task_id: d.task_id, timestamp_ms: now })
    }

    fn complete(&mut self, config: &ServerConfig, round_id: u32, now: u64) -> Result<RoundSummary, ApiError> {
        if let Some(s) = self.summaries.get(&round_id) {
            return Ok(s.clone());
        }
        self.open_round(round_id)?;
        self.close(config.seed, now)
    }

    /// Events of closed rounds, one JSON object per line.
    fn export(&self) -> String {
        self.log.events.iter().filter(|e| self.summaries.contains_key(&e.round_id)).map(Event::to_line).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub task_id: TaskId,
    pub label: Hypothesis,
    #[serde(default)]
    pub client_ts: Option<u64>,
}

/// All sessions. Requests for one session are serialized by its lock.
pub struct SessionStore {
    config: ServerConfig,
    clock: Arc<dyn Clock>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_index: AtomicU64,
}

impl SessionStore {
    /// Opens the store, restoring every session found in the log directory.
    pub fn open(config: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, ApiError> {
        std::fs::create_dir_all(&config.log_dir).map_err(|e| io_err(&config.log_dir, e))?;
        let mut sessions = HashMap::new();
        let mut next_index = 0;
        let entries = std::fs::read_dir(&config.log_dir).map_err(|e| io_err(&config.log_dir, e))?;
        let mut metas: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.to_string_lossy().ends_with(".meta.json")).collect();
        metas.sort();
        for path in metas {
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let meta: SessionMeta = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            let Some(schedule) = config.schedules.get(&meta.config).cloned() else {
                tracing::warn!(session = %meta.session_id, config = %meta.config, "skipping session with unknown configuration");
                continue;
            };
            let (_, marks_path, events_path) = Session::paths(&config.log_dir, &meta.session_id);
            let events = read_jsonl(&events_path)?;
            let marks = read_jsonl(&marks_path)?;
            next_index = next_index.max(meta.index + 1);
            let id = meta.session_id.clone();
            sessions.insert(id, Arc::new(Mutex::new(Session::open(&config.log_dir, meta, schedule, events, marks)?)));
        }
        if !sessions.is_empty() {
            tracing::info!(count = sessions.len(), "restored sessions");
        }
        Ok(SessionStore { config, clock, sessions: RwLock::new(sessions), next_index: AtomicU64::new(next_index) })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().expect("session map lock").get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session, u64) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let session = self.session(id)?;
        let mut guard = session.lock().map_err(|_| ApiError::internal("session lock poisoned"))?;
        let now = self.clock.now_ms();
        f(&mut guard, now)
    }

    pub fn create(&self, config: &str, participant: Option<String>) -> Result<Created, ApiError> {
        let schedule = self.config.schedules.get(config).cloned().ok_or_else(|| ApiError::unknown_config(config))?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let meta = SessionMeta {
            participant: participant.unwrap_or_else(|| format!("anon-{}", &session_id[..8])),
            session_id: session_id.clone(),
            config: config.to_string(),
            index: self.next_index.fetch_add(1, Ordering::SeqCst),
            created_ms: self.clock.now_ms(),
        };
        let (meta_path, _, _) = Session::paths(&self.config.log_dir, &session_id);
        std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes")).map_err(|e| io_err(&meta_path, e))?;
        let created = Created {
            session_id: session_id.clone(),
            participant: meta.participant.clone(),
            total_rounds: schedule.rounds.len(),
            practice_rounds: schedule.rounds.iter().filter(|r| r.practice).count(),
        };
        let session = Session::open(&self.config.log_dir, meta, schedule, Vec::new(), Vec::new())?;
        self.sessions.write().expect("session map lock").insert(session_id.clone(), Arc::new(Mutex::new(session)));
        tracing::info!(session = %session_id, config, "session created");
        Ok(created)
    }

    pub fn next_round(&self, id: &str) -> Result<NextRound, ApiError> {
        self.with_session(id, |s, now| s.next(&self.config, now))
    }

    pub fn decide(&self, id: &str, round_id: u32, d: &DecisionRequest) -> Result<Ack, ApiError> {
        self.with_session(id, |s, now| s.decide(&self.config, round_id, d, now))
    }

    pub fn complete(&self, id: &str, round_id: u32) -> Result<RoundSummary, ApiError> {
        self.with_session(id, |s, now| s.complete(&self.config, round_id, now))
    }

    pub fn export(&self, id: &str) -> Result<String, ApiError> {
        self.with_session(id, |s, _| Ok(s.export()))
    }

    /// The hidden schedule of a session, for analysis.
    pub fn truth(&self, id: &str) -> Result<String, ApiError> {
        self.with_session(id, |s, _| Ok(s.schedule.to_json()))
    }
}
