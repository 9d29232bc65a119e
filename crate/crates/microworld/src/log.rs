//! Session logs: one JSON object per line, appended as decisions arrive.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use refereval_core::{Hypothesis, TaskId};
use serde::{Deserialize, Serialize};

use crate::error::{MicroworldError, Result};
use crate::schedule::{Round, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    H0,
    H1,
    /// Recorded but not terminal; the task still needs a label.
    #[serde(rename = "unclassified")]
    Unclassified,
}

impl Decision {
    pub fn label(self) -> Option<Hypothesis> {
        match self {
            Decision::H0 => Some(Hypothesis::H0),
            Decision::H1 => Some(Hypothesis::H1),
            Decision::Unclassified => None,
        }
    }
}

impl From<Hypothesis> for Decision {
    fn from(h: Hypothesis) -> Self {
        match h {
            Hypothesis::H0 => Decision::H0,
            Hypothesis::H1 => Decision::H1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Human,
    AutoResolve,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub session_id: String,
    pub participant: String,
    /// Server clock, milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub round_id: u32,
    pub task_id: TaskId,
    pub decision: Decision,
    pub source: Source,
    #[serde(default)]
    pub practice: bool,
    /// Client clock as reported; never used for deadlines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<u64>,
}

impl Event {
    pub fn is_terminal(&self) -> bool {
        self.decision.label().is_some()
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("event serializes");
        s.push('\n');
        s
    }
}

/// The events of one session, in log order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub participant: String,
    pub events: Vec<Event>,
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>, participant: impl Into<String>) -> Self {
        SessionLog { session_id: session_id.into(), participant: participant.into(), events: Vec::new() }
    }

    /// A log event for this session.
    pub fn event(&self, timestamp_ms: u64, round: &Round, task_id: TaskId, decision: Decision, source: Source) -> Event {
        Event {
            session_id: self.session_id.clone(),
            participant: self.participant.clone(),
            timestamp_ms,
            round_id: round.round_id,
            task_id,
            decision,
            source,
            practice: round.practice,
            client_ts: None,
        }
    }

    /// Tasks of `round_id` that already have a terminal event.
    pub fn labelled(&self, round_id: u32) -> BTreeSet<TaskId> {
        self.events.iter().filter(|e| e.round_id == round_id && e.is_terminal()).map(|e| e.task_id).collect()
    }

    /// First terminal label of every task in `round_id`.
    pub fn labels(&self, round_id: u32) -> BTreeMap<TaskId, Hypothesis> {
        let mut out = BTreeMap::new();
        for e in self.events.iter().filter(|e| e.round_id == round_id) {
            if let Some(h) = e.decision.label() {
                out.entry(e.task_id).or_insert(h);
            }
        }
        out
    }

    /// Terminal events of `round_id`, one per task.
    pub fn terminal_events(&self, round_id: u32) -> BTreeMap<TaskId, &Event> {
        let mut out = BTreeMap::new();
        for e in self.events.iter().filter(|e| e.round_id == round_id && e.is_terminal()) {
            out.entry(e.task_id).or_insert(e);
        }
        out
    }

    /// Checks that every task of every round present in the log has
    /// exactly one terminal event, that no event names a task outside its
    /// round, and that timestamps never decrease.
    pub fn check(&self, schedule: &Schedule) -> Result<()> {
        let bad = |m: String| Err(MicroworldError::Config(format!("session {}: {m}", self.session_id)));
        if self.events.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
            return bad("timestamps decrease".into());
        }
        let rounds: BTreeSet<u32> = self.events.iter().map(|e| e.round_id).collect();
        for rid in rounds {
            let Some(round) = schedule.round(rid) else {
                return bad(format!("unknown round {rid}"));
            };
            let mut seen: BTreeMap<TaskId, usize> = BTreeMap::new();
            for e in self.events.iter().filter(|e| e.round_id == rid) {
                if !round.task_ids.contains(&e.task_id) {
                    return bad(format!("task {} is not assigned in round {rid}", e.task_id));
                }
                if e.is_terminal() {
                    *seen.entry(e.task_id).or_default() += 1;
                }
            }
            for id in &round.task_ids {
                match seen.get(id).copied().unwrap_or(0) {
                    1 => {}
                    n => return bad(format!("task {id} of round {rid} has {n} terminal events")),
                }
            }
        }
        Ok(())
    }
}

/// Labels every task of `round` that has no terminal event in `log` with a
/// fair coin. The events carry `at_ms`, the time the round closed.
pub fn resolve_unclassified<R: Rng + ?Sized>(round: &Round, log: &SessionLog, at_ms: u64, rng: &mut R) -> Vec<Event> {
    let done = log.labelled(round.round_id);
    round
        .task_ids
        .iter()
        .filter(|id| !done.contains(id))
        .map(|&id| {
            let label = Hypothesis::from_positive(rng.random_bool(0.5));
            log.event(at_ms, round, id, label.into(), Source::AutoResolve)
        })
        .collect()
}

fn json_error(path: &Path, line: usize, source: serde_json::Error) -> MicroworldError {
    MicroworldError::Json { path: path.to_owned(), line, source }
}

fn io_error(path: &Path, source: std::io::Error) -> MicroworldError {
    MicroworldError::Io { path: path.to_owned(), source }
}

/// Reads a JSON-lines log. Blank lines are skipped; errors report the line.
pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| json_error(path, i + 1, e))?);
    }
    Ok(out)
}

/// Splits events into sessions, keeping first-appearance order of sessions
/// and log order within each.
pub fn group_sessions(events: impl IntoIterator<Item = Event>) -> Vec<SessionLog> {
    let mut logs: Vec<SessionLog> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for e in events {
        let i = *index.entry(e.session_id.clone()).or_insert_with(|| {
            logs.push(SessionLog::new(e.session_id.clone(), e.participant.clone()));
            logs.len() - 1
        });
        logs[i].events.push(e);
    }
    logs
}

/// Reads and groups the sessions of several log files.
pub fn read_logs(paths: &[PathBuf]) -> Result<Vec<SessionLog>> {
    let mut events = Vec::new();
    for p in paths {
        events.extend(read_events(p)?);
    }
    Ok(group_sessions(events))
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let text: String = events.iter().map(Event::to_line).collect();
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Append-only writer that flushes each event before returning.
#[derive(Debug)]
pub struct EventWriter {
    path: PathBuf,
    file: File,
}

impl EventWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_error(path, e))?;
        Ok(EventWriter { path: path.to_owned(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> Result<()> {
        self.file.write_all(event.to_line().as_bytes()).and_then(|()| self.file.flush()).map_err(|e| io_error(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::RoundPolicy;
    use refereval_core::rng::{SeedTree, StreamKind};

    fn round(ids: &[TaskId]) -> Round {
        Round {
            round_id: 4,
            policy: RoundPolicy::Calibration,
            practice: false,
            batch_id: None,
            task_ids: ids.to_vec(),
            auto_decisions: BTreeMap::new(),
            duration_s: 120,
        }
    }

    #[test]
    fn wire_format() {
        let log = SessionLog::new("s1", "p1");
        let e = log.event(1_000, &round(&[7]), 7, Decision::H1, Source::AutoResolve);
        assert_eq!(
            e.to_line(),
            "{\"session_id\":\"s1\",\"participant\":\"p1\",\"timestamp_ms\":1000,\"round_id\":4,\"task_id\":7,\"decision\":\"H1\",\"source\":\"auto-resolve\",\"practice\":false}\n"
        );
        let u: Event = serde_json::from_str(&e.to_line().replace("\"H1\"", "\"unclassified\"")).unwrap();
        assert_eq!(u.decision, Decision::Unclassified);
        assert!(!u.is_terminal());
    }

    #[test]
    fn resolve_fills_gaps_only() {
        let r = round(&[1, 2, 3]);
        let mut log = SessionLog::new("s", "p");
        log.events.push(log.event(10, &r, 2, Decision::H0, Source::Human));
        log.events.push(log.event(11, &r, 3, Decision::Unclassified, Source::Human));
        let mut rng = SeedTree::new(1).stream(StreamKind::Resolve, 0, 0);
        let ev = resolve_unclassified(&r, &log, 500, &mut rng);
        assert_eq!(ev.iter().map(|e| e.task_id).collect::<Vec<_>>(), vec![1, 3]);
        assert!(ev.iter().all(|e| e.source == Source::AutoResolve && e.timestamp_ms == 500 && e.is_terminal()));
        log.events.extend(ev);
        assert!(resolve_unclassified(&r, &log, 600, &mut rng).is_empty());
        assert_eq!(log.labels(4).len(), 3);
    }

    #[test]
    fn resolve_is_a_fair_coin() {
        let r = round(&[0]);
        let log = SessionLog::new("s", "p");
        let seeds = SeedTree::new(99);
        let n = 10_000;
        let h1 = (0..n).filter(|&i| resolve_unclassified(&r, &log, 0, &mut seeds.stream(StreamKind::Resolve, i, 0))[0].decision == Decision::H1).count();
        let se = (0.25 / n as f64).sqrt();
        assert!((h1 as f64 / n as f64 - 0.5).abs() < 4.0 * se, "{h1}");
    }

    #[test]
    fn file_round_trip_and_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let r = round(&[1, 2]);
        let a = SessionLog::new("a", "pa");
        let b = SessionLog::new("b", "pb");
        let events = vec![
            a.event(1, &r, 1, Decision::H0, Source::Human),
            b.event(2, &r, 1, Decision::H1, Source::Human),
            a.event(3, &r, 2, Decision::H1, Source::AutoResolve),
        ];
        let mut w = EventWriter::open(&path).unwrap();
        for e in &events {
            w.append(e).unwrap();
        }
        // Readable while the writer is still open.
        assert_eq!(read_events(&path).unwrap(), events);
        let logs = read_logs(std::slice::from_ref(&path)).unwrap();
        assert_eq!(logs.iter().map(|l| (l.session_id.as_str(), l.events.len())).collect::<Vec<_>>(), vec![("a", 2), ("b", 1)]);

        std::fs::write(&path, "\n{\"bogus\":1}\n").unwrap();
        match read_events(&path) {
            Err(MicroworldError::Json { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
