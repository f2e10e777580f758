use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::Loss;
use crate::search_space::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed,
    Timeout,
}

/// One evaluation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub arm_id: u64,
    /// Bracket index; `None` for non-bracketed runs.
    pub bracket_s: Option<u32>,
    pub rung_i: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub resource: u64,
    /// Units charged to the ledger for this evaluation.
    pub charged: u64,
    pub loss: Loss,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_millis: u64,
    pub timestamp: u64,
}

/// Best configuration known after a bracket finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncumbentRecord {
    pub ledger_consumed: u64,
    pub loss: f64,
    pub arm_id: u64,
    pub bracket_s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub resource: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Configuration>,
}

/// One line of a trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Trial(TrialRecord),
    Incumbent(IncumbentRecord),
}

enum Sink {
    Disabled,
    Memory(Vec<LogLine>),
    File(BufWriter<File>),
}

/// Append-only log of trials and incumbent updates.
///
/// Trial ids are handed out by [`TrialLog::reserve_ids`] so that ids follow
/// arm order within a rung even when the rung runs in parallel.
pub struct TrialLog {
    next_trial: AtomicU64,
    sink: Mutex<Sink>,
}

impl TrialLog {
    /// A log that only hands out trial ids.
    pub fn disabled() -> Self {
        Self::from_sink(Sink::Disabled)
    }

    pub fn in_memory() -> Self {
        Self::from_sink(Sink::Memory(Vec::new()))
    }

    /// Append JSON lines to `path`, creating it if needed.
    pub fn to_file(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::from_sink(Sink::File(BufWriter::new(file))))
    }

    fn from_sink(sink: Sink) -> Self {
        Self {
            next_trial: AtomicU64::new(0),
            sink: Mutex::new(sink),
        }
    }

    /// Start trial ids at `first` (used when a child log covers a slice of a run).
    pub fn starting_at(self, first: u64) -> Self {
        self.next_trial.store(first, Ordering::SeqCst);
        self
    }

    pub fn reserve_ids(&self, count: u64) -> u64 {
        self.next_trial.fetch_add(count, Ordering::SeqCst)
    }

    /// Whether appended lines are kept anywhere.
    pub fn is_enabled(&self) -> bool {
        !matches!(*self.sink.lock().expect("trial log poisoned"), Sink::Disabled)
    }

    /// Move the id counter forward to at least `id`.
    pub fn advance_to(&self, id: u64) {
        self.next_trial.fetch_max(id, Ordering::SeqCst);
    }

    pub fn next_trial_id(&self) -> u64 {
        self.next_trial.load(Ordering::SeqCst)
    }

    pub fn append(&self, line: LogLine) -> io::Result<()> {
        let mut sink = self.sink.lock().expect("trial log poisoned");
        match &mut *sink {
            Sink::Disabled => Ok(()),
            Sink::Memory(lines) => {
                lines.push(line);
                Ok(())
            }
            Sink::File(w) => {
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
                w.flush()
            }
        }
    }

    /// Lines held by an in-memory log (empty for other sinks).
    pub fn lines(&self) -> Vec<LogLine> {
        match &*self.sink.lock().expect("trial log poisoned") {
            Sink::Memory(lines) => lines.clone(),
            _ => Vec::new(),
        }
    }

    /// Trial records held by an in-memory log.
    pub fn trials(&self) -> Vec<TrialRecord> {
        self.lines()
            .into_iter()
            .filter_map(|l| match l {
                LogLine::Trial(t) => Some(t),
                LogLine::Incumbent(_) => None,
            })
            .collect()
    }

    /// Drain an in-memory log's lines.
    pub fn take_lines(&self) -> Vec<LogLine> {
        match &mut *self.sink.lock().expect("trial log poisoned") {
            Sink::Memory(lines) => std::mem::take(lines),
            _ => Vec::new(),
        }
    }
}

impl std::fmt::Debug for TrialLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrialLog")
            .field("next_trial", &self.next_trial_id())
            .finish_non_exhaustive()
    }
}

pub(crate) fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Parse a JSON-lines trial log. Bad lines are returned with their 1-based
/// line number instead of aborting the parse.
pub fn parse_log(text: &str) -> (Vec<LogLine>, Vec<(usize, String)>) {
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(raw) {
            Ok(l) => lines.push(l),
            Err(e) => errors.push((i + 1, e.to_string())),
        }
    }
    (lines, errors)
}
