//! On-disk run layout:
//!
//! ```text
//! <run>/config.snapshot
//! <run>/rules/<id>/events.jsonl
//! <run>/rules/<id>/nli.json
//! <run>/summary.json
//! <run>/tables/*.csv
//! <run>/report.md
//! ```
//!
//! Each event is written through to the file as it happens. A rule whose log
//! ends with `rule_finished` is complete; anything else is rerun on resume.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NliAssessment, RunRecord};
use crate::events::{Event, EventSink};
use crate::nli::{NliCategory, NliScores};

pub const SNAPSHOT_FILE: &str = "config.snapshot";
const EVENTS_FILE: &str = "events.jsonl";
const NLI_FILE: &str = "nli.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0} already holds a run; pass --resume to continue it or choose another directory")]
    AlreadyExists(String),
    #[error("{0} was started with a different configuration; refusing to resume")]
    SnapshotMismatch(String),
    #[error("{0} is not a run directory")]
    NotARun(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// A log that could not be replayed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogError {
    pub rule_id: String,
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LogError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "rule {}, line {}: {}", self.rule_id, self.line, self.message)
        } else {
            write!(f, "rule {}: {}", self.rule_id, self.message)
        }
    }
}

/// Post-hoc NLI assessment of one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliRecord {
    pub original: String,
    pub reconstructed: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<NliScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<NliCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Creates a run directory, or reopens it for resumption when `resume`
    /// is set and the snapshot matches.
    pub fn create(root: &Path, snapshot: &str, resume: bool) -> Result<RunStore, StoreError> {
        let snap = root.join(SNAPSHOT_FILE);
        if snap.exists() {
            if !resume {
                return Err(StoreError::AlreadyExists(root.display().to_string()));
            }
            let old = fs::read_to_string(&snap).map_err(|e| io_err(&snap, e))?;
            if old != snapshot {
                return Err(StoreError::SnapshotMismatch(root.display().to_string()));
            }
        } else {
            fs::create_dir_all(root.join("rules")).map_err(|e| io_err(root, e))?;
            fs::write(&snap, snapshot).map_err(|e| io_err(&snap, e))?;
        }
        fs::create_dir_all(root.join("rules")).map_err(|e| io_err(root, e))?;
        Ok(RunStore { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<RunStore, StoreError> {
        if !root.join(SNAPSHOT_FILE).is_file() {
            return Err(StoreError::NotARun(root.display().to_string()));
        }
        Ok(RunStore { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The run directory's name.
    pub fn run_id(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.root.display().to_string())
    }

    pub fn snapshot(&self) -> Result<String, StoreError> {
        let p = self.root.join(SNAPSHOT_FILE);
        fs::read_to_string(&p).map_err(|e| io_err(&p, e))
    }

    fn rule_dir(&self, id: &str) -> PathBuf {
        self.root.join("rules").join(id)
    }

    pub fn rule_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("rules");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            if entry.path().is_dir() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Whether the rule's log ends with a terminal event.
    pub fn is_complete(&self, id: &str) -> bool {
        let Ok(text) = fs::read_to_string(self.rule_dir(id).join(EVENTS_FILE)) else {
            return false;
        };
        text.lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| serde_json::from_str::<Event>(l).ok())
            .is_some_and(|e| e.is_terminal())
    }

    /// Starts (or restarts) a rule's log.
    pub fn start_rule(&self, id: &str) -> Result<RuleLog, StoreError> {
        let dir = self.rule_dir(id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(EVENTS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        Ok(RuleLog { path, file, error: None })
    }

    pub fn read_events(&self, id: &str) -> Result<Vec<Event>, LogError> {
        let path = self.rule_dir(id).join(EVENTS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| LogError {
            rule_id: id.to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| LogError {
                    rule_id: id.to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// Replays every complete log. Corrupt or unfinished logs are returned
    /// as errors and left out of the records.
    pub fn load_records(&self) -> Result<(Vec<RunRecord>, Vec<LogError>), StoreError> {
        let run_id = self.run_id();
        let mut records = Vec::new();
        let mut problems = Vec::new();
        for id in self.rule_ids()? {
            let events = match self.read_events(&id) {
                Ok(e) => e,
                Err(e) => {
                    problems.push(e);
                    continue;
                }
            };
            match RunRecord::from_events(&run_id, &events) {
                Ok(mut r) if r.is_complete() => {
                    if let Some(n) = self.read_nli(&id)? {
                        if let (Some(scores), Some(category)) = (n.scores, n.category) {
                            r.nli = Some(NliAssessment { scores, category });
                        }
                    }
                    records.push(r);
                }
                Ok(_) => problems.push(LogError {
                    rule_id: id,
                    line: 0,
                    message: "log has no rule_finished event".into(),
                }),
                Err(message) => problems.push(LogError {
                    rule_id: id,
                    line: 0,
                    message,
                }),
            }
        }
        Ok((records, problems))
    }

    pub fn write_nli(&self, id: &str, record: &NliRecord) -> Result<(), StoreError> {
        let path = self.rule_dir(id).join(NLI_FILE);
        let text = serde_json::to_string_pretty(record).expect("serializable") + "\n";
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn read_nli(&self, id: &str) -> Result<Option<NliRecord>, StoreError> {
        let path = self.rule_dir(id).join(NLI_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| io_err(&path, e))
    }

    /// Writes a file relative to the run root, creating parent directories.
    pub fn write_file(&self, rel: &str, contents: &str) -> Result<PathBuf, StoreError> {
        write_file(&self.root.join(rel), contents)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf, StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

/// Append-only event log of one rule. Write errors are kept and reported by
/// [`RuleLog::finish`].
pub struct RuleLog {
    path: PathBuf,
    file: File,
    error: Option<StoreError>,
}

impl RuleLog {
    pub fn finish(self) -> Result<(), StoreError> {
        match self.error {
            Some(e) => Err(e),
            None => self.file.sync_data().map_err(|e| io_err(&self.path, e)),
        }
    }
}

impl EventSink for RuleLog {
    fn emit(&mut self, event: Event) {
        if self.error.is_some() {
            return;
        }
        let mut line = serde_json::to_string(&event).expect("serializable");
        line.push('\n');
        if let Err(e) = self.file.write_all(line.as_bytes()).and_then(|_| self.file.flush()) {
            self.error = Some(io_err(&self.path, e));
        }
    }
}
