//! Replay backend: replies looked up by the prompt's marker.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, CallCounter, PromptMarker, Role, TranslatorBackend};

/// One line of a replay table. Without `attempt`, the entry answers every
/// attempt for its key that has no attempt-specific entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub role: Role,
    pub rule_id: String,
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    pub reply: String,
}

type Key = (Role, String, u32, Option<u32>);

pub struct ScriptedBackend {
    name: String,
    table: HashMap<Key, String>,
    calls: CallCounter,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let table = entries
            .into_iter()
            .map(|e| ((e.role, e.rule_id, e.iteration, e.attempt), e.reply))
            .collect();
        ScriptedBackend {
            name: name.into(),
            table,
            calls: CallCounter::default(),
        }
    }

    /// Parses a JSONL replay table; blank lines are skipped.
    pub fn parse_jsonl(text: &str) -> Result<Vec<ReplayEntry>, String> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect()
    }

    pub fn from_file(name: impl Into<String>, path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let entries = Self::parse_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self::new(name, entries))
    }

    pub fn lookup(&self, marker: &PromptMarker) -> Option<&str> {
        let key = (marker.role, marker.rule_id.clone(), marker.iteration, Some(marker.attempt));
        self.table
            .get(&key)
            .or_else(|| self.table.get(&(key.0, key.1, key.2, None)))
            .map(String::as_str)
    }
}

impl TranslatorBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.bump();
        let marker = PromptMarker::parse(prompt)
            .ok_or_else(|| BackendError::MissingEntry("a prompt without a role marker".into()))?;
        self.lookup(&marker).map(str::to_string).ok_or_else(|| {
            BackendError::MissingEntry(format!(
                "role={} rule={} iteration={} attempt={}",
                marker.role, marker.rule_id, marker.iteration, marker.attempt
            ))
        })
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}
