//! Rule corpora: JSONL, one `{"id": ..., "text": ...}` object per line.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
}

/// Rule ids double as directory names, so they are restricted to ASCII
/// letters, digits, `_`, `-` and `.` (not leading).
pub fn valid_rule_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>, String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: CorpusRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if !valid_rule_id(&r.id) {
            return Err(format!("line {}: invalid rule id {:?}", i + 1, r.id));
        }
        if !seen.insert(r.id.clone()) {
            return Err(format!("line {}: duplicate rule id {}", i + 1, r.id));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_corpus(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn write_corpus(records: &[CorpusRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}
