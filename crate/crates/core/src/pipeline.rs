//! The three-stage roundtrip T1 -> T2 -> T3 and the well-formedness policy.
//!
//! Every backend call gets a fresh prompt whose first line is a
//! [`PromptMarker`]; nothing is carried between calls. Formal replies are
//! parsed and type-checked, and a failure re-prompts with the error text
//! until the policy's attempt budget is spent.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, PromptMarker, Role, TemplateError, TemplateSet, TranslatorBackend};
use crate::smt::{parse_formula, Formula, Schema};

/// A translation stage, 1 to 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StageId(u8);

impl StageId {
    pub const ONE: StageId = StageId(1);
    pub const TWO: StageId = StageId(2);
    pub const THREE: StageId = StageId(3);
    pub const ALL: [StageId; 3] = [StageId::ONE, StageId::TWO, StageId::THREE];

    pub fn new(index: u8) -> Option<StageId> {
        (1..=3).contains(&index).then_some(StageId(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn translation_role(self) -> Role {
        Role::translation(self.0)
    }

    pub fn repair_role(self) -> Role {
        Role::repair(self.0)
    }
}

impl TryFrom<u8> for StageId {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        StageId::new(v).ok_or_else(|| format!("stage {v} is not 1, 2 or 3"))
    }
}

impl From<StageId> for u8 {
    fn from(s: StageId) -> u8 {
        s.0
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WellformednessPolicy {
    /// Total backend calls allowed for one formal artifact, the first
    /// attempt included.
    pub max_attempts: u32,
}

impl Default for WellformednessPolicy {
    fn default() -> Self {
        WellformednessPolicy { max_attempts: 5 }
    }
}

impl WellformednessPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("max_attempts must be at least 1".into());
        }
        Ok(())
    }
}

/// Source of provenance timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock that never moves; keeps logs byte-identical across runs.
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

/// Who produced an artifact and how many calls it took.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub role: Role,
    pub backend: String,
    pub iteration: u32,
    pub attempts: u32,
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactProvenance {
    pub y_orig: Provenance,
    pub x_prime: Provenance,
    pub y_rt: Provenance,
}

/// The four roundtrip artifacts of one rule. Repairs build a new instance
/// with a higher `version`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundtripInstance {
    pub rule_id: String,
    pub x: String,
    pub y_orig: Formula,
    pub x_prime: String,
    pub y_rt: Formula,
    pub version: u32,
    pub provenance: ArtifactProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StageErrorKind {
    #[error("no well-formed reply after {attempts} attempts; last error: {last_error}")]
    WellformednessExhausted { attempts: u32, last_error: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// A failed call, tagged with its role. `attempts` counts the backend calls
/// that were made before giving up.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{role}: {kind}")]
pub struct StageError {
    pub role: Role,
    pub attempts: u32,
    pub kind: StageErrorKind,
}

impl StageError {
    /// The stage a translation or repair role belongs to.
    pub fn stage(&self) -> Option<StageId> {
        match self.role {
            Role::T1 | Role::R1 => Some(StageId::ONE),
            Role::T2 | Role::R2 => Some(StageId::TWO),
            Role::T3 | Role::R3 => Some(StageId::THREE),
            Role::D => None,
        }
    }
}

/// A roundtrip that stopped at `error`; `completed` holds the provenance of
/// the calls that succeeded before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundtripFailure {
    pub error: StageError,
    pub completed: Vec<Provenance>,
}

/// The backend serving each role.
#[derive(Clone)]
pub struct RoleBackends {
    map: BTreeMap<Role, Arc<dyn TranslatorBackend>>,
}

impl RoleBackends {
    /// One backend for every role.
    pub fn uniform(backend: Arc<dyn TranslatorBackend>) -> Self {
        RoleBackends {
            map: Role::ALL.into_iter().map(|r| (r, backend.clone())).collect(),
        }
    }

    pub fn with(mut self, role: Role, backend: Arc<dyn TranslatorBackend>) -> Self {
        self.map.insert(role, backend);
        self
    }

    pub fn get(&self, role: Role) -> &dyn TranslatorBackend {
        self.map[&role].as_ref()
    }

    /// Call counters of the distinct backends (shared backends once).
    pub fn total_calls(&self) -> u64 {
        let mut seen: Vec<*const ()> = Vec::new();
        let mut total = 0;
        for b in self.map.values() {
            let p = Arc::as_ptr(b) as *const ();
            if !seen.contains(&p) {
                seen.push(p);
                total += b.call_count();
            }
        }
        total
    }
}

/// Drops a Markdown code fence around the reply, if there is one.
pub fn strip_code_fences(reply: &str) -> &str {
    let Some(open) = reply.find("```") else {
        return reply;
    };
    let after = &reply[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// The first balanced top-level s-expression of a reply, with code fences
/// stripped. A reply without parentheses yields its first line (so bare
/// atoms such as `true` pass through). An unbalanced expression yields the
/// rest of the reply, which then fails to parse with a positioned error.
pub fn extract_formula(reply: &str) -> &str {
    let text = strip_code_fences(reply);
    let mut depth = 0usize;
    let mut start = None;
    let mut chars = text.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            ';' => {
                for (_, c) in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '|' | '"' if start.is_some() => {
                for (_, d) in chars.by_ref() {
                    if d == c {
                        break;
                    }
                }
            }
            '(' => {
                start.get_or_insert(i);
                depth += 1;
            }
            ')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    return &text[start.unwrap()..=i];
                }
            }
            _ => {}
        }
    }
    match start {
        Some(s) => &text[s..],
        None => text.trim().lines().next().unwrap_or("").trim(),
    }
}

/// Reply text of a natural-language stage.
pub fn extract_text(reply: &str) -> &str {
    strip_code_fences(reply).trim()
}

/// Input or output of a stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Artifact {
    Text(String),
    Formula(Formula),
}

/// Shared, immutable context for stage and repair calls.
pub struct Pipeline<'a> {
    pub schema: &'a Schema,
    pub templates: &'a TemplateSet,
    pub policy: WellformednessPolicy,
    pub clock: &'a dyn Clock,
}

/// Where a call sits in a run, for the prompt marker.
#[derive(Debug, Clone, Copy)]
pub struct CallSite<'r> {
    pub rule_id: &'r str,
    pub iteration: u32,
}

impl Pipeline<'_> {
    pub(crate) fn prompt(
        &self,
        role: Role,
        site: CallSite<'_>,
        attempt: u32,
        values: &BTreeMap<&str, &str>,
        correction: Option<&str>,
    ) -> Result<String, TemplateError> {
        let mut values = values.clone();
        values.insert("schema", self.schema.source_text());
        let marker = PromptMarker {
            role,
            rule_id: site.rule_id.to_string(),
            iteration: site.iteration,
            attempt,
        };
        let mut prompt = format!("{}\n{}", marker.line(), self.templates.get(role).render(&values)?);
        if let Some(err) = correction {
            let mut m = BTreeMap::new();
            m.insert("error_message", err);
            prompt.push_str("\n\n");
            prompt.push_str(&crate::backends::render_prompt(self.templates.correction(), &m)?);
        }
        Ok(prompt)
    }

    fn provenance(&self, role: Role, backend: &dyn TranslatorBackend, site: CallSite<'_>, attempts: u32, started: u64) -> Provenance {
        Provenance {
            role,
            backend: backend.name().to_string(),
            iteration: site.iteration,
            attempts,
            started_ms: started,
            finished_ms: self.clock.now_ms(),
        }
    }

    /// A call whose reply must be a well-formed formula, re-prompted with the
    /// parse or type error until the attempt budget is spent.
    pub fn formal_call(
        &self,
        role: Role,
        site: CallSite<'_>,
        values: &BTreeMap<&str, &str>,
        backend: &dyn TranslatorBackend,
    ) -> Result<(Formula, Provenance), StageError> {
        let started = self.clock.now_ms();
        let mut last_error: Option<String> = None;
        for attempt in 1..=self.policy.max_attempts {
            let fail = |kind: StageErrorKind, attempts| StageError { role, attempts, kind };
            let prompt = self
                .prompt(role, site, attempt, values, last_error.as_deref())
                .map_err(|e| fail(e.into(), attempt - 1))?;
            let reply = backend.complete(&prompt).map_err(|e| fail(e.into(), attempt))?;
            match parse_formula(extract_formula(&reply), self.schema) {
                Ok(f) => return Ok((f, self.provenance(role, backend, site, attempt, started))),
                Err(e) => {
                    log::debug!("{role} rule {} attempt {attempt}: {e}", site.rule_id);
                    last_error = Some(e.to_string());
                }
            }
        }
        Err(StageError {
            role,
            attempts: self.policy.max_attempts,
            kind: StageErrorKind::WellformednessExhausted {
                attempts: self.policy.max_attempts,
                last_error: last_error.unwrap_or_default(),
            },
        })
    }

    /// A single call whose reply is natural-language text.
    pub fn text_call(
        &self,
        role: Role,
        site: CallSite<'_>,
        values: &BTreeMap<&str, &str>,
        backend: &dyn TranslatorBackend,
    ) -> Result<(String, Provenance), StageError> {
        let started = self.clock.now_ms();
        let prompt = self.prompt(role, site, 1, values, None).map_err(|e| StageError {
            role,
            attempts: 0,
            kind: e.into(),
        })?;
        let fail = |e: BackendError| StageError {
            role,
            attempts: 1,
            kind: e.into(),
        };
        let reply = backend.complete(&prompt).map_err(fail)?;
        let text = extract_text(&reply);
        if text.is_empty() {
            return Err(fail(BackendError::MalformedResponse("empty reply".into())));
        }
        Ok((text.to_string(), self.provenance(role, backend, site, 1, started)))
    }

    /// Runs one translation stage: text -> formula for stages 1 and 3,
    /// formula -> text for stage 2.
    pub fn run_stage(
        &self,
        stage: StageId,
        input: &Artifact,
        site: CallSite<'_>,
        backend: &dyn TranslatorBackend,
    ) -> Result<(Artifact, Provenance), StageError> {
        let role = stage.translation_role();
        let mismatch = || StageError {
            role,
            attempts: 0,
            kind: StageErrorKind::Backend(BackendError::Other(format!("stage {stage} got the wrong artifact type"))),
        };
        match (stage.index(), input) {
            (1, Artifact::Text(x)) => {
                let v = BTreeMap::from([("original_nl", x.as_str())]);
                self.formal_call(role, site, &v, backend).map(|(f, p)| (Artifact::Formula(f), p))
            }
            (2, Artifact::Formula(y)) => {
                let y = y.render();
                let v = BTreeMap::from([("phase1_smt", y.as_str())]);
                self.text_call(role, site, &v, backend).map(|(t, p)| (Artifact::Text(t), p))
            }
            (3, Artifact::Text(x)) => {
                let v = BTreeMap::from([("reconstructed_nl", x.as_str())]);
                self.formal_call(role, site, &v, backend).map(|(f, p)| (Artifact::Formula(f), p))
            }
            _ => Err(mismatch()),
        }
    }

    pub fn t2(&self, y: &Formula, site: CallSite<'_>, backend: &dyn TranslatorBackend) -> Result<(String, Provenance), StageError> {
        let y = y.render();
        self.text_call(Role::T2, site, &BTreeMap::from([("phase1_smt", y.as_str())]), backend)
    }

    pub fn t3(&self, x_prime: &str, site: CallSite<'_>, backend: &dyn TranslatorBackend) -> Result<(Formula, Provenance), StageError> {
        self.formal_call(Role::T3, site, &BTreeMap::from([("reconstructed_nl", x_prime)]), backend)
    }

    /// T1, T2 and T3 in order, at iteration 0.
    pub fn run_roundtrip(&self, rule_id: &str, x: &str, backends: &RoleBackends) -> Result<RoundtripInstance, RoundtripFailure> {
        let site = CallSite { rule_id, iteration: 0 };
        let mut completed = Vec::new();
        let fail = |error, completed| RoundtripFailure { error, completed };
        let (y_orig, p1) = self
            .formal_call(Role::T1, site, &BTreeMap::from([("original_nl", x)]), backends.get(Role::T1))
            .map_err(|e| fail(e, completed.clone()))?;
        completed.push(p1.clone());
        let (x_prime, p2) = self
            .t2(&y_orig, site, backends.get(Role::T2))
            .map_err(|e| fail(e, completed.clone()))?;
        completed.push(p2.clone());
        let (y_rt, p3) = self
            .t3(&x_prime, site, backends.get(Role::T3))
            .map_err(|e| fail(e, completed.clone()))?;
        Ok(RoundtripInstance {
            rule_id: rule_id.to_string(),
            x: x.to_string(),
            y_orig,
            x_prime,
            y_rt,
            version: 0,
            provenance: ArtifactProvenance {
                y_orig: p1,
                x_prime: p2,
                y_rt: p3,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_extraction() {
        assert_eq!(extract_formula("```smt2\n(and a b)\n```"), "(and a b)");
        assert_eq!(extract_formula("Formula: (or (not p) q) and more (x)"), "(or (not p) q)");
        assert_eq!(extract_formula("  true\nsecond line"), "true");
        assert_eq!(extract_formula("; (comment\n(p)"), "(p)");
        assert_eq!(extract_formula("(forall"), "(forall");
    }

    #[test]
    fn stage_ids() {
        assert_eq!(StageId::new(0), None);
        assert!(StageId::ONE < StageId::THREE);
        assert_eq!(serde_json::to_string(&StageId::TWO).unwrap(), "2");
        assert!(serde_json::from_str::<StageId>("4").is_err());
    }
}
