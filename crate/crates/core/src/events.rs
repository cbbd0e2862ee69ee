//! Structured per-rule events. One JSON object per line, discriminated by
//! `type`; replaying a rule's events rebuilds its run record.

use serde::{Deserialize, Serialize};

use crate::backends::Role;
use crate::equivalence::{CheckBackend, EquivalenceStatus, EquivalenceVerdict};
use crate::pipeline::{Provenance, StageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    None,
    Random,
    #[default]
    Full,
}

impl ConditionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::None => "none",
            ConditionKind::Random => "random",
            ConditionKind::Full => "full",
        }
    }
}

impl std::str::FromStr for ConditionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ConditionKind::None),
            "random" => Ok(ConditionKind::Random),
            "full" => Ok(ConditionKind::Full),
            _ => Err(format!("unknown condition `{s}` (expected none, random or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallPurpose {
    /// The initial T1, T2, T3 roundtrip.
    Initial,
    /// A repair operator call.
    Repair,
    /// Downstream regeneration after a repair.
    Regeneration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chooser {
    Diagnosis,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleOutcome {
    Success,
    Failure,
    /// The initial roundtrip could not be built.
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    RuleStarted {
        rule_id: String,
        condition: ConditionKind,
        text: String,
    },
    Call {
        iteration: u32,
        role: Role,
        purpose: CallPurpose,
        backend: String,
        attempts: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        artifact: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Check {
        iteration: u32,
        status: EquivalenceStatus,
        backend: CheckBackend,
        bounded: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counterexample: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Diagnosis {
        iteration: u32,
        attempts: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stage: Option<StageId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        explanation: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        scope_warnings: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Selection {
        iteration: u32,
        stage: StageId,
        chooser: Chooser,
    },
    IterationFailed {
        iteration: u32,
        cause: String,
    },
    RuleFinished {
        outcome: RuleOutcome,
        iterations_used: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_status: Option<EquivalenceStatus>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl Event {
    pub fn call(p: &Provenance, purpose: CallPurpose, artifact: String) -> Event {
        Event::Call {
            iteration: p.iteration,
            role: p.role,
            purpose,
            backend: p.backend.clone(),
            attempts: p.attempts,
            artifact: Some(artifact),
            error: None,
        }
    }

    pub fn check(iteration: u32, v: &EquivalenceVerdict) -> Event {
        Event::Check {
            iteration,
            status: v.status,
            backend: v.backend,
            bounded: v.bounded,
            counterexample: v.counterexample.as_ref().map(|c| c.to_string()),
            detail: v.detail.clone(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Event::RuleFinished { .. })
    }
}

/// Receives events as they happen.
pub trait EventSink {
    fn emit(&mut self, event: Event);
}

impl EventSink for Vec<Event> {
    fn emit(&mut self, event: Event) {
        self.push(event);
    }
}

/// Discards events.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _: Event) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let e = Event::Selection {
            iteration: 2,
            stage: StageId::THREE,
            chooser: Chooser::Random,
        };
        let line = serde_json::to_string(&e).unwrap();
        assert_eq!(line, r#"{"type":"selection","iteration":2,"stage":3,"chooser":"random"}"#);
        assert_eq!(serde_json::from_str::<Event>(&line).unwrap(), e);
    }
}
