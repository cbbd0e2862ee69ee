//! First-failure diagnosis, scoped repair operators and the bounded
//! verify-diagnose-repair loop.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Role, TemplateError, TranslatorBackend};
use crate::equivalence::{EquivalenceChecker, EquivalenceStatus, EquivalenceVerdict};
use crate::events::{CallPurpose, Chooser, ConditionKind, Event, EventSink};
use crate::pipeline::{CallSite, Pipeline, Provenance, RoleBackends, RoundtripInstance, StageError, StageId};
use crate::rng::{splitmix64, GOLDEN_GAMMA};

/// Re-asks allowed after an unparseable judge reply.
pub const REASK_LIMIT: u32 = 2;

/// Feedback handed to repair operators under the random condition.
pub const RANDOM_EXPLANATION: &str = "An error was detected at this stage; regenerate the artifact faithfully.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairCondition {
    pub kind: ConditionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RepairCondition {
    pub fn none() -> Self {
        RepairCondition {
            kind: ConditionKind::None,
            seed: None,
        }
    }

    pub fn full() -> Self {
        RepairCondition {
            kind: ConditionKind::Full,
            seed: None,
        }
    }

    pub fn random(seed: u64) -> Self {
        RepairCondition {
            kind: ConditionKind::Random,
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.kind, self.seed) {
            (ConditionKind::Random, None) => Err("the random condition needs a seed".into()),
            (ConditionKind::None | ConditionKind::Full, Some(_)) => {
                Err(format!("a seed is only meaningful for the random condition, not {}", self.kind.as_str()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepairConfig {
    pub max_iterations: u32,
    pub condition: RepairCondition,
}

impl RepairConfig {
    pub fn new(condition: RepairCondition) -> Self {
        RepairConfig {
            max_iterations: 3,
            condition,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("K (max_iterations) must be at least 1".into());
        }
        self.condition.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnosis {
    pub first_failed_stage: StageId,
    pub explanation: String,
    pub raw_reply: String,
    /// Explanation words that only occur in artifacts outside the diagnosed
    /// stage. Advisory.
    pub scope_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagnoseError {
    #[error("judge reply has no FIRST_FAILED_ARROW line: {0:?}")]
    UnparseableReply(String),
    #[error("judge named stage {0}, which is not 1, 2 or 3")]
    InvalidStage(u64),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Reads the stage line and reasoning of a judge reply.
pub fn parse_diagnosis(reply: &str) -> Result<(StageId, String), DiagnoseError> {
    static STAGE: OnceLock<Regex> = OnceLock::new();
    static REASON: OnceLock<Regex> = OnceLock::new();
    let stage_re = STAGE.get_or_init(|| Regex::new(r"(?i)FIRST[_ ]FAILED[_ ](?:ARROW|STAGE)\s*:\s*\[?\s*(\d+)").unwrap());
    let reason_re = REASON.get_or_init(|| Regex::new(r"(?is)REASONING\s*:\s*(.*)").unwrap());
    let caps = stage_re
        .captures(reply)
        .ok_or_else(|| DiagnoseError::UnparseableReply(reply.chars().take(200).collect()))?;
    let n: u64 = caps[1].parse().unwrap_or(u64::MAX);
    let stage = u8::try_from(n)
        .ok()
        .and_then(StageId::new)
        .ok_or(DiagnoseError::InvalidStage(n))?;
    let explanation = reason_re
        .captures(reply)
        .map(|c| c[1].trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| reply.trim().to_string());
    Ok((stage, explanation))
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| w.len() >= 4)
        .map(str::to_lowercase)
        .collect()
}

/// Words of `explanation` that occur only in the artifacts the diagnosed
/// stage must not reference.
pub fn scope_warnings(stage: StageId, instance: &RoundtripInstance, explanation: &str) -> Vec<String> {
    let y_orig = instance.y_orig.render();
    let y_rt = instance.y_rt.render();
    let artifacts = [instance.x.as_str(), y_orig.as_str(), instance.x_prime.as_str(), y_rt.as_str()];
    let (relevant, excluded): (Vec<usize>, Vec<usize>) = match stage.index() {
        1 => (vec![0, 1], vec![2, 3]),
        2 => (vec![1, 2], vec![0, 3]),
        _ => (vec![2, 3], vec![0, 1]),
    };
    let inside: BTreeSet<String> = relevant.iter().flat_map(|&i| words(artifacts[i])).collect();
    let outside: BTreeSet<String> = excluded.iter().flat_map(|&i| words(artifacts[i])).collect();
    words(explanation)
        .into_iter()
        .filter(|w| outside.contains(w) && !inside.contains(w))
        .collect()
}

/// Calls the judge once, re-asking up to [`REASK_LIMIT`] times when the
/// reply cannot be read. Returns the result and the number of judge calls.
pub fn diagnose(
    pipeline: &Pipeline<'_>,
    instance: &RoundtripInstance,
    judge: &dyn TranslatorBackend,
    iteration: u32,
) -> (Result<Diagnosis, DiagnoseError>, u32) {
    let y_orig = instance.y_orig.render();
    let y_rt = instance.y_rt.render();
    let values = BTreeMap::from([
        ("original_nl", instance.x.as_str()),
        ("phase1_smt", y_orig.as_str()),
        ("reconstructed_nl", instance.x_prime.as_str()),
        ("phase3_smt", y_rt.as_str()),
    ]);
    let site = CallSite {
        rule_id: &instance.rule_id,
        iteration,
    };
    let mut correction: Option<String> = None;
    let mut calls = 0;
    let mut last = DiagnoseError::UnparseableReply(String::new());
    for attempt in 1..=REASK_LIMIT + 1 {
        let prompt = match pipeline.prompt(Role::D, site, attempt, &values, correction.as_deref()) {
            Ok(p) => p,
            Err(e) => return (Err(e.into()), calls),
        };
        calls += 1;
        let reply = match judge.complete(&prompt) {
            Ok(r) => r,
            Err(e) => return (Err(e.into()), calls),
        };
        match parse_diagnosis(&reply) {
            Ok((stage, explanation)) => {
                let scope_warnings = scope_warnings(stage, instance, &explanation);
                return (
                    Ok(Diagnosis {
                        first_failed_stage: stage,
                        explanation,
                        raw_reply: reply,
                        scope_warnings,
                    }),
                    calls,
                );
            }
            Err(e) => {
                correction = Some(format!(
                    "{e}. The reply must contain a line `FIRST_FAILED_ARROW: N` with N one of 1, 2, 3, followed by `REASONING:`."
                ));
                last = e;
            }
        }
    }
    (Err(last), calls)
}

/// The stage picked under the random condition. `iteration` is the 1-based
/// repair iteration.
pub fn select_stage_random(seed: u64, rule_index: u64, iteration: u64) -> StageId {
    let x = seed ^ rule_index.wrapping_mul(GOLDEN_GAMMA) ^ iteration;
    StageId::new((splitmix64(x) % 3) as u8 + 1).unwrap()
}

/// Repairs `stage` and regenerates every downstream artifact. Provenance of
/// each successful call is appended to `calls`, in order; a failing call is
/// reported through the error.
#[allow(clippy::too_many_arguments)]
pub fn apply_repair(
    pipeline: &Pipeline<'_>,
    stage: StageId,
    instance: &RoundtripInstance,
    explanation: &str,
    backends: &RoleBackends,
    iteration: u32,
    calls: &mut Vec<Provenance>,
) -> Result<RoundtripInstance, StageError> {
    let site = CallSite {
        rule_id: &instance.rule_id,
        iteration,
    };
    let mut next = instance.clone();
    next.version += 1;
    let y_orig_text = instance.y_orig.render();
    let y_rt_text = instance.y_rt.render();
    match stage.index() {
        1 => {
            let values = BTreeMap::from([
                ("original_nl", instance.x.as_str()),
                ("phase1_smt", y_orig_text.as_str()),
                ("diagnostic_feedback", explanation),
            ]);
            let (y, p) = pipeline.formal_call(Role::R1, site, &values, backends.get(Role::R1))?;
            calls.push(p.clone());
            next.y_orig = y;
            next.provenance.y_orig = p;
            let (x, p) = pipeline.t2(&next.y_orig, site, backends.get(Role::T2))?;
            calls.push(p.clone());
            next.x_prime = x;
            next.provenance.x_prime = p;
            let (y, p) = pipeline.t3(&next.x_prime, site, backends.get(Role::T3))?;
            calls.push(p.clone());
            next.y_rt = y;
            next.provenance.y_rt = p;
        }
        2 => {
            let values = BTreeMap::from([
                ("phase1_smt", y_orig_text.as_str()),
                ("reconstructed_nl", instance.x_prime.as_str()),
                ("diagnostic_feedback", explanation),
            ]);
            let (x, p) = pipeline.text_call(Role::R2, site, &values, backends.get(Role::R2))?;
            calls.push(p.clone());
            next.x_prime = x;
            next.provenance.x_prime = p;
            let (y, p) = pipeline.t3(&next.x_prime, site, backends.get(Role::T3))?;
            calls.push(p.clone());
            next.y_rt = y;
            next.provenance.y_rt = p;
        }
        _ => {
            let values = BTreeMap::from([
                ("reconstructed_nl", instance.x_prime.as_str()),
                ("phase3_smt", y_rt_text.as_str()),
                ("diagnostic_feedback", explanation),
            ]);
            let (y, p) = pipeline.formal_call(Role::R3, site, &values, backends.get(Role::R3))?;
            calls.push(p.clone());
            next.y_rt = y;
            next.provenance.y_rt = p;
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationEntry {
    pub iteration: u32,
    /// None when diagnosis failed before a stage was chosen.
    pub stage: Option<StageId>,
    pub chooser: Chooser,
    /// None when the iteration failed before the re-check.
    pub verdict: Option<EquivalenceStatus>,
    pub error: Option<String>,
    /// Backend calls made in this iteration (judge, repair, regeneration).
    pub calls: u64,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub status: LoopStatus,
    pub iterations_used: u32,
    pub initial_verdict: EquivalenceVerdict,
    pub per_iteration: Vec<IterationEntry>,
    pub final_instance: RoundtripInstance,
    pub final_status: EquivalenceStatus,
}

impl LoopOutcome {
    pub fn repair_calls(&self) -> u64 {
        self.per_iteration.iter().map(|e| e.calls).sum()
    }
}

fn purpose(role: Role) -> CallPurpose {
    match role {
        Role::R1 | Role::R2 | Role::R3 => CallPurpose::Repair,
        _ => CallPurpose::Regeneration,
    }
}

fn artifact_of(instance: &RoundtripInstance, role: Role) -> String {
    match role {
        Role::R1 | Role::T1 => instance.y_orig.render(),
        Role::R2 | Role::T2 => instance.x_prime.clone(),
        _ => instance.y_rt.render(),
    }
}

/// Check, then up to K rounds of choose-stage, repair, re-check. An unknown
/// verdict steers the loop like a failed check.
#[allow(clippy::too_many_arguments)]
pub fn repair_loop(
    pipeline: &Pipeline<'_>,
    instance: RoundtripInstance,
    config: &RepairConfig,
    backends: &RoleBackends,
    checker: &EquivalenceChecker,
    rule_index: u64,
    sink: &mut dyn EventSink,
) -> LoopOutcome {
    let initial = checker.decide(&instance.y_orig, &instance.y_rt, pipeline.schema);
    sink.emit(Event::check(0, &initial));
    let mut outcome = LoopOutcome {
        status: LoopStatus::Failure,
        iterations_used: 0,
        final_status: initial.status,
        initial_verdict: initial,
        per_iteration: Vec::new(),
        final_instance: instance,
    };
    if outcome.final_status == EquivalenceStatus::Equivalent {
        outcome.status = LoopStatus::Success;
        return outcome;
    }
    if config.condition.kind == ConditionKind::None {
        return outcome;
    }
    for k in 1..=config.max_iterations {
        outcome.iterations_used = k;
        let current = &outcome.final_instance;
        let chooser = match config.condition.kind {
            ConditionKind::Random => Chooser::Random,
            _ => Chooser::Diagnosis,
        };
        let mut entry = IterationEntry {
            iteration: k,
            stage: None,
            chooser,
            verdict: None,
            error: None,
            calls: 0,
        };
        let (stage, explanation) = match config.condition.kind {
            ConditionKind::Random => {
                let seed = config.condition.seed.unwrap_or(0);
                (select_stage_random(seed, rule_index, u64::from(k)), RANDOM_EXPLANATION.to_string())
            }
            _ => {
                let (result, calls) = diagnose(pipeline, current, backends.get(Role::D), k);
                entry.calls += u64::from(calls);
                match result {
                    Ok(d) => {
                        sink.emit(Event::Diagnosis {
                            iteration: k,
                            attempts: calls,
                            stage: Some(d.first_failed_stage),
                            explanation: Some(d.explanation.clone()),
                            scope_warnings: d.scope_warnings.clone(),
                            error: None,
                        });
                        for w in &d.scope_warnings {
                            log::warn!("rule {}: diagnosis mentions `{w}` outside its stage", current.rule_id);
                        }
                        (d.first_failed_stage, d.explanation)
                    }
                    Err(e) => {
                        sink.emit(Event::Diagnosis {
                            iteration: k,
                            attempts: calls,
                            stage: None,
                            explanation: None,
                            scope_warnings: Vec::new(),
                            error: Some(e.to_string()),
                        });
                        let cause = format!("diagnosis failed: {e}");
                        sink.emit(Event::IterationFailed {
                            iteration: k,
                            cause: cause.clone(),
                        });
                        entry.error = Some(cause);
                        outcome.per_iteration.push(entry);
                        continue;
                    }
                }
            }
        };
        entry.stage = Some(stage);
        sink.emit(Event::Selection {
            iteration: k,
            stage,
            chooser,
        });
        let mut calls = Vec::new();
        let repaired = apply_repair(pipeline, stage, current, &explanation, backends, k, &mut calls);
        entry.calls += calls.iter().map(|p| u64::from(p.attempts)).sum::<u64>();
        let emit_calls = |sink: &mut dyn EventSink, inst: &RoundtripInstance| {
            for p in &calls {
                sink.emit(Event::call(p, purpose(p.role), artifact_of(inst, p.role)));
            }
        };
        match repaired {
            Ok(next) => {
                emit_calls(sink, &next);
                let v = checker.decide(&next.y_orig, &next.y_rt, pipeline.schema);
                sink.emit(Event::check(k, &v));
                entry.verdict = Some(v.status);
                outcome.final_status = v.status;
                outcome.final_instance = next;
                outcome.per_iteration.push(entry);
                if v.status == EquivalenceStatus::Equivalent {
                    outcome.status = LoopStatus::Success;
                    return outcome;
                }
            }
            Err(e) => {
                // Artifacts of the partial repair are discarded, so the
                // successful calls are logged without their outputs.
                for p in &calls {
                    sink.emit(Event::Call {
                        iteration: p.iteration,
                        role: p.role,
                        purpose: purpose(p.role),
                        backend: p.backend.clone(),
                        attempts: p.attempts,
                        artifact: None,
                        error: None,
                    });
                }
                entry.calls += u64::from(e.attempts);
                sink.emit(Event::Call {
                    iteration: k,
                    role: e.role,
                    purpose: purpose(e.role),
                    backend: backends.get(e.role).name().to_string(),
                    attempts: e.attempts,
                    artifact: None,
                    error: Some(e.to_string()),
                });
                let cause = format!("repair failed: {e}");
                sink.emit(Event::IterationFailed {
                    iteration: k,
                    cause: cause.clone(),
                });
                entry.error = Some(cause);
                outcome.per_iteration.push(entry);
            }
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnosis_parsing() {
        let (s, e) = parse_diagnosis("FIRST_FAILED_ARROW: 2\nREASONING: drop of exception clause").unwrap();
        assert_eq!((s, e.as_str()), (StageId::TWO, "drop of exception clause"));
        assert_eq!(parse_diagnosis("First failed stage: [3]").unwrap().0, StageId::THREE);
        assert_eq!(parse_diagnosis("FIRST_FAILED_ARROW: 7").unwrap_err(), DiagnoseError::InvalidStage(7));
        assert!(matches!(parse_diagnosis("stage seven"), Err(DiagnoseError::UnparseableReply(_))));
    }

    #[test]
    fn random_stage_reference_value() {
        // splitmix64(0) = 0xe220a8397b1dcdaf, which is 1 mod 3.
        assert_eq!(select_stage_random(0, 0, 0), StageId::TWO);
        assert_eq!(select_stage_random(9, 4, 2), select_stage_random(9, 4, 2));
    }

    #[test]
    fn condition_validation() {
        assert!(RepairCondition::random(1).validate().is_ok());
        assert!(RepairCondition {
            kind: ConditionKind::Random,
            seed: None
        }
        .validate()
        .is_err());
        assert!(RepairConfig {
            max_iterations: 0,
            condition: RepairCondition::full()
        }
        .validate()
        .is_err());
    }
}
