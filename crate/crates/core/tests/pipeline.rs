//! Stage calls, the well-formedness retry policy and the repair loop driven
//! by hand-written backends.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use roundtrip_core::backends::{BackendError, FnBackend, PromptMarker, Role, TemplateSet, TranslatorBackend};
use roundtrip_core::equivalence::{EquivalenceChecker, EquivalenceStatus};
use roundtrip_core::events::{Chooser, Event};
use roundtrip_core::pipeline::{
    Artifact, CallSite, FixedClock, Pipeline, RoleBackends, StageErrorKind, StageId, WellformednessPolicy,
};
use roundtrip_core::repair::{
    repair_loop, select_stage_random, LoopStatus, RepairCondition, RepairConfig, REASK_LIMIT,
};
use roundtrip_core::smt::Schema;

const SCHEMA: &str = include_str!("../../../data/schema/traffic_sample.smt2");
const GOOD: &str = "(forall ((v Vehicle) (t Int)) (=> (has_permit v t) (stopped v t)))";
const OTHER: &str = "(forall ((v Vehicle) (t Int)) (=> (has_permit v t) (not (stopped v t))))";

fn marker(prompt: &str) -> PromptMarker {
    PromptMarker::parse(prompt).expect("every prompt carries a marker")
}

fn site() -> CallSite<'static> {
    CallSite {
        rule_id: "r1",
        iteration: 0,
    }
}

struct Env {
    schema: Schema,
    templates: TemplateSet,
    clock: FixedClock,
}

impl Env {
    fn new() -> Self {
        Env {
            schema: Schema::load(SCHEMA).unwrap(),
            templates: TemplateSet::builtin(),
            clock: FixedClock(42),
        }
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            schema: &self.schema,
            templates: &self.templates,
            policy: WellformednessPolicy::default(),
            clock: &self.clock,
        }
    }
}

#[test]
fn malformed_output_is_retried_five_times() {
    let env = Env::new();
    let b = FnBackend::new("broken", |_| Ok("(forall ((v Vehicle)) (stopped v".to_string()));
    let err = env
        .pipeline()
        .run_stage(StageId::ONE, &Artifact::Text("rule".into()), site(), &b)
        .unwrap_err();
    assert_eq!(b.call_count(), 5);
    assert_eq!(err.attempts, 5);
    assert!(matches!(err.kind, StageErrorKind::WellformednessExhausted { attempts: 5, .. }));
}

#[test]
fn fixed_on_third_attempt_records_three() {
    let env = Env::new();
    let prompts = Mutex::new(Vec::new());
    let b = FnBackend::new("flaky", |p: &str| {
        prompts.lock().unwrap().push(p.to_string());
        Ok(if marker(p).attempt == 3 {
            GOOD.to_string()
        } else {
            "(forall ((v Vehicle) (t Int)) (flying v t))".to_string()
        })
    });
    let (art, prov) = env
        .pipeline()
        .run_stage(StageId::ONE, &Artifact::Text("rule".into()), site(), &b)
        .unwrap();
    assert!(matches!(art, Artifact::Formula(_)));
    assert_eq!(prov.attempts, 3);
    assert_eq!(prov.role, Role::T1);
    assert_eq!(prov.started_ms, 42);
    let prompts = prompts.lock().unwrap();
    // Retries carry the checker's complaint.
    assert!(!prompts[0].contains("flying"));
    assert!(prompts[1].contains("unknown symbol `flying`"));
    assert!(prompts[0].contains("(declare-fun stopped (Vehicle Int) Bool)"));
}

#[test]
fn backend_errors_are_not_retried() {
    let env = Env::new();
    let b = FnBackend::new("down", |_| Err(BackendError::Transport("refused".into())));
    let err = env
        .pipeline()
        .run_stage(StageId::THREE, &Artifact::Text("x".into()), site(), &b)
        .unwrap_err();
    assert_eq!(b.call_count(), 1);
    assert!(matches!(err.kind, StageErrorKind::Backend(BackendError::Transport(_))));
}

#[test]
fn empty_back_translation_fails() {
    let env = Env::new();
    let b = FnBackend::new("mute", |_| Ok("  \n".to_string()));
    let f = roundtrip_core::smt::parse_formula(GOOD, &env.schema).unwrap();
    assert!(env.pipeline().run_stage(StageId::TWO, &Artifact::Formula(f), site(), &b).is_err());
}

#[test]
fn roundtrip_failure_keeps_completed_calls() {
    let env = Env::new();
    let b = Arc::new(FnBackend::new("half", |p: &str| match marker(p).role {
        Role::T1 => Ok(GOOD.to_string()),
        Role::T2 => Ok("A permitted vehicle stops.".to_string()),
        _ => Ok("nonsense".to_string()),
    }));
    let f = env
        .pipeline()
        .run_roundtrip("r1", "rule", &RoleBackends::uniform(b.clone()))
        .unwrap_err();
    assert_eq!(f.error.role, Role::T3);
    assert_eq!(f.completed.iter().map(|p| p.role).collect::<Vec<_>>(), [Role::T1, Role::T2]);
    assert_eq!(b.call_count(), 2 + 5);
}

/// T1 and T2 answer correctly, T3 drifts until repaired, and the judge says
/// whatever `judge` returns.
fn drifting(judge: impl Fn(u32) -> String + Send + Sync + 'static) -> Arc<dyn TranslatorBackend> {
    Arc::new(FnBackend::new("drift", move |p: &str| {
        let m = marker(p);
        Ok(match m.role {
            Role::T1 | Role::R1 => GOOD.to_string(),
            Role::T2 | Role::R2 => "A vehicle with a permit is stopped.".to_string(),
            Role::T3 => OTHER.to_string(),
            Role::R3 => GOOD.to_string(),
            Role::D => judge(m.attempt),
        })
    }))
}

fn run(
    env: &Env,
    backend: Arc<dyn TranslatorBackend>,
    condition: RepairCondition,
    rule_index: u64,
) -> (roundtrip_core::repair::LoopOutcome, Vec<Event>) {
    let backends = RoleBackends::uniform(backend);
    let p = env.pipeline();
    let inst = p.run_roundtrip("r1", "rule", &backends).unwrap();
    let checker = EquivalenceChecker::new(&Default::default());
    let mut events = Vec::new();
    let out = repair_loop(&p, inst, &RepairConfig::new(condition), &backends, &checker, rule_index, &mut events);
    (out, events)
}

#[test]
fn no_repair_condition_stops_after_the_check() {
    let env = Env::new();
    let (out, events) = run(&env, drifting(|_| unreachable!()), RepairCondition::none(), 0);
    assert_eq!(out.status, LoopStatus::Failure);
    assert_eq!(out.iterations_used, 0);
    assert_eq!(out.final_status, EquivalenceStatus::NotEquivalent);
    assert_eq!(events.len(), 1);
    assert!(matches!(events[0], Event::Check { iteration: 0, .. }));
}

#[test]
fn diagnosis_repairs_in_one_iteration() {
    let env = Env::new();
    let (out, _) = run(
        &env,
        drifting(|_| "FIRST_FAILED_ARROW: 3\nREASONING: the consequent is negated".into()),
        RepairCondition::full(),
        0,
    );
    assert_eq!(out.status, LoopStatus::Success);
    assert_eq!(out.iterations_used, 1);
    // One judge call and one repair call.
    assert_eq!(out.repair_calls(), 2);
}

#[test]
fn unreadable_diagnosis_is_reasked_then_consumes_the_iteration() {
    let env = Env::new();
    let asks = Arc::new(AtomicU32::new(0));
    let seen = asks.clone();
    let (out, events) = run(
        &env,
        drifting(move |_| {
            seen.fetch_add(1, Ordering::Relaxed);
            "I am not sure.".into()
        }),
        RepairCondition::full(),
        0,
    );
    assert_eq!(out.status, LoopStatus::Failure);
    assert_eq!(out.iterations_used, 3);
    assert_eq!(asks.load(Ordering::Relaxed), 3 * (1 + REASK_LIMIT));
    assert!(out.per_iteration.iter().all(|e| e.error.is_some() && e.stage.is_none()));
    assert_eq!(events.iter().filter(|e| matches!(e, Event::IterationFailed { .. })).count(), 3);
}

#[test]
fn judge_answer_on_reask_is_used() {
    let env = Env::new();
    let (out, events) = run(
        &env,
        drifting(|attempt| {
            if attempt < 2 {
                "no idea".into()
            } else {
                "FIRST_FAILED_ARROW: 3\nREASONING: drift".into()
            }
        }),
        RepairCondition::full(),
        0,
    );
    assert_eq!(out.status, LoopStatus::Success);
    assert!(events.iter().any(|e| matches!(e, Event::Diagnosis { attempts: 2, stage: Some(s), .. } if *s == StageId::THREE)));
}

#[test]
fn random_condition_follows_the_seeded_choice() {
    let env = Env::new();
    for seed in 0..20 {
        let (out, events) = run(&env, drifting(|_| unreachable!()), RepairCondition::random(seed), 7);
        let chosen: Vec<StageId> = events
            .iter()
            .filter_map(|e| match e {
                Event::Selection { stage, chooser, .. } => {
                    assert_eq!(*chooser, Chooser::Random);
                    Some(*stage)
                }
                _ => None,
            })
            .collect();
        let expected: Vec<StageId> = (1..=chosen.len() as u64).map(|k| select_stage_random(seed, 7, k)).collect();
        assert_eq!(chosen, expected);
        // Only repairing stage 3 helps here, so the loop stops at the first 3.
        let first3 = expected.iter().position(|s| *s == StageId::THREE);
        assert_eq!(out.status == LoopStatus::Success, first3.is_some());
        assert_eq!(out.iterations_used as usize, first3.map_or(3, |i| i + 1));
    }
}
