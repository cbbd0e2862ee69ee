//! The worked fire-hose example replayed through the whole engine.

use std::path::PathBuf;
use std::sync::Arc;

use roundtrip_core::backends::{Role, ScriptedBackend, TemplateSet, TranslatorBackend};
use roundtrip_core::corpus::load_corpus;
use roundtrip_core::equivalence::{EquivalenceChecker, EquivalenceConfig, EquivalenceStatus};
use roundtrip_core::events::{CallPurpose, Chooser, Event, RuleOutcome};
use roundtrip_core::experiment::Experiment;
use roundtrip_core::pipeline::{FixedClock, Pipeline, RoleBackends, StageId, WellformednessPolicy};
use roundtrip_core::repair::{LoopStatus, RepairCondition, RepairConfig};
use roundtrip_core::report::RunRecord;
use roundtrip_core::smt::{parse_formula, Schema};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

#[test]
fn single_iteration_repair_of_the_fire_hose_rule() {
    let schema = Schema::load(&std::fs::read_to_string(data("schema/traffic_sample.smt2")).unwrap()).unwrap();
    let corpus = load_corpus(&data("worked_example/corpus.jsonl")).unwrap();
    let scripted = Arc::new(ScriptedBackend::from_file("scripted", &data("worked_example/replay.jsonl")).unwrap());
    let templates = TemplateSet::builtin();
    let clock = FixedClock(0);
    let exp = Experiment {
        pipeline: Pipeline {
            schema: &schema,
            templates: &templates,
            policy: WellformednessPolicy::default(),
            clock: &clock,
        },
        backends: RoleBackends::uniform(scripted.clone()),
        checker: EquivalenceChecker::new(&EquivalenceConfig::default()),
        repair: RepairConfig::new(RepairCondition::full()),
    };
    let mut events: Vec<Event> = Vec::new();
    let outcome = exp.run_rule(0, &corpus[0], &mut events).unwrap();

    assert_eq!(outcome.initial_verdict.status, EquivalenceStatus::NotEquivalent);
    assert_eq!(outcome.status, LoopStatus::Success);
    assert_eq!(outcome.iterations_used, 1);
    assert_eq!(outcome.final_status, EquivalenceStatus::Equivalent);
    assert_eq!(outcome.per_iteration.len(), 1);
    assert_eq!(outcome.per_iteration[0].stage, Some(StageId::THREE));
    assert_eq!(outcome.per_iteration[0].chooser, Chooser::Diagnosis);

    // Only the re-formalization changed; the repaired formula is the
    // expected one.
    let repaired = parse_formula(
        &std::fs::read_to_string(data("worked_example/y_rt_repaired.smt2")).unwrap(),
        &schema,
    )
    .unwrap();
    assert_eq!(outcome.final_instance.y_rt, repaired);
    assert_eq!(
        outcome.final_instance.y_orig,
        parse_formula(&std::fs::read_to_string(data("worked_example/y_orig.smt2")).unwrap(), &schema).unwrap()
    );

    // T1, T2, T3, D, R3: five calls, one each.
    assert_eq!(scripted.call_count(), 5);
    let kinds: Vec<&str> = events
        .iter()
        .map(|e| match e {
            Event::RuleStarted { .. } => "start",
            Event::Call { role, purpose, .. } => match (role, purpose) {
                (Role::R3, CallPurpose::Repair) => "R3",
                (_, CallPurpose::Initial) => "initial",
                _ => "other",
            },
            Event::Check { .. } => "check",
            Event::Diagnosis { stage: Some(StageId::THREE), .. } => "diagnosis-3",
            Event::Diagnosis { .. } => "diagnosis",
            Event::Selection { .. } => "select",
            Event::IterationFailed { .. } => "failed",
            Event::RuleFinished { .. } => "finish",
        })
        .collect();
    assert_eq!(
        kinds,
        ["start", "initial", "initial", "initial", "check", "diagnosis-3", "select", "R3", "check", "finish"]
    );

    let record = RunRecord::from_events("worked_example", &events).unwrap();
    assert_eq!(record.outcome, Some(RuleOutcome::Success));
    assert_eq!(record.success_iteration(), Some(1));
    assert_eq!(record.pipeline_calls, 3);
    assert_eq!(record.repair_calls, 2);
}
