//! Event logs reconstructed from the reference aggregate counts of the two
//! live-model evaluations: 150 rules, one model per `ReferenceRun`, a full and a
//! random run each.

use roundtrip_core::backends::Role;
use roundtrip_core::equivalence::{CheckBackend, EquivalenceStatus};
use roundtrip_core::events::{CallPurpose, Chooser, ConditionKind, Event, EventSink, RuleOutcome};
use roundtrip_core::nli::{NliCategory, NliScores};
use roundtrip_core::pipeline::StageId;
use roundtrip_core::report::{NliRecord, RunStore};

pub const RULES: usize = 150;

/// Target counts for one condition.
pub struct Condition {
    pub successes_by_iteration: [usize; 3],
    pub repair_calls: u64,
    /// Stage selections for stages 1, 2, 3.
    pub stages: [usize; 3],
    /// NLI categories of the finally equivalent rules, in Eq Re St Wk Un Co order.
    pub unsat_row: [usize; 6],
    pub sat_row: [usize; 6],
}

pub struct ReferenceRun {
    pub name: &'static str,
    pub initial_equivalent: usize,
    pub full: Condition,
    pub random: Condition,
    /// Pool rules repaired by both, full only, random only, neither.
    pub overlap: [usize; 4],
}

pub const CLAUDE: ReferenceRun = ReferenceRun {
    name: "claude",
    initial_equivalent: 67,
    full: Condition {
        successes_by_iteration: [34, 18, 9],
        repair_calls: 440,
        stages: [40, 34, 89],
        unsat_row: [73, 13, 24, 6, 4, 8],
        sat_row: [13, 1, 4, 1, 1, 2],
    },
    random: Condition {
        successes_by_iteration: [19, 11, 3],
        repair_calls: 405,
        stages: [68, 69, 63],
        unsat_row: [55, 7, 18, 6, 10, 4],
        sat_row: [21, 5, 8, 6, 5, 5],
    },
    overlap: [26, 35, 7, 15],
};

pub const GPT: ReferenceRun = ReferenceRun {
    name: "gpt",
    initial_equivalent: 92,
    full: Condition {
        successes_by_iteration: [19, 10, 3],
        repair_calls: 466,
        stages: [105, 4, 17],
        unsat_row: [66, 12, 14, 15, 9, 8],
        sat_row: [10, 2, 4, 1, 5, 4],
    },
    random: Condition {
        successes_by_iteration: [19, 5, 2],
        repair_calls: 254,
        stages: [42, 39, 50],
        unsat_row: [62, 12, 12, 14, 9, 9],
        sat_row: [12, 3, 4, 4, 6, 3],
    },
    overlap: [17, 15, 9, 17],
};

/// A score tuple that the decision tree puts in `c`.
pub fn representative_scores(c: NliCategory) -> NliScores {
    let (ef, eb, cf, cb) = match c {
        NliCategory::Equivalent => (0.9, 0.85, 0.02, 0.03),
        NliCategory::Related => (0.5, 0.45, 0.1, 0.1),
        NliCategory::Strengthened => (0.8, 0.2, 0.1, 0.05),
        NliCategory::Weakened => (0.2, 0.8, 0.05, 0.1),
        NliCategory::Unrelated => (0.1, 0.1, 0.4, 0.2),
        NliCategory::Contradiction => (0.1, 0.2, 0.9, 0.7),
    };
    NliScores::new(ef, eb, cf, cb).unwrap()
}

fn expand<T: Copy>(counts: &[usize], labels: &[T]) -> Vec<T> {
    counts
        .iter()
        .zip(labels)
        .flat_map(|(n, l)| std::iter::repeat(*l).take(*n))
        .collect()
}

pub fn rule_id(i: usize) -> String {
    format!("r{i:03}")
}

fn check(iteration: u32, status: EquivalenceStatus) -> Event {
    Event::Check {
        iteration,
        status,
        backend: CheckBackend::ExternalSolver,
        bounded: false,
        counterexample: None,
        detail: None,
    }
}

fn call(iteration: u32, role: Role, purpose: CallPurpose, attempts: u32) -> Event {
    Event::Call {
        iteration,
        role,
        purpose,
        backend: "fixture".into(),
        attempts,
        artifact: None,
        error: None,
    }
}

/// Per-rule event logs and NLI records of one condition.
pub fn run_logs(p: &ReferenceRun, kind: ConditionKind) -> Vec<(String, Vec<Event>, NliRecord)> {
    let c = match kind {
        ConditionKind::Full => &p.full,
        ConditionKind::Random => &p.random,
        ConditionKind::None => panic!("no reference repair counts without repair"),
    };
    let [both, full_only, random_only, _] = p.overlap;
    let pool_start = p.initial_equivalent;
    // Pool positions repaired under this condition, in order.
    let repaired: Vec<usize> = match kind {
        ConditionKind::Full => (0..both + full_only).collect(),
        _ => (0..both).chain(both + full_only..both + full_only + random_only).collect(),
    };
    assert_eq!(repaired.len(), c.successes_by_iteration.iter().sum::<usize>());
    let success_iter = expand(&c.successes_by_iteration, &[1u32, 2, 3]);

    // Iterations used per rule; failures exhaust all three.
    let used: Vec<u32> = (0..RULES)
        .map(|i| {
            if i < pool_start {
                return 0;
            }
            match repaired.iter().position(|&k| k == i - pool_start) {
                Some(j) => success_iter[j],
                None => 3,
            }
        })
        .collect();
    let iterations: usize = used.iter().map(|u| *u as usize).sum();
    let mut stages = expand(&c.stages, &[StageId::ONE, StageId::TWO, StageId::THREE]).into_iter();
    assert_eq!(stages.len(), iterations, "{} {:?}: stage counts vs iterations", p.name, kind);

    // Spread the repair-phase calls over iterations as evenly as possible.
    let base = c.repair_calls / iterations as u64;
    let extra = (c.repair_calls % iterations as u64) as usize;
    let mut iteration_no = 0usize;

    let unsat = expand(&c.unsat_row, &NliCategory::ALL);
    let sat = expand(&c.sat_row, &NliCategory::ALL);
    let (mut unsat, mut sat) = (unsat.into_iter(), sat.into_iter());

    (0..RULES)
        .map(|i| {
            let id = rule_id(i);
            let mut ev = vec![Event::RuleStarted {
                rule_id: id.clone(),
                condition: kind,
                text: format!("rule {i}"),
            }];
            for role in [Role::T1, Role::T2, Role::T3] {
                ev.push(call(0, role, CallPurpose::Initial, 1));
            }
            let initially = i < pool_start;
            let succeeds = !initially && repaired.contains(&(i - pool_start));
            ev.push(check(
                0,
                if initially { EquivalenceStatus::Equivalent } else { EquivalenceStatus::NotEquivalent },
            ));
            let mut last = if initially { EquivalenceStatus::Equivalent } else { EquivalenceStatus::NotEquivalent };
            for k in 1..=used[i] {
                let calls = base + u64::from(iteration_no < extra);
                iteration_no += 1;
                let stage = stages.next().unwrap();
                let mut repair = calls as u32;
                if kind == ConditionKind::Full {
                    ev.push(Event::Diagnosis {
                        iteration: k,
                        attempts: 1,
                        stage: Some(stage),
                        explanation: Some("fixture".into()),
                        scope_warnings: vec![],
                        error: None,
                    });
                    repair -= 1;
                }
                ev.push(Event::Selection {
                    iteration: k,
                    stage,
                    chooser: if kind == ConditionKind::Full { Chooser::Diagnosis } else { Chooser::Random },
                });
                ev.push(call(k, Role::repair(stage.index()), CallPurpose::Repair, repair));
                last = if k == used[i] && succeeds {
                    EquivalenceStatus::Equivalent
                } else {
                    EquivalenceStatus::NotEquivalent
                };
                ev.push(check(k, last));
            }
            let category = if last == EquivalenceStatus::Equivalent {
                unsat.next().unwrap()
            } else {
                sat.next().unwrap()
            };
            ev.push(Event::RuleFinished {
                outcome: if last == EquivalenceStatus::Equivalent {
                    RuleOutcome::Success
                } else {
                    RuleOutcome::Failure
                },
                iterations_used: used[i],
                final_status: Some(last),
                error: None,
            });
            let nli = NliRecord {
                original: format!("rule {i}"),
                reconstructed: format!("rule {i}, reconstructed"),
                scores: Some(representative_scores(category)),
                category: Some(category),
                error: None,
            };
            (id, ev, nli)
        })
        .collect()
}

/// Writes one condition's logs and NLI records as a run directory.
pub fn materialize(root: &std::path::Path, p: &ReferenceRun, kind: ConditionKind) -> RunStore {
    let store = RunStore::create(root, &format!("fixture = \"{} {}\"\n", p.name, kind.as_str()), false).unwrap();
    for (id, events, nli) in run_logs(p, kind) {
        let mut log = store.start_rule(&id).unwrap();
        for e in events {
            log.emit(e);
        }
        log.finish().unwrap();
        store.write_nli(&id, &nli).unwrap();
    }
    store
}
