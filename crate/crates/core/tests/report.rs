//! Summary tables rebuilt from event logs that encode the reference counts.

mod common;

use common::reference_runs::{materialize, run_logs, ReferenceRun, CLAUDE, GPT, RULES};
use roundtrip_core::events::ConditionKind;
use roundtrip_core::experiment::write_run_report;
use roundtrip_core::pipeline::StageId;
use roundtrip_core::report::tables::{self, RunReport};
use roundtrip_core::report::{repair_overlap, CrossTab, RunRecord, RunStore};

fn build(p: &ReferenceRun, kind: ConditionKind) -> (tempfile::TempDir, RunStore, RunReport) {
    let dir = tempfile::tempdir().unwrap();
    let store = materialize(&dir.path().join(format!("{}-{}", p.name, kind.as_str())), p, kind);
    let report = write_run_report(&store, 3).unwrap();
    (dir, store, report)
}

#[test]
fn repair_outcome_table() {
    // (model, condition, successes, total calls, calls per repair, final equivalent)
    let expected = [
        (&CLAUDE, ConditionKind::Full, 61, 440, 7.21, 128, 85.3),
        (&CLAUDE, ConditionKind::Random, 33, 405, 12.27, 100, 66.7),
        (&GPT, ConditionKind::Full, 32, 466, 14.56, 124, 82.7),
        (&GPT, ConditionKind::Random, 26, 254, 9.77, 118, 78.7),
    ];
    for (p, kind, successes, calls, per_repair, fin, rate) in expected {
        let (_dir, _, r) = build(p, kind);
        let s = &r.summary;
        assert_eq!(s.rules, RULES as u64);
        assert_eq!(s.initial_unsat, p.initial_equivalent as u64);
        assert_eq!(s.initial_sat, (RULES - p.initial_equivalent) as u64);
        assert_eq!(s.repair_successes, successes);
        assert_eq!(s.total_calls, calls);
        assert_eq!(s.pipeline_calls, 3 * RULES as u64);
        // Independent arithmetic: plain division, then the two-decimal check.
        let ratio = calls as f64 / successes as f64;
        assert!((ratio - per_repair).abs() < 0.01, "{ratio}");
        assert_eq!(s.calls_per_repair, Some(per_repair));
        assert_eq!(s.final_unsat, fin);
        assert_eq!(s.final_unsat_rate, rate);
        assert_eq!(s.repair_failures, RULES as u64 - fin);
    }
}

#[test]
fn cumulative_curves() {
    let (_a, _, claude) = build(&CLAUDE, ConditionKind::Full);
    let (_b, _, gpt) = build(&GPT, ConditionKind::Full);
    assert_eq!(claude.cumulative, [67, 101, 119, 128]);
    assert_eq!(gpt.cumulative, [92, 111, 121, 124]);
    let (_c, _, gpt_random) = build(&GPT, ConditionKind::Random);
    assert_eq!(gpt_random.cumulative, [92, 111, 116, 118]);
    // Prefix sums of the per-iteration successes.
    for r in [&claude, &gpt, &gpt_random] {
        let mut acc = r.summary.initial_unsat;
        for (i, n) in r.summary.successes_by_iteration.iter().enumerate() {
            acc += n;
            assert_eq!(r.cumulative[i + 1], acc);
        }
    }
}

#[test]
fn cross_tabulation_and_drift() {
    let (_dir, _, r) = build(&CLAUDE, ConditionKind::Full);
    assert_eq!(r.crosstab.unsat, [73, 13, 24, 6, 4, 8]);
    assert_eq!(r.crosstab.sat, [13, 1, 4, 1, 1, 2]);
    assert_eq!(r.crosstab.unsat.iter().sum::<u64>(), 128);
    assert!(r.crosstab.missing.is_empty());
    let drift = CrossTab::drift_rate(&r.crosstab.unsat);
    assert!((drift - 12.0 / 128.0).abs() < 1e-12);
    assert_eq!(format!("{:.1}", 100.0 * drift), "9.4");

    let drifts = [
        (&CLAUDE, ConditionKind::Random, "14.0"),
        (&GPT, ConditionKind::Full, "13.7"),
        (&GPT, ConditionKind::Random, "15.3"),
    ];
    for (p, kind, want) in drifts {
        let (_dir, _, r) = build(p, kind);
        assert_eq!(format!("{:.1}", 100.0 * CrossTab::drift_rate(&r.crosstab.unsat)), want);
    }
}

#[test]
fn stage_distribution() {
    let (_a, _, claude) = build(&CLAUDE, ConditionKind::Full);
    assert_eq!(claude.stages.overall, [40, 34, 89]);
    assert_eq!(format!("{:.0}", 100.0 * claude.stages.fraction(StageId::THREE)), "55");
    let (_b, _, gpt) = build(&GPT, ConditionKind::Full);
    assert_eq!(gpt.stages.total(), 126);
    assert_eq!(format!("{:.0}", 100.0 * gpt.stages.fraction(StageId::ONE)), "83");
    assert_eq!(format!("{:.0}", 100.0 * gpt.stages.fraction(StageId::TWO)), "3");
    // Per-iteration counts add up to the overall ones.
    for r in [&claude, &gpt] {
        let mut sum = [0; 3];
        for counts in r.stages.per_iteration.values() {
            for i in 0..3 {
                sum[i] += counts[i];
            }
        }
        assert_eq!(sum, r.stages.overall);
    }
}

#[test]
fn full_versus_random_overlap() {
    for (p, want) in [(&CLAUDE, [26, 35, 7, 15]), (&GPT, [17, 15, 9, 17])] {
        let (_a, full, _) = build(p, ConditionKind::Full);
        let (_b, random, _) = build(p, ConditionKind::Random);
        let o = repair_overlap(&full.load_records().unwrap().0, &random.load_records().unwrap().0).unwrap();
        assert_eq!([o.both.len(), o.full_only.len(), o.random_only.len(), o.neither.len()], want);
        assert!(tables::overlap_csv(&o).contains(&format!("full_only,{},", want[1])));
    }
}

#[test]
fn written_tables_carry_the_figures() {
    let (_dir, store, _) = build(&CLAUDE, ConditionKind::Full);
    let read = |rel: &str| std::fs::read_to_string(store.root().join(rel)).unwrap();
    let summary = read("tables/summary.csv");
    assert!(summary.contains("calls_per_repair,7.21"));
    assert!(summary.contains("final_unsat,128"));
    assert!(read("tables/cumulative.csv").ends_with("3,128\n"));
    assert!(read("tables/nli_crosstab.csv").contains("unsat,73,13,24,6,4,8,128,9.4"));
    let json: serde_json::Value = serde_json::from_str(&read("summary.json")).unwrap();
    assert_eq!(json["summary"]["total_calls"], 440);
    assert!(read("report.md").contains("7.21"));
}

#[test]
fn report_is_a_pure_function_of_the_logs() {
    let (_dir, store, _) = build(&GPT, ConditionKind::Random);
    let files = ["summary.json", "tables/summary.csv", "tables/stages.csv", "report.md"];
    let first: Vec<String> = files.iter().map(|f| std::fs::read_to_string(store.root().join(f)).unwrap()).collect();
    write_run_report(&store, 3).unwrap();
    let second: Vec<String> = files.iter().map(|f| std::fs::read_to_string(store.root().join(f)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn replay_matches_in_memory_records() {
    let (_dir, store, _) = build(&CLAUDE, ConditionKind::Random);
    let (loaded, problems) = store.load_records().unwrap();
    assert!(problems.is_empty());
    let direct: Vec<RunRecord> = run_logs(&CLAUDE, ConditionKind::Random)
        .iter()
        .map(|(_, ev, _)| RunRecord::from_events(&store.run_id(), ev).unwrap())
        .collect();
    for (a, b) in loaded.iter().zip(&direct) {
        assert_eq!(a.rule_id, b.rule_id);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.repair_calls + a.pipeline_calls, a.total_calls());
    }
}

#[test]
fn unfinished_and_corrupt_logs_are_excluded() {
    let (_dir, store, _) = build(&CLAUDE, ConditionKind::Full);
    let path = |id: &str| store.root().join("rules").join(id).join("events.jsonl");
    // Drop the terminal line of one log and garble another.
    let text = std::fs::read_to_string(path("r000")).unwrap();
    let cut: Vec<&str> = text.lines().collect();
    std::fs::write(path("r000"), cut[..cut.len() - 1].join("\n") + "\n").unwrap();
    std::fs::write(path("r001"), "{\"type\":\"rule_started\"\nnot json\n").unwrap();
    let r = write_run_report(&store, 3).unwrap();
    assert_eq!(r.summary.rules, RULES as u64 - 2);
    let msgs: Vec<String> = r.problems.iter().map(ToString::to_string).collect();
    assert!(msgs[0].starts_with("rule r000"), "{msgs:?}");
    assert!(msgs[1].starts_with("rule r001, line 1"), "{msgs:?}");
}
