//! The `roundtrip` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roundtrip_core::config::RunConfig;

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn roundtrip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roundtrip"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn verify(a: &Path, b: &Path, extra: &[&str]) -> Output {
    let schema = repo("data/schema/traffic_sample.smt2");
    let mut args = vec!["verify", "--schema", p(&schema), p(a), p(b)];
    args.extend(extra);
    roundtrip(&args)
}

#[test]
fn verify_exit_codes() {
    let orig = repo("data/worked_example/y_orig.smt2");
    let drifted = repo("data/worked_example/y_rt.smt2");
    let repaired = repo("data/worked_example/y_rt_repaired.smt2");
    let enumerate = ["--equivalence-order", "enumeration-only"];

    let o = verify(&orig, &repaired, &enumerate);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("equivalent (enumeration, bounded)"));

    let o = verify(&orig, &drifted, &enumerate);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("counterexample:"));

    let o = verify(&orig, &repaired, &["--equivalence-order", "enumeration-only", "--max-interpretations", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));

    let o = verify(&orig, &repo("data/worked_example/missing.smt2"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.smt2"));

    let o = verify(&orig, &repaired, &["--int-window", "3,1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn worked_example_from_the_shipped_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("worked_example");
    let config = repo("configs/worked_example.toml");
    let o = roundtrip(&["run", "--config", p(&config), "--output", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1 rules (1 run, 0 resumed): initial equivalent 0, final equivalent 1"), "{}", stdout(&o));

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["successes_by_iteration"], serde_json::json!([1, 0, 0]));
    assert_eq!(summary["stages"]["overall"], serde_json::json!([0, 0, 1]));
    let rule = std::fs::read_dir(out.join("rules")).unwrap().next().unwrap().unwrap().path();
    assert!(rule.join("nli.json").is_file());
    for t in ["summary", "cumulative", "stages", "nli_crosstab"] {
        assert!(out.join(format!("tables/{t}.csv")).is_file());
    }

    // The snapshot is self-contained and does not ask to resume.
    let snap = RunConfig::from_toml(&std::fs::read_to_string(out.join("config.snapshot")).unwrap()).unwrap();
    assert!(!snap.resume);
    assert!(snap.schema_path.is_absolute());

    // A second run into the same directory needs --resume, which skips the
    // finished rule.
    let again = roundtrip(&["run", "--config", p(&config), "--output", p(&out)]);
    assert!(!again.status.success());
    let resumed = roundtrip(&["run", "--config", p(&config), "--output", p(&out), "--resume"]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    assert!(stdout(&resumed).contains("(0 run, 1 resumed)"));
    // A changed configuration cannot resume the run.
    let changed = roundtrip(&["run", "--config", p(&config), "--output", p(&out), "--resume", "-k", "5"]);
    assert!(!changed.status.success());
}

#[test]
fn no_repair_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("none");
    let config = repo("configs/worked_example.toml");
    let o = roundtrip(&["run", "--config", p(&config), "--output", p(&out), "--condition", "none", "--nli", "off"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final equivalent 0 (0.0%), repairs 0, calls 0"), "{}", stdout(&o));
    let events = std::fs::read_to_string(out.join("rules/r127/events.jsonl")).unwrap();
    assert!(!events.contains("\"diagnosis\""));
    assert!(!out.join("rules/r127/nli.json").exists());

    // Scoring can be added later, but not with the scorer switched off.
    let off = roundtrip(&["nli", p(&out), "--scorer", "off"]);
    assert!(!off.status.success());
    assert!(stderr(&off).contains("NLI scoring is off"));
    let on = roundtrip(&["nli", p(&out), "--scorer", "baseline"]);
    assert!(on.status.success(), "{}", stderr(&on));
    assert!(out.join("rules/r127/nli.json").is_file());
}

#[test]
fn synthetic_corpus_full_and_random_with_combined_report() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let schema = repo("data/schema/traffic_sample.smt2");
    let (corpus, faults) = (t.join("corpus.jsonl"), t.join("faults.json"));
    let o = roundtrip(&[
        "gen-corpus", "--schema", p(&schema), "--n", "12", "--seed", "4",
        "--out", p(&corpus), "--faults-out", p(&faults), "--stubborn",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&corpus).unwrap().lines().count(), 12);

    let common = |cond: &str, out: &Path| {
        roundtrip(&[
            "run", "--schema-path", p(&schema), "--corpus-path", p(&corpus), "--faults-path", p(&faults),
            "--backend", "synthetic", "--condition", cond, "--seed", "7", "--output", p(out),
            "--equivalence-order", "enumeration-only", "--workers", "2",
        ])
    };
    let (full, random) = (t.join("full"), t.join("random"));
    let o = common("full", &full);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final equivalent 12 (100.0%)"), "{}", stdout(&o));
    let o = common("random", &random);
    assert!(o.status.success(), "{}", stderr(&o));

    let combined = t.join("combined");
    let o = roundtrip(&["report", p(&full), p(&random), "--out", p(&combined)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let overlap = std::fs::read_to_string(combined.join("tables/overlap.csv")).unwrap();
    assert!(overlap.starts_with("group,count,rules\nboth,"));
    let summary = std::fs::read_to_string(combined.join("tables/summary.csv")).unwrap();
    assert!(summary.starts_with("metric,full,random\n"), "{summary}");
}

#[test]
fn oracle_backend_and_role_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let schema = repo("data/schema/traffic_sample.smt2");
    let corpus = t.join("corpus.jsonl");
    assert!(roundtrip(&["gen-corpus", "--schema", p(&schema), "--n", "5", "--out", p(&corpus)]).status.success());
    let out = t.join("run");
    let o = roundtrip(&[
        "run", "--schema-path", p(&schema), "--corpus-path", p(&corpus), "--output", p(&out),
        "--backend", "oracle", "--backend", "D=synthetic",
        "--set", "k=2", "--set", "equivalence.order=\"enumeration-only\"", "--set", "equivalence.budget.max_domain_size=1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("initial equivalent 5"), "{}", stdout(&o));
    let snap = RunConfig::from_toml(&std::fs::read_to_string(out.join("config.snapshot")).unwrap()).unwrap();
    assert_eq!(snap.k, 2);
    assert_eq!(snap.equivalence.budget.max_domain_size, 1);

    let bad = roundtrip(&["run", "--schema-path", p(&schema), "--corpus-path", p(&corpus), "--set", "no_such_key=1"]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("no_such_key"));
    let bad = roundtrip(&["run", "--schema-path", p(&schema), "--corpus-path", p(&corpus), "--backend", "live"]);
    assert!(stderr(&bad).contains("unknown backend"));
    let bad = roundtrip(&["run", "--schema-path", p(&schema), "--corpus-path", p(&corpus), "--condition", "random"]);
    assert!(!bad.status.success(), "random without a seed must be refused");
}

#[test]
fn nli_over_a_pair_file() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs = tmp.path().join("pairs.jsonl");
    std::fs::write(
        &pairs,
        concat!(
            "{\"id\":\"a\",\"original\":\"A vehicle must stop.\",\"reconstructed\":\"A vehicle must stop.\"}\n",
            "{\"original\":\"A vehicle must stop.\",\"reconstructed\":\"A vehicle must not stop.\"}\n",
        ),
    )
    .unwrap();
    let o = roundtrip(&["nli", p(&pairs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[0]["id"], "a");
    assert_eq!(rows[0]["category"], "Equivalent");
    assert_eq!(rows[1]["category"], "Contradiction");
}

#[test]
fn shipped_configs_parse() {
    for name in ["worked_example.toml", "synthetic.toml", "live.example.toml"] {
        let cfg = RunConfig::load(&repo("configs").join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.schema_path.is_absolute());
    }
}
