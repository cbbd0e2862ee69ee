use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use roundtrip_core::backends::{generate_synthetic_corpus, plan_faults};
use roundtrip_core::config::{build_backends, NliSpec, RunConfig};
use roundtrip_core::corpus::{load_corpus, write_corpus};
use roundtrip_core::equivalence::{BackendOrder, EquivalenceChecker, EquivalenceConfig, EquivalenceStatus};
use roundtrip_core::experiment::{score_run, write_run_report, Experiment};
use roundtrip_core::nli::{assess_pair, NliCategory, NliScores};
use roundtrip_core::pipeline::{Pipeline, SystemClock};
use roundtrip_core::report::tables::{self, pair_overlap, RunReport};
use roundtrip_core::report::RunStore;
use roundtrip_core::smt::{parse_formula, Schema};

#[derive(Parser)]
#[command(name = "roundtrip", version, about = "Roundtrip verification and repair of rule formalizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run roundtrip, equivalence check and repair over a corpus.
    Run(RunArgs),
    /// Decide equivalence of two formulas. Exit 0 equivalent, 1 not, 2 unknown, 3 error.
    Verify(VerifyArgs),
    /// Regenerate tables and the markdown report from run logs.
    Report(ReportArgs),
    /// Score original against reconstructed text.
    Nli(NliArgs),
    /// Write a synthetic corpus, and optionally a fault plan.
    GenCorpus(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    schema_path: Option<PathBuf>,
    #[arg(long)]
    corpus_path: Option<PathBuf>,
    /// none, random or full.
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repair iteration budget.
    #[arg(short, long)]
    k: Option<u32>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_attempts: Option<u32>,
    #[arg(long)]
    rate_limit_seconds: Option<f64>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    #[arg(long)]
    faults_path: Option<PathBuf>,
    /// `[ROLE=]SPEC` with SPEC one of synthetic, oracle, scripted:PATH.
    /// Without a role the spec becomes the default. Repeatable.
    #[arg(long = "backend")]
    backends: Vec<String>,
    /// solver-first, enumeration-only or solver-only.
    #[arg(long)]
    equivalence_order: Option<String>,
    /// off, baseline or external.
    #[arg(long)]
    nli: Option<String>,
    /// Command line of the external scorer, split on whitespace.
    #[arg(long)]
    nli_command: Option<String>,
    /// Any other field as `dotted.key=value`, value in TOML syntax.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct EquivalenceArgs {
    /// Read the `[equivalence]` section of a run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    equivalence_order: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    solver_timeout_seconds: Option<f64>,
    #[arg(long)]
    max_domain_size: Option<usize>,
    /// Integer window as `LO,HI`.
    #[arg(long)]
    int_window: Option<String>,
    #[arg(long)]
    max_interpretations: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    schema: PathBuf,
    formula_a: PathBuf,
    formula_b: PathBuf,
    #[command(flatten)]
    equivalence: EquivalenceArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for the combined report of several runs (with the overlap
    /// of a full/random pair).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NliArgs {
    /// A run directory or a JSONL file of `{id, original, reconstructed}`.
    target: PathBuf,
    /// off, baseline or external. Defaults to the run's configuration, or
    /// baseline for pair files.
    #[arg(long)]
    scorer: Option<String>,
    /// Command line of the external scorer, split on whitespace.
    #[arg(long)]
    command: Option<String>,
    /// Output file for pair-file results; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a fault plan (JSON) for the synthetic backends.
    #[arg(long)]
    faults_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(0..=100))]
    fault_percent: u64,
    /// Stage of every fault; drawn per rule when absent.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    fault_stage: Option<u8>,
    #[arg(long)]
    stubborn: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
        Command::Nli(a) => cmd_nli(a),
        Command::GenCorpus(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn toml_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty key in `{key}`"))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{p}` in `{key}` is not a table"))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Flag paths are taken relative to the working directory and stored
/// absolute, so the snapshot does not depend on where the run started.
fn path_value(p: &Path) -> Result<toml::Value> {
    let abs = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
    Ok(toml::Value::String(abs.display().to_string()))
}

fn backend_value(spec: &str) -> Result<toml::Value> {
    let mut t = toml::Table::new();
    match spec {
        "synthetic" => {
            t.insert("kind".into(), "synthetic".into());
        }
        "oracle" => {
            t.insert("kind".into(), "synthetic".into());
            t.insert("inject_faults".into(), false.into());
        }
        s if s.starts_with("scripted:") => {
            t.insert("kind".into(), "scripted".into());
            t.insert("path".into(), path_value(Path::new(&s["scripted:".len()..]))?);
        }
        _ => bail!("unknown backend `{spec}`; use synthetic, oracle or scripted:PATH (live backends go in the config file)"),
    }
    Ok(toml::Value::Table(t))
}

fn nli_value(kind: &str, command: Option<&str>) -> toml::Value {
    let mut t = toml::Table::new();
    t.insert("kind".into(), kind.into());
    if let Some(c) = command {
        t.insert(
            "command".into(),
            toml::Value::Array(c.split_whitespace().map(toml::Value::from).collect()),
        );
    }
    toml::Value::Table(t)
}

/// The config file (paths resolved against its directory) with command-line
/// overrides on top.
fn load_run_config(a: &RunArgs) -> Result<RunConfig> {
    let base = match &a.config {
        Some(p) => RunConfig::load(p).map_err(|e| anyhow!(e))?,
        None => RunConfig::default(),
    };
    let mut table = toml::Table::try_from(&base).context("serializing configuration")?;
    let mut set = |k: &str, v: toml::Value| set_key(&mut table, k, v);
    if let Some(p) = &a.schema_path {
        set("schema_path", path_value(p)?)?;
    }
    if let Some(p) = &a.corpus_path {
        set("corpus_path", path_value(p)?)?;
    }
    if let Some(c) = &a.condition {
        set("condition", c.as_str().into())?;
    }
    if let Some(s) = a.seed {
        set("seed", toml::Value::Integer(i64::try_from(s).context("seed too large for the config format")?))?;
    }
    if let Some(k) = a.k {
        set("k", i64::from(k).into())?;
    }
    if let Some(p) = &a.output {
        set("output", path_value(p)?)?;
    }
    if a.resume {
        set("resume", true.into())?;
    }
    if let Some(w) = a.workers {
        set("workers", (w as i64).into())?;
    }
    if let Some(m) = a.max_attempts {
        set("max_attempts", i64::from(m).into())?;
    }
    if let Some(r) = a.rate_limit_seconds {
        set("rate_limit_seconds", r.into())?;
    }
    if let Some(p) = &a.templates_dir {
        set("templates_dir", path_value(p)?)?;
    }
    if let Some(p) = &a.faults_path {
        set("faults_path", path_value(p)?)?;
    }
    for b in &a.backends {
        let (role, spec) = match b.split_once('=') {
            Some((r, s)) => (r, s),
            None => ("default", b.as_str()),
        };
        set(&format!("backends.{role}"), backend_value(spec)?)?;
    }
    if let Some(o) = &a.equivalence_order {
        set("equivalence.order", o.as_str().into())?;
    }
    match (&a.nli, &a.nli_command) {
        (Some(kind), cmd) => set("nli", nli_value(kind, cmd.as_deref()))?,
        (None, Some(cmd)) => set("nli", nli_value("external", Some(cmd)))?,
        (None, None) => {}
    }
    for s in &a.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
        set(k.trim(), toml_value(v.trim()))?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid configuration: {e}"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_schema(path: &Path) -> Result<Schema> {
    Schema::load(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let cfg = load_run_config(&a)?;
    cfg.validate().map_err(|e| anyhow!("invalid configuration: {e}"))?;
    let schema = load_schema(&cfg.schema_path)?;
    let corpus = load_corpus(&cfg.corpus_path).map_err(|e| anyhow!(e))?;
    let templates = cfg.templates().map_err(|e| anyhow!(e))?;
    let backends = build_backends(&cfg, &schema, &corpus).map_err(|e| anyhow!(e))?;
    let scorer = cfg.nli.scorer().map_err(|e| anyhow!(e))?;
    let store = RunStore::create(&cfg.output, &cfg.snapshot(), cfg.resume)?;
    let clock = SystemClock;
    let experiment = Experiment {
        pipeline: Pipeline {
            schema: &schema,
            templates: &templates,
            policy: cfg.policy(),
            clock: &clock,
        },
        backends,
        checker: EquivalenceChecker::new(&cfg.equivalence),
        repair: cfg.repair_config(),
    };
    let stats = experiment.run_corpus(&corpus, &store, cfg.workers)?;
    if let Some(scorer) = scorer {
        score_run(&store, scorer.as_ref(), false)?;
    }
    let report = write_run_report(&store, cfg.k)?;
    let s = &report.summary;
    println!(
        "{} rules ({} run, {} resumed): initial equivalent {}, final equivalent {} ({:.1}%), repairs {}, calls {}",
        s.rules,
        stats.ran,
        stats.skipped,
        s.initial_unsat,
        s.final_unsat,
        s.final_unsat_rate,
        s.repair_successes,
        s.total_calls
    );
    println!("report: {}", store.root().join("report.md").display());
    Ok(ExitCode::SUCCESS)
}

fn equivalence_config(a: &EquivalenceArgs) -> Result<EquivalenceConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p).map_err(|e| anyhow!(e))?.equivalence,
        None => EquivalenceConfig::default(),
    };
    if let Some(o) = &a.equivalence_order {
        cfg.order = serde_json::from_value::<BackendOrder>(serde_json::Value::String(o.clone()))
            .map_err(|_| anyhow!("unknown order `{o}`; use solver-first, enumeration-only or solver-only"))?;
    }
    if let Some(s) = &a.solver {
        cfg.solver.program = s.clone();
    }
    if let Some(t) = a.solver_timeout_seconds {
        cfg.solver.timeout_seconds = t;
    }
    if let Some(n) = a.max_domain_size {
        cfg.budget.max_domain_size = n;
    }
    if let Some(w) = &a.int_window {
        let (lo, hi) = w.split_once(',').ok_or_else(|| anyhow!("--int-window expects LO,HI"))?;
        cfg.budget.int_window = (lo.trim().parse()?, hi.trim().parse()?);
    }
    if let Some(n) = a.max_interpretations {
        cfg.budget.max_interpretations = n;
    }
    cfg.budget.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    // Errors exit 3 so they cannot be mistaken for a verdict.
    let verdict = (|| -> Result<_> {
        let cfg = equivalence_config(&a.equivalence)?;
        let schema = load_schema(&a.schema)?;
        let parse = |p: &Path| -> Result<_> {
            parse_formula(read(p)?.trim(), &schema).map_err(|e| anyhow!("{}: {e}", p.display()))
        };
        let phi = parse(&a.formula_a)?;
        let psi = parse(&a.formula_b)?;
        Ok(EquivalenceChecker::new(&cfg).decide(&phi, &psi, &schema))
    })();
    let v = match verdict {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(3));
        }
    };
    let name = serde_json::to_value(v.status).expect("serializable");
    let backend = serde_json::to_value(v.backend).expect("serializable");
    println!(
        "{} ({}{})",
        name.as_str().unwrap_or_default(),
        backend.as_str().unwrap_or_default(),
        if v.bounded { ", bounded" } else { "" }
    );
    if let Some(d) = &v.detail {
        println!("detail: {d}");
    }
    if let Some(c) = &v.counterexample {
        println!("counterexample:\n{c}");
    }
    Ok(ExitCode::from(match v.status {
        EquivalenceStatus::Equivalent => 0,
        EquivalenceStatus::NotEquivalent => 1,
        EquivalenceStatus::Unknown => 2,
    }))
}

fn run_k(store: &RunStore) -> Result<u32> {
    let snap = store.snapshot()?;
    Ok(RunConfig::from_toml(&snap)
        .map_err(|e| anyhow!("{}: unreadable config snapshot: {e}", store.root().display()))?
        .k)
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let mut reports: Vec<RunReport> = Vec::new();
    let mut records = Vec::new();
    for dir in &a.runs {
        let store = RunStore::open(dir)?;
        let report = write_run_report(&store, run_k(&store)?)?;
        for p in &report.problems {
            eprintln!("{}: excluded {p}", store.run_id());
        }
        println!("{}: {}", store.run_id(), store.root().join("report.md").display());
        records.push(store.load_records()?.0);
        reports.push(report);
    }
    if let Some(out) = &a.out {
        let runs: Vec<&RunReport> = reports.iter().collect();
        let pairs: Vec<_> = reports.iter().zip(&records).map(|(r, rec)| (r, rec.as_slice())).collect();
        let overlap = pair_overlap(&pairs).transpose()?;
        let write = |name: &str, text: String| roundtrip_core::report::store::write_file(&out.join(name), &text);
        write("tables/summary.csv", tables::summary_csv(&runs))?;
        write("tables/cumulative.csv", tables::cumulative_csv(&runs))?;
        write("tables/stages.csv", tables::stage_csv(&runs))?;
        write("tables/nli_crosstab.csv", tables::crosstab_csv(&runs))?;
        if let Some(o) = &overlap {
            write("tables/overlap.csv", tables::overlap_csv(o))?;
        }
        write("report.md", tables::markdown(&runs, overlap.as_ref()))?;
        println!("combined: {}", out.join("report.md").display());
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct PairIn {
    #[serde(default)]
    id: Option<String>,
    original: String,
    reconstructed: String,
}

#[derive(Serialize)]
struct PairOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    original: String,
    reconstructed: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<NliScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<NliCategory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_nli(a: NliArgs) -> Result<ExitCode> {
    let run = a.target.is_dir().then(|| RunStore::open(&a.target)).transpose()?;
    let spec = match (&a.scorer, &a.command) {
        (Some(kind), cmd) => toml::Value::try_into::<NliSpec>(nli_value(kind, cmd.as_deref()))
            .map_err(|e| anyhow!("invalid scorer: {e}"))?,
        (None, Some(cmd)) => NliSpec::External {
            command: cmd.split_whitespace().map(str::to_string).collect(),
        },
        (None, None) => match &run {
            Some(store) => RunConfig::from_toml(&store.snapshot()?).map_err(|e| anyhow!(e))?.nli,
            None => NliSpec::Baseline,
        },
    };
    let Some(scorer) = spec.scorer().map_err(|e| anyhow!(e))? else {
        bail!("NLI scoring is off; pass --scorer baseline or --scorer external --command ...");
    };
    if let Some(store) = run {
        let n = score_run(&store, scorer.as_ref(), true)?;
        write_run_report(&store, run_k(&store)?)?;
        println!("scored {n} rules in {}", store.root().display());
        return Ok(ExitCode::SUCCESS);
    }
    let mut out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    for (i, line) in read(&a.target)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: PairIn =
            serde_json::from_str(line).with_context(|| format!("{}: line {}", a.target.display(), i + 1))?;
        let mut rec = PairOut {
            id: pair.id,
            original: pair.original,
            reconstructed: pair.reconstructed,
            scores: None,
            category: None,
            error: None,
        };
        match assess_pair(&rec.original, &rec.reconstructed, scorer.as_ref()) {
            Ok((s, c)) => {
                rec.scores = Some(s);
                rec.category = Some(c);
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode> {
    let schema = load_schema(&a.schema)?;
    let corpus = generate_synthetic_corpus(a.seed, a.n, &schema, &[]).map_err(|e| anyhow!(e))?;
    let records = corpus.records();
    fs::write(&a.out, write_corpus(&records)).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} rules to {}", records.len(), a.out.display());
    if let Some(path) = &a.faults_out {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let faults = plan_faults(a.seed, &ids, a.fault_percent, a.fault_stage, a.stubborn);
        fs::write(path, serde_json::to_string_pretty(&faults)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {} faults to {}", faults.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}
