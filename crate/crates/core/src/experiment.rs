//! Running a corpus through roundtrip, check and repair, with per-rule logs.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::corpus::CorpusRecord;
use crate::equivalence::EquivalenceChecker;
use crate::events::{CallPurpose, Event, EventSink, RuleOutcome};
use crate::nli::{assess_pair, NliScorer};
use crate::pipeline::{Pipeline, RoleBackends, RoundtripFailure};
use crate::repair::{repair_loop, LoopOutcome, LoopStatus, RepairConfig};
use crate::report::tables::{self, RunReport};
use crate::report::{CrossTab, NliRecord, RunStore, RunSummary, StageDistribution, StoreError};

pub struct Experiment<'a> {
    pub pipeline: Pipeline<'a>,
    pub backends: RoleBackends,
    pub checker: EquivalenceChecker,
    pub repair: RepairConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub ran: usize,
    pub skipped: usize,
}

impl Experiment<'_> {
    /// Runs one rule from start to finish, emitting its complete event log.
    /// `rule_index` is the rule's position in the corpus.
    pub fn run_rule(
        &self,
        rule_index: u64,
        rule: &CorpusRecord,
        sink: &mut dyn EventSink,
    ) -> Result<LoopOutcome, RoundtripFailure> {
        sink.emit(Event::RuleStarted {
            rule_id: rule.id.clone(),
            condition: self.repair.condition.kind,
            text: rule.text.clone(),
        });
        let instance = match self.pipeline.run_roundtrip(&rule.id, &rule.text, &self.backends) {
            Ok(i) => i,
            Err(f) => {
                for p in &f.completed {
                    sink.emit(Event::Call {
                        iteration: 0,
                        role: p.role,
                        purpose: CallPurpose::Initial,
                        backend: p.backend.clone(),
                        attempts: p.attempts,
                        artifact: None,
                        error: None,
                    });
                }
                sink.emit(Event::Call {
                    iteration: 0,
                    role: f.error.role,
                    purpose: CallPurpose::Initial,
                    backend: self.backends.get(f.error.role).name().to_string(),
                    attempts: f.error.attempts,
                    artifact: None,
                    error: Some(f.error.to_string()),
                });
                sink.emit(Event::RuleFinished {
                    outcome: RuleOutcome::Error,
                    iterations_used: 0,
                    final_status: None,
                    error: Some(f.error.to_string()),
                });
                return Err(f);
            }
        };
        let p = &instance.provenance;
        sink.emit(Event::call(&p.y_orig, CallPurpose::Initial, instance.y_orig.render()));
        sink.emit(Event::call(&p.x_prime, CallPurpose::Initial, instance.x_prime.clone()));
        sink.emit(Event::call(&p.y_rt, CallPurpose::Initial, instance.y_rt.render()));
        let outcome = repair_loop(
            &self.pipeline,
            instance,
            &self.repair,
            &self.backends,
            &self.checker,
            rule_index,
            sink,
        );
        sink.emit(Event::RuleFinished {
            outcome: match outcome.status {
                LoopStatus::Success => RuleOutcome::Success,
                LoopStatus::Failure => RuleOutcome::Failure,
            },
            iterations_used: outcome.iterations_used,
            final_status: Some(outcome.final_status),
            error: None,
        });
        Ok(outcome)
    }

    /// Runs every rule without a complete log in `store`, on `workers`
    /// threads. The first storage error stops the run.
    pub fn run_corpus(&self, corpus: &[CorpusRecord], store: &RunStore, workers: usize) -> Result<RunStats, StoreError> {
        let pending: Vec<usize> = (0..corpus.len()).filter(|&i| !store.is_complete(&corpus[i].id)).collect();
        let stats = RunStats {
            ran: pending.len(),
            skipped: corpus.len() - pending.len(),
        };
        if stats.skipped > 0 {
            log::info!("resuming: {} rules already complete", stats.skipped);
        }
        let next = AtomicUsize::new(0);
        let done = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let failure: Mutex<Option<StoreError>> = Mutex::new(None);
        let work = || {
            while !stop.load(Ordering::Relaxed) {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = pending.get(slot) else { break };
                let rule = &corpus[i];
                let result = store.start_rule(&rule.id).and_then(|mut log| {
                    let outcome = self.run_rule(i as u64, rule, &mut log);
                    log.finish().map(|_| outcome)
                });
                match result {
                    Ok(outcome) => {
                        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                        let status = match &outcome {
                            Ok(o) => format!("{:?} after {} iterations", o.final_status, o.iterations_used),
                            Err(f) => format!("error: {}", f.error),
                        };
                        log::info!("[{n}/{}] {}: {status}", pending.len(), rule.id);
                    }
                    Err(e) => {
                        stop.store(true, Ordering::Relaxed);
                        failure.lock().unwrap().get_or_insert(e);
                    }
                }
            }
        };
        std::thread::scope(|s| {
            for _ in 0..workers.max(1) {
                s.spawn(&work);
            }
        });
        match failure.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(stats),
        }
    }
}

/// Scores original against final reconstructed text for every complete
/// rule. Rules that already have an assessment are kept unless `overwrite`.
/// Returns the number of rules scored.
pub fn score_run(store: &RunStore, scorer: &dyn NliScorer, overwrite: bool) -> Result<usize, StoreError> {
    let (records, _) = store.load_records()?;
    let mut n = 0;
    for r in records {
        if !overwrite && store.read_nli(&r.rule_id)?.is_some() {
            continue;
        }
        let Some(x_prime) = r.x_prime else { continue };
        let mut record = NliRecord {
            original: r.text.clone(),
            reconstructed: x_prime.clone(),
            scores: None,
            category: None,
            error: None,
        };
        match assess_pair(&r.text, &x_prime, scorer) {
            Ok((scores, category)) => {
                record.scores = Some(scores);
                record.category = Some(category);
            }
            Err(e) => {
                log::warn!("NLI for rule {} failed: {e}", r.rule_id);
                record.error = Some(e.to_string());
            }
        }
        store.write_nli(&r.rule_id, &record)?;
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryFile<'a> {
    pub run_id: &'a str,
    pub k: u32,
    pub summary: &'a RunSummary,
    pub cumulative: &'a [u64],
    pub stages: &'a StageDistribution,
    pub crosstab: &'a CrossTab,
    pub excluded: Vec<String>,
}

/// Builds the report of a run and writes `summary.json`, `tables/*.csv` and
/// `report.md` into it.
pub fn write_run_report(store: &RunStore, k: u32) -> Result<RunReport, StoreError> {
    let (records, problems) = store.load_records()?;
    for p in &problems {
        log::warn!("excluded from summary: {p}");
    }
    let run_id = store.run_id();
    let report = RunReport::build(&run_id, &records, k, problems).map_err(|e| StoreError::Io {
        path: store.root().display().to_string(),
        message: e.to_string(),
    })?;
    let file = SummaryFile {
        run_id: &run_id,
        k,
        summary: &report.summary,
        cumulative: &report.cumulative,
        stages: &report.stages,
        crosstab: &report.crosstab,
        excluded: report.problems.iter().map(ToString::to_string).collect(),
    };
    store.write_file("summary.json", &(serde_json::to_string_pretty(&file).expect("serializable") + "\n"))?;
    let runs = [&report];
    store.write_file("tables/summary.csv", &tables::summary_csv(&runs))?;
    store.write_file("tables/cumulative.csv", &tables::cumulative_csv(&runs))?;
    store.write_file("tables/stages.csv", &tables::stage_csv(&runs))?;
    store.write_file("tables/nli_crosstab.csv", &tables::crosstab_csv(&runs))?;
    store.write_file("report.md", &tables::markdown(&runs, None))?;
    Ok(report)
}

