//! Run records and every summary statistic derived from them.

pub mod store;
pub mod tables;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backends::Role;
use crate::equivalence::EquivalenceStatus;
use crate::events::{CallPurpose, Chooser, ConditionKind, Event, RuleOutcome};
use crate::nli::{NliCategory, NliScores};
use crate::pipeline::StageId;

pub use store::{LogError, NliRecord, RuleLog, RunStore, StoreError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationRecord {
    pub iteration: u32,
    pub stage: Option<StageId>,
    pub chooser: Option<Chooser>,
    pub verdict_after: Option<EquivalenceStatus>,
    /// Judge, repair and regeneration calls of this iteration.
    pub calls: u64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NliAssessment {
    pub scores: NliScores,
    pub category: NliCategory,
}

/// Everything known about one rule in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub rule_id: String,
    pub condition: ConditionKind,
    pub text: String,
    /// None when the initial roundtrip failed.
    pub initial_verdict: Option<EquivalenceStatus>,
    pub iterations: Vec<IterationRecord>,
    pub final_verdict: Option<EquivalenceStatus>,
    /// None while the rule's log has no terminal event.
    pub outcome: Option<RuleOutcome>,
    pub iterations_used: u32,
    pub error: Option<String>,
    /// Latest reconstructed text.
    pub x_prime: Option<String>,
    pub nli: Option<NliAssessment>,
    pub call_totals: BTreeMap<Role, u64>,
    /// Calls of the initial roundtrip.
    pub pipeline_calls: u64,
    /// Calls made after the initial check: judge, repairs, regenerations.
    pub repair_calls: u64,
}

impl RunRecord {
    pub fn new(run_id: &str, rule_id: &str, condition: ConditionKind) -> Self {
        RunRecord {
            run_id: run_id.to_string(),
            rule_id: rule_id.to_string(),
            condition,
            text: String::new(),
            initial_verdict: None,
            iterations: Vec::new(),
            final_verdict: None,
            outcome: None,
            iterations_used: 0,
            error: None,
            x_prime: None,
            nli: None,
            call_totals: BTreeMap::new(),
            pipeline_calls: 0,
            repair_calls: 0,
        }
    }

    fn iteration_mut(&mut self, k: u32) -> &mut IterationRecord {
        let idx = match self.iterations.iter().position(|e| e.iteration == k) {
            Some(i) => i,
            None => {
                self.iterations.push(IterationRecord {
                    iteration: k,
                    ..IterationRecord::default()
                });
                self.iterations.len() - 1
            }
        };
        &mut self.iterations[idx]
    }

    /// Replays a rule's event log.
    pub fn from_events(run_id: &str, events: &[Event]) -> Result<RunRecord, String> {
        let Some(Event::RuleStarted { rule_id, condition, text }) = events.first() else {
            return Err("log does not start with rule_started".into());
        };
        let mut r = RunRecord::new(run_id, rule_id, *condition);
        r.text = text.clone();
        for e in &events[1..] {
            if r.outcome.is_some() {
                return Err("events after rule_finished".into());
            }
            match e {
                Event::RuleStarted { .. } => return Err("repeated rule_started".into()),
                Event::Call {
                    iteration,
                    role,
                    purpose,
                    attempts,
                    artifact,
                    ..
                } => {
                    let n = u64::from(*attempts);
                    *r.call_totals.entry(*role).or_default() += n;
                    if *purpose == CallPurpose::Initial {
                        r.pipeline_calls += n;
                    } else {
                        r.repair_calls += n;
                        r.iteration_mut(*iteration).calls += n;
                    }
                    if matches!(role, Role::T2 | Role::R2) {
                        if let Some(a) = artifact {
                            r.x_prime = Some(a.clone());
                        }
                    }
                }
                Event::Check { iteration, status, .. } => {
                    if *iteration == 0 {
                        r.initial_verdict = Some(*status);
                    } else {
                        r.iteration_mut(*iteration).verdict_after = Some(*status);
                    }
                    r.final_verdict = Some(*status);
                }
                Event::Diagnosis { iteration, attempts, .. } => {
                    let n = u64::from(*attempts);
                    *r.call_totals.entry(Role::D).or_default() += n;
                    r.repair_calls += n;
                    r.iteration_mut(*iteration).calls += n;
                }
                Event::Selection { iteration, stage, chooser } => {
                    let it = r.iteration_mut(*iteration);
                    it.stage = Some(*stage);
                    it.chooser = Some(*chooser);
                }
                Event::IterationFailed { iteration, cause } => {
                    r.iteration_mut(*iteration).failure = Some(cause.clone());
                }
                Event::RuleFinished {
                    outcome,
                    iterations_used,
                    final_status,
                    error,
                } => {
                    if *final_status != r.final_verdict {
                        return Err(format!(
                            "rule_finished reports {final_status:?} but the last check was {:?}",
                            r.final_verdict
                        ));
                    }
                    r.outcome = Some(*outcome);
                    r.iterations_used = *iterations_used;
                    r.error = error.clone();
                }
            }
        }
        r.iterations.sort_by_key(|e| e.iteration);
        Ok(r)
    }

    pub fn is_complete(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn total_calls(&self) -> u64 {
        self.call_totals.values().sum()
    }

    /// Iteration at which the loop reached equivalence, if it did.
    pub fn success_iteration(&self) -> Option<u32> {
        if self.initial_verdict != Some(EquivalenceStatus::Equivalent)
            && self.final_verdict == Some(EquivalenceStatus::Equivalent)
        {
            self.iterations
                .iter()
                .find(|e| e.verdict_after == Some(EquivalenceStatus::Equivalent))
                .map(|e| e.iteration)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("records mix conditions {0} and {1}")]
    MixedConditions(String, String),
    #[error("{0}")]
    Mismatch(String),
}

/// Rounds to `decimals` places, half away from zero.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// Repair outcomes of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub condition: ConditionKind,
    pub rules: u64,
    pub initial_unsat: u64,
    pub initial_sat: u64,
    pub initial_unknown: u64,
    /// Rules whose initial roundtrip could not be built.
    pub pipeline_errors: u64,
    pub repair_successes: u64,
    /// Successes at iterations 1..=K.
    pub successes_by_iteration: Vec<u64>,
    /// Rules not equivalent at the end (pipeline errors included).
    pub repair_failures: u64,
    /// Calls after the initial check (judge, repairs, regenerations).
    pub total_calls: u64,
    /// Calls of the initial roundtrips, reported separately.
    pub pipeline_calls: u64,
    pub calls_per_repair: Option<f64>,
    pub final_unsat: u64,
    pub final_sat: u64,
    pub final_unknown: u64,
    /// Percent with one decimal.
    pub initial_unsat_rate: f64,
    pub final_unsat_rate: f64,
}

fn percent(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        round_to(100.0 * n as f64 / d as f64, 1)
    }
}

fn homogeneous(records: &[RunRecord]) -> Result<ConditionKind, ReportError> {
    let first = records.first().map_or(ConditionKind::None, |r| r.condition);
    for r in records {
        if r.condition != first {
            return Err(ReportError::MixedConditions(
                first.as_str().into(),
                r.condition.as_str().into(),
            ));
        }
    }
    Ok(first)
}

/// Summarizes one condition. `k` is the iteration budget; successes past it
/// extend the per-iteration list.
pub fn summarize_run(records: &[RunRecord], k: u32) -> Result<RunSummary, ReportError> {
    let condition = homogeneous(records)?;
    let mut by_iter = vec![0u64; k as usize];
    let mut s = RunSummary {
        condition,
        rules: records.len() as u64,
        initial_unsat: 0,
        initial_sat: 0,
        initial_unknown: 0,
        pipeline_errors: 0,
        repair_successes: 0,
        successes_by_iteration: Vec::new(),
        repair_failures: 0,
        total_calls: 0,
        pipeline_calls: 0,
        calls_per_repair: None,
        final_unsat: 0,
        final_sat: 0,
        final_unknown: 0,
        initial_unsat_rate: 0.0,
        final_unsat_rate: 0.0,
    };
    for r in records {
        match r.initial_verdict {
            Some(EquivalenceStatus::Equivalent) => s.initial_unsat += 1,
            Some(EquivalenceStatus::NotEquivalent) => s.initial_sat += 1,
            Some(EquivalenceStatus::Unknown) => s.initial_unknown += 1,
            None => s.pipeline_errors += 1,
        }
        match r.final_verdict {
            Some(EquivalenceStatus::Equivalent) => s.final_unsat += 1,
            Some(EquivalenceStatus::NotEquivalent) => s.final_sat += 1,
            Some(EquivalenceStatus::Unknown) => s.final_unknown += 1,
            None => {}
        }
        if let Some(i) = r.success_iteration() {
            let idx = i as usize - 1;
            if idx >= by_iter.len() {
                by_iter.resize(idx + 1, 0);
            }
            by_iter[idx] += 1;
            s.repair_successes += 1;
        }
        s.total_calls += r.repair_calls;
        s.pipeline_calls += r.pipeline_calls;
    }
    s.successes_by_iteration = by_iter;
    s.repair_failures = s.rules - s.final_unsat;
    s.calls_per_repair = (s.repair_successes > 0).then(|| round_to(s.total_calls as f64 / s.repair_successes as f64, 2));
    s.initial_unsat_rate = percent(s.initial_unsat, s.rules);
    s.final_unsat_rate = percent(s.final_unsat, s.rules);
    Ok(s)
}

/// Equivalent rules after iterations 0..=K.
pub fn cumulative_by_iteration(records: &[RunRecord], k: u32) -> Vec<u64> {
    let initial = records
        .iter()
        .filter(|r| r.initial_verdict == Some(EquivalenceStatus::Equivalent))
        .count() as u64;
    let mut out = vec![initial];
    let mut acc = initial;
    let last = records
        .iter()
        .filter_map(RunRecord::success_iteration)
        .max()
        .unwrap_or(0)
        .max(k);
    for i in 1..=last {
        acc += records.iter().filter(|r| r.success_iteration() == Some(i)).count() as u64;
        out.push(acc);
    }
    out
}

/// Stage choices, overall and per iteration.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageDistribution {
    /// Counts for stages 1, 2, 3.
    pub overall: [u64; 3],
    pub per_iteration: BTreeMap<u32, [u64; 3]>,
}

impl StageDistribution {
    pub fn total(&self) -> u64 {
        self.overall.iter().sum()
    }

    pub fn fraction(&self, stage: StageId) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.overall[stage.index() as usize - 1] as f64 / t as f64
        }
    }
}

pub fn stage_distribution(records: &[RunRecord]) -> StageDistribution {
    let mut d = StageDistribution::default();
    for r in records {
        for e in &r.iterations {
            if let Some(s) = e.stage {
                let i = s.index() as usize - 1;
                d.overall[i] += 1;
                d.per_iteration.entry(e.iteration).or_default()[i] += 1;
            }
        }
    }
    d
}

/// Final verdict rows by NLI category columns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CrossTab {
    /// Columns in [`NliCategory::ALL`] order.
    pub unsat: [u64; 6],
    pub sat: [u64; 6],
    pub unknown: [u64; 6],
    /// Rules without an NLI assessment or without a final verdict.
    pub missing: Vec<String>,
}

impl CrossTab {
    /// Share of a row falling in Unrelated or Contradiction.
    pub fn drift_rate(row: &[u64; 6]) -> f64 {
        let total: u64 = row.iter().sum();
        if total == 0 {
            0.0
        } else {
            (row[4] + row[5]) as f64 / total as f64
        }
    }
}

pub fn cross_tabulate(records: &[RunRecord]) -> CrossTab {
    let mut t = CrossTab::default();
    for r in records {
        let (Some(v), Some(nli)) = (r.final_verdict, &r.nli) else {
            t.missing.push(r.rule_id.clone());
            continue;
        };
        let col = NliCategory::ALL.iter().position(|c| *c == nli.category).unwrap();
        match v {
            EquivalenceStatus::Equivalent => t.unsat[col] += 1,
            EquivalenceStatus::NotEquivalent => t.sat[col] += 1,
            EquivalenceStatus::Unknown => t.unknown[col] += 1,
        }
    }
    t
}

/// Initially non-equivalent rules split by which condition repaired them.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Overlap {
    pub both: BTreeSet<String>,
    pub full_only: BTreeSet<String>,
    pub random_only: BTreeSet<String>,
    pub neither: BTreeSet<String>,
}

pub fn repair_overlap(full: &[RunRecord], random: &[RunRecord]) -> Result<Overlap, ReportError> {
    let pool = |rs: &[RunRecord]| -> BTreeSet<String> {
        rs.iter()
            .filter(|r| matches!(r.initial_verdict, Some(v) if v != EquivalenceStatus::Equivalent))
            .map(|r| r.rule_id.clone())
            .collect()
    };
    let ids = |rs: &[RunRecord]| -> BTreeSet<String> { rs.iter().map(|r| r.rule_id.clone()).collect() };
    if ids(full) != ids(random) {
        return Err(ReportError::Mismatch("the two runs cover different rules".into()));
    }
    let pool_full = pool(full);
    if pool_full != pool(random) {
        return Err(ReportError::Mismatch("the two runs start from different non-equivalent pools".into()));
    }
    let repaired = |rs: &[RunRecord]| -> BTreeSet<String> {
        rs.iter()
            .filter(|r| r.success_iteration().is_some())
            .map(|r| r.rule_id.clone())
            .collect()
    };
    let (f, r) = (repaired(full), repaired(random));
    let mut o = Overlap::default();
    for id in pool_full {
        match (f.contains(&id), r.contains(&id)) {
            (true, true) => o.both.insert(id),
            (true, false) => o.full_only.insert(id),
            (false, true) => o.random_only.insert(id),
            (false, false) => o.neither.insert(id),
        };
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_to(440.0 / 61.0, 2), 7.21);
        assert_eq!(round_to(100.0 * 128.0 / 150.0, 1), 85.3);
    }

    #[test]
    fn replay_rejects_bad_logs() {
        assert!(RunRecord::from_events("r", &[]).is_err());
        let start = Event::RuleStarted {
            rule_id: "a".into(),
            condition: ConditionKind::Full,
            text: "t".into(),
        };
        let finish = Event::RuleFinished {
            outcome: RuleOutcome::Success,
            iterations_used: 0,
            final_status: Some(EquivalenceStatus::Equivalent),
            error: None,
        };
        assert!(RunRecord::from_events("r", &[start, finish]).is_err());
    }
}
