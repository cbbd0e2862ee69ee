//! CSV tables and the markdown report.

use std::fmt::Write as _;

use super::{
    cross_tabulate, cumulative_by_iteration, repair_overlap, stage_distribution, summarize_run, CrossTab, LogError,
    Overlap, ReportError, RunRecord, RunSummary, StageDistribution,
};
use crate::nli::NliCategory;
use crate::pipeline::StageId;

/// All derived statistics of one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub k: u32,
    pub summary: RunSummary,
    pub cumulative: Vec<u64>,
    pub stages: StageDistribution,
    pub crosstab: CrossTab,
    pub problems: Vec<LogError>,
}

impl RunReport {
    pub fn build(label: &str, records: &[RunRecord], k: u32, problems: Vec<LogError>) -> Result<Self, ReportError> {
        Ok(RunReport {
            label: label.to_string(),
            k,
            summary: summarize_run(records, k)?,
            cumulative: cumulative_by_iteration(records, k),
            stages: stage_distribution(records),
            crosstab: cross_tabulate(records),
            problems,
        })
    }
}

fn csv_text(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn opt2(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

fn frac(n: u64, d: u64) -> String {
    if d == 0 {
        format!("{n}/0")
    } else {
        format!("{n}/{d} ({:.0}%)", 100.0 * n as f64 / d as f64)
    }
}

/// Metric rows of the repair-outcome table, one column per run.
fn summary_rows(runs: &[&RunReport]) -> Vec<Vec<String>> {
    let k = runs.iter().map(|r| r.summary.successes_by_iteration.len()).max().unwrap_or(0);
    let mut rows = vec![std::iter::once("metric".to_string())
        .chain(runs.iter().map(|r| r.label.clone()))
        .collect::<Vec<_>>()];
    let mut row = |name: String, f: &dyn Fn(&RunSummary) -> String| {
        rows.push(std::iter::once(name).chain(runs.iter().map(|r| f(&r.summary))).collect());
    };
    row("rules".into(), &|s| s.rules.to_string());
    row("initial_unsat".into(), &|s| s.initial_unsat.to_string());
    row("initial_unsat_rate".into(), &|s| format!("{:.1}", s.initial_unsat_rate));
    row("initial_sat".into(), &|s| s.initial_sat.to_string());
    row("initial_unknown".into(), &|s| s.initial_unknown.to_string());
    row("pipeline_errors".into(), &|s| s.pipeline_errors.to_string());
    row("repair_successes".into(), &|s| s.repair_successes.to_string());
    for i in 0..k {
        row(format!("after_iteration_{}", i + 1), &move |s| {
            s.successes_by_iteration.get(i).copied().unwrap_or(0).to_string()
        });
    }
    row("repair_failures".into(), &|s| s.repair_failures.to_string());
    row("total_calls".into(), &|s| s.total_calls.to_string());
    row("calls_per_repair".into(), &|s| opt2(s.calls_per_repair));
    row("pipeline_calls".into(), &|s| s.pipeline_calls.to_string());
    row("final_unsat".into(), &|s| s.final_unsat.to_string());
    row("final_unsat_rate".into(), &|s| format!("{:.1}", s.final_unsat_rate));
    row("final_sat".into(), &|s| s.final_sat.to_string());
    row("final_unknown".into(), &|s| s.final_unknown.to_string());
    rows
}

pub fn summary_csv(runs: &[&RunReport]) -> String {
    csv_text(&summary_rows(runs))
}

pub fn cumulative_csv(runs: &[&RunReport]) -> String {
    let n = runs.iter().map(|r| r.cumulative.len()).max().unwrap_or(0);
    let mut rows = vec![std::iter::once("iteration".to_string())
        .chain(runs.iter().map(|r| r.label.clone()))
        .collect::<Vec<_>>()];
    for i in 0..n {
        rows.push(
            std::iter::once(i.to_string())
                .chain(runs.iter().map(|r| {
                    // A curve that stops early stays flat.
                    r.cumulative.get(i).or(r.cumulative.last()).copied().unwrap_or(0).to_string()
                }))
                .collect(),
        );
    }
    csv_text(&rows)
}

pub fn stage_csv(runs: &[&RunReport]) -> String {
    let mut rows = vec![vec![
        "run".to_string(),
        "iteration".into(),
        "stage".into(),
        "count".into(),
        "total".into(),
        "percent".into(),
    ]];
    for r in runs {
        let mut emit = |iter: String, counts: &[u64; 3]| {
            let total: u64 = counts.iter().sum();
            for s in StageId::ALL {
                let c = counts[s.index() as usize - 1];
                let pct = if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
                rows.push(vec![
                    r.label.clone(),
                    iter.clone(),
                    format!("T{s}"),
                    c.to_string(),
                    total.to_string(),
                    format!("{pct:.1}"),
                ]);
            }
        };
        emit("all".into(), &r.stages.overall);
        for (i, counts) in &r.stages.per_iteration {
            emit(i.to_string(), counts);
        }
    }
    csv_text(&rows)
}

pub fn crosstab_csv(runs: &[&RunReport]) -> String {
    let mut header = vec!["run".to_string(), "verdict".into()];
    header.extend(NliCategory::ALL.iter().map(|c| c.short().to_string()));
    header.extend(["total".to_string(), "drift_percent".into()]);
    let mut rows = vec![header];
    for r in runs {
        for (name, row) in [("unsat", &r.crosstab.unsat), ("sat", &r.crosstab.sat), ("unknown", &r.crosstab.unknown)] {
            let mut line = vec![r.label.clone(), name.to_string()];
            line.extend(row.iter().map(u64::to_string));
            line.push(row.iter().sum::<u64>().to_string());
            line.push(format!("{:.1}", 100.0 * CrossTab::drift_rate(row)));
            rows.push(line);
        }
    }
    csv_text(&rows)
}

pub fn overlap_csv(o: &Overlap) -> String {
    let mut rows = vec![vec!["group".to_string(), "count".into(), "rules".into()]];
    for (name, set) in [
        ("both", &o.both),
        ("full_only", &o.full_only),
        ("random_only", &o.random_only),
        ("neither", &o.neither),
    ] {
        rows.push(vec![
            name.to_string(),
            set.len().to_string(),
            set.iter().cloned().collect::<Vec<_>>().join(" "),
        ]);
    }
    csv_text(&rows)
}

fn md_table(rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(out, "| {} |", r.join(" | "));
        if i == 0 {
            let _ = writeln!(out, "|{}", "---|".repeat(r.len()));
        }
    }
    out
}

/// Markdown report for one or more runs, with the overlap section when a
/// full/random pair is given.
pub fn markdown(runs: &[&RunReport], overlap: Option<&Overlap>) -> String {
    let mut out = String::from("# Roundtrip repair report\n\n");
    out.push_str("## Repair outcomes\n\n");
    out.push_str(&md_table(&summary_rows(runs)));
    out.push_str(
        "\n`total_calls` counts judge, repair and regeneration calls after the initial check; \
         the initial roundtrip calls are listed as `pipeline_calls`. Unknown verdicts are counted \
         separately from UNSAT and SAT.\n\n",
    );

    out.push_str("## Cumulative equivalent rules by iteration\n\n");
    let n = runs.iter().map(|r| r.cumulative.len()).max().unwrap_or(0);
    let mut rows = vec![std::iter::once("iteration".to_string())
        .chain(runs.iter().map(|r| r.label.clone()))
        .collect::<Vec<_>>()];
    for i in 0..n {
        rows.push(
            std::iter::once(i.to_string())
                .chain(runs.iter().map(|r| r.cumulative.get(i).or(r.cumulative.last()).copied().unwrap_or(0).to_string()))
                .collect(),
        );
    }
    out.push_str(&md_table(&rows));

    out.push_str("\n## Stage selection\n\n");
    let mut rows = vec![std::iter::once("stage".to_string())
        .chain(runs.iter().map(|r| r.label.clone()))
        .collect::<Vec<_>>()];
    for s in StageId::ALL {
        rows.push(
            std::iter::once(format!("T{s}"))
                .chain(runs.iter().map(|r| frac(r.stages.overall[s.index() as usize - 1], r.stages.total())))
                .collect(),
        );
    }
    out.push_str(&md_table(&rows));
    out.push_str(
        "\nEvery stage choice is counted, including those of iterations that did not end in equivalence, \
         so totals can exceed the number of rules that entered repair.\n",
    );

    out.push_str("\n## Final verdict by NLI category\n\n");
    let mut header = vec!["run / verdict".to_string()];
    header.extend(NliCategory::ALL.iter().map(|c| c.short().to_string()));
    header.extend(["total".to_string(), "drift".into()]);
    let mut rows = vec![header];
    for r in runs {
        for (name, row) in [("UNSAT", &r.crosstab.unsat), ("SAT", &r.crosstab.sat), ("unknown", &r.crosstab.unknown)] {
            let total: u64 = row.iter().sum();
            if total == 0 && name == "unknown" {
                continue;
            }
            let mut line = vec![format!("{} {name}", r.label)];
            line.extend(row.iter().map(u64::to_string));
            line.push(total.to_string());
            line.push(format!("{:.1}%", 100.0 * CrossTab::drift_rate(row)));
            rows.push(line);
        }
    }
    out.push_str(&md_table(&rows));
    for r in runs {
        if !r.crosstab.missing.is_empty() {
            let _ = writeln!(
                out,
                "\n{}: no NLI assessment for {}",
                r.label,
                r.crosstab.missing.join(", ")
            );
        }
    }

    if let Some(o) = overlap {
        out.push_str("\n## Repair overlap (full vs random)\n\n");
        let rows = vec![
            vec!["group".to_string(), "rules".into()],
            vec!["both".into(), o.both.len().to_string()],
            vec!["full only".into(), o.full_only.len().to_string()],
            vec!["random only".into(), o.random_only.len().to_string()],
            vec!["neither".into(), o.neither.len().to_string()],
        ];
        out.push_str(&md_table(&rows));
    }

    let problems: Vec<&LogError> = runs.iter().flat_map(|r| &r.problems).collect();
    if !problems.is_empty() {
        out.push_str("\n## Excluded logs\n\n");
        for p in problems {
            let _ = writeln!(out, "- {p}");
        }
    }
    out
}

/// Overlap for a full/random pair among `runs`, if exactly one of each.
pub fn pair_overlap(runs: &[(&RunReport, &[RunRecord])]) -> Option<Result<Overlap, ReportError>> {
    use crate::events::ConditionKind;
    let find = |c: ConditionKind| {
        let v: Vec<_> = runs.iter().filter(|(r, _)| r.summary.condition == c).collect();
        (v.len() == 1).then(|| v[0].1)
    };
    let full = find(ConditionKind::Full)?;
    let random = find(ConditionKind::Random)?;
    Some(repair_overlap(full, random))
}
