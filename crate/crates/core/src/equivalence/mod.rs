//! Formal equivalence of two formulas over a shared schema.
//!
//! The external route asks an SMT solver whether `(not (= phi psi))` is
//! satisfiable; the enumeration route searches bounded finite models. The two
//! are kept independent so each can check the other.

mod enumerate;
mod solver;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use enumerate::{enumerate, evaluate, EnumerationBudget, EnumerationOutcome, EvalError, Interpretation, Value};
pub use solver::{parse_model, SolverAnswer, SolverConfig, SolverError, SolverHandle};

use crate::smt::{Formula, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquivalenceStatus {
    Equivalent,
    NotEquivalent,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckBackend {
    ExternalSolver,
    Enumeration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceVerdict {
    pub status: EquivalenceStatus,
    pub counterexample: Option<Interpretation>,
    pub backend: CheckBackend,
    pub elapsed: Duration,
    /// Set when the answer comes from bounded enumeration.
    pub bounded: bool,
    /// Why the verdict is unknown, or why a model was dropped.
    pub detail: Option<String>,
}

impl EquivalenceVerdict {
    fn new(status: EquivalenceStatus, backend: CheckBackend, started: Instant) -> Self {
        EquivalenceVerdict {
            status,
            counterexample: None,
            backend,
            elapsed: started.elapsed(),
            bounded: backend == CheckBackend::Enumeration,
            detail: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("formula uses `{0}`, which the schema does not declare")]
    UnknownSymbol(String),
}

/// Builds the satisfiability query for `phi` and `psi` being distinguishable.
/// No logic is set; the solver picks its default.
pub fn build_equivalence_query(phi: &Formula, psi: &Formula, schema: &Schema) -> Result<String, QueryError> {
    for f in [phi, psi] {
        for name in f.free_symbols() {
            if schema.signature(&name).is_none() {
                return Err(QueryError::UnknownSymbol(name));
            }
        }
    }
    let mut script = schema.render_declarations();
    if !script.is_empty() {
        script.push('\n');
    }
    script.push_str(&format!("(assert (not (= {phi} {psi})))\n(check-sat)\n"));
    Ok(script)
}

/// Sends a query to the solver and maps its answer. On `sat` the model is
/// read best-effort; an unreadable model leaves the counterexample empty.
pub fn check_with_solver(
    script: &str,
    schema: &Schema,
    solver: &SolverHandle,
    window: (i64, i64),
) -> Result<EquivalenceVerdict, SolverError> {
    let started = Instant::now();
    let answer = solver.check(script, true)?;
    let backend = CheckBackend::ExternalSolver;
    Ok(match answer {
        SolverAnswer::Unsat => EquivalenceVerdict::new(EquivalenceStatus::Equivalent, backend, started),
        SolverAnswer::Unknown { reason } => {
            EquivalenceVerdict::new(EquivalenceStatus::Unknown, backend, started).with_detail(reason)
        }
        SolverAnswer::Sat { model } => {
            let mut v = EquivalenceVerdict::new(EquivalenceStatus::NotEquivalent, backend, started);
            v.counterexample = model.as_deref().and_then(|m| parse_model(m, schema, window));
            if v.counterexample.is_none() {
                v.detail = Some("model not available".into());
            }
            v
        }
    })
}

/// Enumeration verdict; budget overruns and evaluation failures are unknown.
pub fn check_by_enumeration(
    phi: &Formula,
    psi: &Formula,
    schema: &Schema,
    budget: &EnumerationBudget,
) -> EquivalenceVerdict {
    let started = Instant::now();
    let backend = CheckBackend::Enumeration;
    match enumerate(phi, psi, schema, budget) {
        Ok(EnumerationOutcome::Equivalent { .. }) => {
            EquivalenceVerdict::new(EquivalenceStatus::Equivalent, backend, started)
        }
        Ok(EnumerationOutcome::Counterexample { interpretation, .. }) => {
            let mut v = EquivalenceVerdict::new(EquivalenceStatus::NotEquivalent, backend, started);
            v.counterexample = Some(interpretation);
            v
        }
        Ok(EnumerationOutcome::BudgetExceeded { required, checked }) => {
            EquivalenceVerdict::new(EquivalenceStatus::Unknown, backend, started).with_detail(format!(
                "budget exceeded: {required} interpretations required, cap {} ({checked} checked)",
                budget.max_interpretations
            ))
        }
        Err(e) => EquivalenceVerdict::new(EquivalenceStatus::Unknown, backend, started).with_detail(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendOrder {
    #[default]
    SolverFirst,
    EnumerationOnly,
    SolverOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceConfig {
    pub order: BackendOrder,
    pub solver: SolverConfig,
    pub budget: EnumerationBudget,
}

type MemoKey = (String, Formula, Formula);

/// Configured equivalence checker, shareable across worker threads.
/// Conclusive verdicts are remembered, so a pair is decided once per checker
/// and its clones.
#[derive(Clone)]
pub struct EquivalenceChecker {
    order: BackendOrder,
    solver: SolverHandle,
    budget: EnumerationBudget,
    memo: Arc<Mutex<HashMap<MemoKey, EquivalenceVerdict>>>,
}

impl EquivalenceChecker {
    pub fn new(config: &EquivalenceConfig) -> Self {
        EquivalenceChecker {
            order: config.order,
            solver: SolverHandle::new(config.solver.clone()),
            budget: config.budget.clone(),
            memo: Arc::default(),
        }
    }

    pub fn enumeration_only(budget: EnumerationBudget) -> Self {
        EquivalenceChecker::new(&EquivalenceConfig {
            order: BackendOrder::EnumerationOnly,
            budget,
            ..EquivalenceConfig::default()
        })
    }

    pub fn order(&self) -> BackendOrder {
        self.order
    }

    pub fn solver(&self) -> &SolverHandle {
        &self.solver
    }

    pub fn budget(&self) -> &EnumerationBudget {
        &self.budget
    }

    fn solver_verdict(&self, phi: &Formula, psi: &Formula, schema: &Schema) -> EquivalenceVerdict {
        let started = Instant::now();
        let unknown = |detail: String| {
            EquivalenceVerdict::new(EquivalenceStatus::Unknown, CheckBackend::ExternalSolver, started)
                .with_detail(detail)
        };
        let script = match build_equivalence_query(phi, psi, schema) {
            Ok(s) => s,
            Err(e) => return unknown(e.to_string()),
        };
        let mut v = match check_with_solver(&script, schema, &self.solver, self.budget.int_window) {
            Ok(v) => v,
            Err(e) => return unknown(e.to_string()),
        };
        if let Some(model) = &v.counterexample {
            let distinguishes = match enumerate::evaluate_all(&[phi, psi], schema, model) {
                Ok(r) => r[0] != r[1],
                Err(_) => false,
            };
            if !distinguishes {
                v.counterexample = None;
                v.detail = Some("solver model does not separate the formulas within the tabulated window".into());
            }
        }
        v
    }

    /// The first conclusive verdict in the configured order. Never fails:
    /// when no route concludes, the verdict is unknown with the last reason.
    pub fn decide(&self, phi: &Formula, psi: &Formula, schema: &Schema) -> EquivalenceVerdict {
        let started = Instant::now();
        let key = (schema.render_declarations(), phi.clone(), psi.clone());
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            let mut v = v.clone();
            v.elapsed = started.elapsed();
            return v;
        }
        let mut verdict = match self.order {
            BackendOrder::EnumerationOnly => check_by_enumeration(phi, psi, schema, &self.budget),
            BackendOrder::SolverOnly => self.solver_verdict(phi, psi, schema),
            BackendOrder::SolverFirst => {
                let v = self.solver_verdict(phi, psi, schema);
                if v.status == EquivalenceStatus::Unknown {
                    let fallback = check_by_enumeration(phi, psi, schema, &self.budget);
                    if fallback.status == EquivalenceStatus::Unknown {
                        let reason = format!(
                            "solver: {}; enumeration: {}",
                            v.detail.as_deref().unwrap_or("unknown"),
                            fallback.detail.as_deref().unwrap_or("unknown")
                        );
                        fallback.with_detail(reason)
                    } else {
                        fallback
                    }
                } else {
                    v
                }
            }
        };
        verdict.elapsed = started.elapsed();
        if verdict.status != EquivalenceStatus::Unknown {
            self.memo.lock().unwrap().insert(key, verdict.clone());
        }
        verdict
    }
}

pub fn decide_equivalence(
    phi: &Formula,
    psi: &Formula,
    schema: &Schema,
    checker: &EquivalenceChecker,
) -> EquivalenceVerdict {
    checker.decide(phi, psi, schema)
}
