//! Fault injection for exercising diagnosis and repair.
//!
//! [`FaultInjectingBackend`] wraps any backend and corrupts the translation
//! replies of one rule at one stage. It works on the reply text, so it makes
//! no semantic promises; the synthetic corpus has its own exact injector.

use serde::{Deserialize, Serialize};

use super::{BackendError, PromptMarker, Role, TranslatorBackend};
use crate::smt::{sexpr, SExpr};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "text")]
pub enum FaultMode {
    /// Swap the obligation of the rule for a different one (for formulas:
    /// the first implication is replaced by its converse).
    ConsequentSwap,
    /// Drop the first negation.
    NegationDrop,
    /// Drop the exception clause.
    ExceptionDrop,
    /// Replace the whole artifact.
    CustomReplacement(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub rule_id: String,
    pub stage: u8,
    pub mode: FaultMode,
    /// When set the fault re-appears every time its stage is regenerated,
    /// so only a repair of that stage removes it.
    #[serde(default)]
    pub stubborn: bool,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=3).contains(&self.stage) {
            return Err(format!("fault for {}: stage {} is not 1, 2 or 3", self.rule_id, self.stage));
        }
        Ok(())
    }

    /// Whether the fault fires for a translation call at `iteration`.
    pub fn active(&self, iteration: u32) -> bool {
        iteration == 0 || self.stubborn
    }
}

fn rebuild(items: Vec<SExpr>, pos: sexpr::Pos) -> SExpr {
    SExpr::List { items, pos }
}

/// Applies `f` to the first node (pre-order) where it returns `Some`.
fn rewrite_first(e: &SExpr, f: &dyn Fn(&SExpr) -> Option<SExpr>) -> Option<SExpr> {
    if let Some(new) = f(e) {
        return Some(new);
    }
    let items = e.as_list()?;
    for (i, child) in items.iter().enumerate() {
        if let Some(new) = rewrite_first(child, f) {
            let mut out = items.to_vec();
            out[i] = new;
            return Some(rebuild(out, e.pos()));
        }
    }
    None
}

pub(crate) fn swap_implication(e: &SExpr) -> Option<SExpr> {
    rewrite_first(e, &|n| {
        let items = n.as_list()?;
        (n.head() == Some("=>") && items.len() == 3)
            .then(|| rebuild(vec![items[0].clone(), items[2].clone(), items[1].clone()], n.pos()))
    })
}

pub(crate) fn drop_negation(e: &SExpr) -> Option<SExpr> {
    rewrite_first(e, &|n| {
        let items = n.as_list()?;
        (n.head() == Some("not") && items.len() == 2).then(|| items[1].clone())
    })
}

pub(crate) fn drop_negated_conjunct(e: &SExpr) -> Option<SExpr> {
    rewrite_first(e, &|n| {
        let items = n.as_list()?;
        if n.head() != Some("and") {
            return None;
        }
        let idx = items[1..].iter().position(|c| c.head() == Some("not"))? + 1;
        let mut rest: Vec<SExpr> = items.to_vec();
        rest.remove(idx);
        Some(if rest.len() == 2 {
            rest.pop().unwrap()
        } else {
            rebuild(rest, n.pos())
        })
    })
}

/// Corrupts a formula reply. Falls back to the unchanged text when the
/// reply has no s-expression or the mode finds nothing to change.
pub fn corrupt_formula_text(reply: &str, mode: &FaultMode) -> String {
    if let FaultMode::CustomReplacement(t) = mode {
        return t.clone();
    }
    let start = match reply.find('(') {
        Some(i) => i,
        None => return reply.to_string(),
    };
    let Ok(forms) = sexpr::parse_all(&reply[start..]) else {
        return reply.to_string();
    };
    let Some(first) = forms.first() else {
        return reply.to_string();
    };
    let changed = match mode {
        FaultMode::ConsequentSwap => swap_implication(first),
        FaultMode::NegationDrop => drop_negation(first),
        FaultMode::ExceptionDrop => drop_negated_conjunct(first),
        FaultMode::CustomReplacement(_) => unreachable!(),
    };
    changed.map(|c| c.to_string()).unwrap_or_else(|| reply.to_string())
}

/// Corrupts a natural-language reply.
pub fn corrupt_text(reply: &str, mode: &FaultMode) -> String {
    match mode {
        FaultMode::CustomReplacement(t) => t.clone(),
        FaultMode::NegationDrop => {
            for neg in [" not ", " never ", " no "] {
                if let Some(i) = reply.find(neg) {
                    return format!("{} {}", &reply[..i], &reply[i + neg.len()..]);
                }
            }
            reply.to_string()
        }
        FaultMode::ExceptionDrop => {
            for marker in [" unless ", " except ", " without "] {
                if let Some(i) = reply.find(marker) {
                    let tail = &reply[i + marker.len()..];
                    let end = tail.find(['.', ';']).map(|j| &tail[j..]).unwrap_or("");
                    return format!("{}{}", &reply[..i], end);
                }
            }
            reply.to_string()
        }
        FaultMode::ConsequentSwap => match reply.split_once(", ") {
            Some((a, b)) => {
                let b = b.trim_end_matches('.');
                format!("{}{}, {}.", b[..1].to_uppercase(), &b[1..], a.to_lowercase())
            }
            None => reply.to_string(),
        },
    }
}

/// Wraps a backend and corrupts translation replies for the faulted rules.
pub struct FaultInjectingBackend<B> {
    inner: B,
    name: String,
    faults: Vec<FaultSpec>,
}

impl<B: TranslatorBackend> FaultInjectingBackend<B> {
    pub fn new(inner: B, faults: Vec<FaultSpec>) -> Result<Self, String> {
        for f in &faults {
            f.validate()?;
        }
        let name = format!("{}+faults", inner.name());
        Ok(FaultInjectingBackend { inner, name, faults })
    }
}

impl<B: TranslatorBackend> TranslatorBackend for FaultInjectingBackend<B> {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let reply = self.inner.complete(prompt)?;
        let Some(marker) = PromptMarker::parse(prompt) else {
            return Ok(reply);
        };
        let fault = self.faults.iter().find(|f| {
            f.rule_id == marker.rule_id && Role::translation(f.stage) == marker.role && f.active(marker.iteration)
        });
        Ok(match fault {
            Some(f) if f.stage == 2 => corrupt_text(&reply, &f.mode),
            Some(f) => corrupt_formula_text(&reply, &f.mode),
            None => reply,
        })
    }

    fn call_count(&self) -> u64 {
        self.inner.call_count()
    }
}
