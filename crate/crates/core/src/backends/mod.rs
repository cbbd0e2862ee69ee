//! Translator backends: the single `complete(prompt) -> reply` contract and
//! its implementations (live HTTP, scripted replay, fault injection and the
//! synthetic template corpus).

pub mod faults;
pub mod http;
pub mod scripted;
pub mod synthetic;
pub mod template;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use faults::{FaultInjectingBackend, FaultMode, FaultSpec};
pub use http::{HttpBackend, HttpConfig, Provider, RateLimiter};
pub use scripted::{ReplayEntry, ScriptedBackend};
pub use synthetic::{
    generate_synthetic_corpus, plan_faults, SyntheticBackend, SyntheticCorpus, SyntheticRule, SyntheticWorld,
};
pub use template::{render_prompt, PromptTemplate, TemplateError, TemplateSet};

/// Prompt roles: the three translations, diagnosis and the three repairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    T1,
    T2,
    T3,
    D,
    R1,
    R2,
    R3,
}

impl Role {
    pub const ALL: [Role; 7] = [Role::T1, Role::T2, Role::T3, Role::D, Role::R1, Role::R2, Role::R3];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::T1 => "T1",
            Role::T2 => "T2",
            Role::T3 => "T3",
            Role::D => "D",
            Role::R1 => "R1",
            Role::R2 => "R2",
            Role::R3 => "R3",
        }
    }

    /// The translation role of a stage index.
    pub fn translation(stage: u8) -> Role {
        match stage {
            1 => Role::T1,
            2 => Role::T2,
            _ => Role::T3,
        }
    }

    /// The repair role of a stage index.
    pub fn repair(stage: u8) -> Role {
        match stage {
            1 => Role::R1,
            2 => Role::R2,
            _ => Role::R3,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// Machine-readable first line of every prompt, used by scripted backends to
/// key replies and removed before a prompt goes to a live model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptMarker {
    pub role: Role,
    pub rule_id: String,
    pub iteration: u32,
    pub attempt: u32,
}

impl PromptMarker {
    pub fn line(&self) -> String {
        format!(
            "#ROLE:{} RULE:{} ITER:{} ATTEMPT:{}",
            self.role, self.rule_id, self.iteration, self.attempt
        )
    }

    /// Reads the marker from a prompt's first line, if present.
    pub fn parse(prompt: &str) -> Option<PromptMarker> {
        let first = prompt.lines().next()?.trim();
        let rest = first.strip_prefix("#ROLE:")?;
        let mut fields = rest.split_whitespace();
        let role: Role = fields.next()?.parse().ok()?;
        let mut marker = PromptMarker {
            role,
            rule_id: String::new(),
            iteration: 0,
            attempt: 1,
        };
        for field in fields {
            let (k, v) = field.split_once(':')?;
            match k {
                "RULE" => marker.rule_id = v.to_string(),
                "ITER" => marker.iteration = v.parse().ok()?,
                "ATTEMPT" => marker.attempt = v.parse().ok()?,
                _ => {}
            }
        }
        Some(marker)
    }
}

/// The prompt without its marker line.
pub fn strip_marker(prompt: &str) -> &str {
    if prompt.starts_with("#ROLE:") {
        match prompt.find('\n') {
            Some(i) => &prompt[i + 1..],
            None => "",
        }
    } else {
        prompt
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no scripted reply for {0}")]
    MissingEntry(String),
    #[error("{0}")]
    Other(String),
}

/// A stateless text-completion service.
pub trait TranslatorBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
    /// Number of `complete` calls made so far, including failed ones.
    fn call_count(&self) -> u64;
}

impl<B: TranslatorBackend + ?Sized> TranslatorBackend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn call_count(&self) -> u64 {
        (**self).call_count()
    }
}

/// Monotone call counter shared by the implementations.
#[derive(Debug, Default)]
pub struct CallCounter(AtomicU64);

impl CallCounter {
    pub fn bump(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Wraps a closure as a backend; handy for tests and small adapters.
pub struct FnBackend<F> {
    name: String,
    calls: CallCounter,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnBackend {
            name: name.into(),
            calls: CallCounter::default(),
            f,
        }
    }
}

impl<F> TranslatorBackend for FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.bump();
        (self.f)(prompt)
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}
