//! Run configuration (TOML) and construction of the configured backends.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::synthetic::SyntheticBackend;
use crate::backends::{
    FaultSpec, HttpBackend, HttpConfig, RateLimiter, Role, ScriptedBackend, SyntheticWorld, TemplateSet,
    TranslatorBackend,
};
use crate::corpus::CorpusRecord;
use crate::equivalence::EquivalenceConfig;
use crate::events::ConditionKind;
use crate::nli::{ExternalScorer, LexicalBaseline, NliScorer};
use crate::pipeline::{RoleBackends, WellformednessPolicy};
use crate::repair::{RepairCondition, RepairConfig};
use crate::smt::Schema;

fn yes() -> bool {
    true
}

/// How one role is served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Live(HttpConfig),
    Scripted {
        path: PathBuf,
    },
    /// Oracle translators of the synthetic corpus; faults come from the
    /// run's `faults_path`.
    Synthetic {
        #[serde(default = "yes")]
        inject_faults: bool,
    },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Synthetic { inject_faults: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    /// Used for every role without its own entry.
    pub default: BackendSpec,
    #[serde(rename = "T1", skip_serializing_if = "Option::is_none")]
    pub t1: Option<BackendSpec>,
    #[serde(rename = "T2", skip_serializing_if = "Option::is_none")]
    pub t2: Option<BackendSpec>,
    #[serde(rename = "T3", skip_serializing_if = "Option::is_none")]
    pub t3: Option<BackendSpec>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<BackendSpec>,
    #[serde(rename = "R1", skip_serializing_if = "Option::is_none")]
    pub r1: Option<BackendSpec>,
    #[serde(rename = "R2", skip_serializing_if = "Option::is_none")]
    pub r2: Option<BackendSpec>,
    #[serde(rename = "R3", skip_serializing_if = "Option::is_none")]
    pub r3: Option<BackendSpec>,
}

impl BackendsConfig {
    pub fn uniform(spec: BackendSpec) -> Self {
        BackendsConfig {
            default: spec,
            ..BackendsConfig::default()
        }
    }

    pub fn for_role(&self, role: Role) -> &BackendSpec {
        let specific = match role {
            Role::T1 => &self.t1,
            Role::T2 => &self.t2,
            Role::T3 => &self.t3,
            Role::D => &self.d,
            Role::R1 => &self.r1,
            Role::R2 => &self.r2,
            Role::R3 => &self.r3,
        };
        specific.as_ref().unwrap_or(&self.default)
    }

    fn specs_mut(&mut self) -> impl Iterator<Item = &mut BackendSpec> {
        std::iter::once(&mut self.default).chain(
            [
                &mut self.t1,
                &mut self.t2,
                &mut self.t3,
                &mut self.d,
                &mut self.r1,
                &mut self.r2,
                &mut self.r3,
            ]
            .into_iter()
            .filter_map(Option::as_mut),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NliSpec {
    Off,
    #[default]
    Baseline,
    External {
        command: Vec<String>,
    },
}

impl NliSpec {
    pub fn scorer(&self) -> Result<Option<Box<dyn NliScorer>>, String> {
        match self {
            NliSpec::Off => Ok(None),
            NliSpec::Baseline => Ok(Some(Box::new(LexicalBaseline))),
            NliSpec::External { command } => ExternalScorer::new(command.clone())
                .map(|s| Some(Box::new(s) as Box<dyn NliScorer>))
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_path: PathBuf,
    pub corpus_path: PathBuf,
    pub condition: ConditionKind,
    /// Required for the random condition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Repair iteration budget.
    pub k: u32,
    pub output: PathBuf,
    /// Continue a run in `output`, skipping finished rules. Not part of the
    /// snapshot.
    pub resume: bool,
    pub workers: usize,
    pub max_attempts: u32,
    /// Overrides the inter-call delay of every live backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_limit_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    /// JSON list of fault specs for synthetic backends.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faults_path: Option<PathBuf>,
    pub backends: BackendsConfig,
    pub equivalence: EquivalenceConfig,
    pub nli: NliSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_path: PathBuf::new(),
            corpus_path: PathBuf::new(),
            condition: ConditionKind::Full,
            seed: None,
            k: 3,
            output: PathBuf::from("run"),
            resume: false,
            workers: 1,
            max_attempts: WellformednessPolicy::default().max_attempts,
            rate_limit_seconds: None,
            templates_dir: None,
            faults_path: None,
            backends: BackendsConfig::default(),
            equivalence: EquivalenceConfig::default(),
            nli: NliSpec::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(dir).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.schema_path);
        resolve(base, &mut self.corpus_path);
        resolve(base, &mut self.output);
        for p in [&mut self.templates_dir, &mut self.faults_path].into_iter().flatten() {
            resolve(base, p);
        }
        for spec in self.backends.specs_mut() {
            if let BackendSpec::Scripted { path } = spec {
                resolve(base, path);
            }
        }
    }

    /// Text written to `config.snapshot`: the effective configuration with
    /// the resume flag cleared.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        c.resume = false;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn repair_config(&self) -> RepairConfig {
        RepairConfig {
            max_iterations: self.k,
            condition: RepairCondition {
                kind: self.condition,
                seed: if self.condition == ConditionKind::Random { self.seed } else { None },
            },
        }
    }

    pub fn policy(&self) -> WellformednessPolicy {
        WellformednessPolicy {
            max_attempts: self.max_attempts,
        }
    }

    /// Checks values and that every referenced path exists.
    pub fn validate(&self) -> Result<(), String> {
        if self.condition == ConditionKind::Random && self.seed.is_none() {
            return Err("the random condition needs a seed".into());
        }
        self.repair_config().validate()?;
        self.policy().validate()?;
        self.equivalence.budget.validate()?;
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        let mut paths = vec![("schema_path", &self.schema_path), ("corpus_path", &self.corpus_path)];
        if let Some(p) = &self.templates_dir {
            paths.push(("templates_dir", p));
        }
        if let Some(p) = &self.faults_path {
            paths.push(("faults_path", p));
        }
        for role in Role::ALL {
            if let BackendSpec::Scripted { path } = self.backends.for_role(role) {
                paths.push(("scripted path", path));
            }
        }
        for (name, p) in paths {
            if p.as_os_str().is_empty() {
                return Err(format!("{name} is not set"));
            }
            if !p.exists() {
                return Err(format!("{name} {} does not exist", p.display()));
            }
        }
        for role in Role::ALL {
            if let BackendSpec::Live(h) = self.backends.for_role(role) {
                if h.endpoint_url.is_empty() || h.model.is_empty() {
                    return Err(format!("live backend for {role} needs endpoint_url and model"));
                }
            }
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<TemplateSet, String> {
        match &self.templates_dir {
            Some(d) => TemplateSet::load_dir(d).map_err(|e| e.to_string()),
            None => Ok(TemplateSet::builtin()),
        }
    }
}

pub fn load_faults(path: &Path) -> Result<Vec<FaultSpec>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Builds one backend per role. Backends with identical specs are shared,
/// and all live backends share one rate limiter.
pub fn build_backends(cfg: &RunConfig, schema: &Schema, corpus: &[CorpusRecord]) -> Result<RoleBackends, String> {
    let live_delay = cfg.rate_limit_seconds.unwrap_or_else(|| {
        Role::ALL
            .iter()
            .filter_map(|r| match cfg.backends.for_role(*r) {
                BackendSpec::Live(h) => Some(h.rate_limit_seconds),
                _ => None,
            })
            .fold(0.0, f64::max)
    });
    let limiter = RateLimiter::new(live_delay);
    let mut world: Option<Arc<SyntheticWorld>> = None;
    let mut built: BTreeMap<String, Arc<dyn TranslatorBackend>> = BTreeMap::new();
    let mut map: Vec<(Role, Arc<dyn TranslatorBackend>)> = Vec::new();
    for role in Role::ALL {
        let spec = cfg.backends.for_role(role);
        let key = serde_json::to_string(spec).expect("spec serializes");
        let backend = match built.get(&key) {
            Some(b) => b.clone(),
            None => {
                let b: Arc<dyn TranslatorBackend> = match spec {
                    BackendSpec::Live(h) => {
                        let mut h = h.clone();
                        if let Some(d) = cfg.rate_limit_seconds {
                            h.rate_limit_seconds = d;
                        }
                        Arc::new(HttpBackend::new(format!("live:{}", h.model), h, limiter.clone()))
                    }
                    BackendSpec::Scripted { path } => Arc::new(ScriptedBackend::from_file(
                        format!("scripted:{}", path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())),
                        path,
                    )?),
                    BackendSpec::Synthetic { inject_faults } => {
                        if world.is_none() {
                            let faults = match &cfg.faults_path {
                                Some(p) => load_faults(p)?,
                                None => Vec::new(),
                            };
                            world = Some(Arc::new(SyntheticWorld::from_records(schema, corpus, &faults)?));
                        }
                        let w = world.clone().unwrap();
                        if *inject_faults {
                            Arc::new(SyntheticBackend::with_faults(w))
                        } else {
                            Arc::new(SyntheticBackend::oracle(w))
                        }
                    }
                };
                built.insert(key, b.clone());
                b
            }
        };
        map.push((role, backend));
    }
    let mut it = map.into_iter();
    let (_, first) = it.next().expect("seven roles");
    Ok(it.fold(RoleBackends::uniform(first), |acc, (role, b)| acc.with(role, b)))
}
