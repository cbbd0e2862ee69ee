//! Synthetic rule corpus with exact inverse translators.
//!
//! Rules come from five sentence families (prohibition, conditional
//! obligation, exception clause, speed bound, yield) with parameters drawn
//! from a splitmix64 stream. Every sentence and formula of the family
//! language decodes back to its [`RuleSpec`], so the oracle translators are
//! exact: T1 and T3 parse the sentence, T2 parses the formula.
//!
//! Faults are applied to the rule spec, which keeps faulty artifacts inside
//! the family language:
//! - stage 1: T1 emits the faulty formula; back-translation of that formula
//!   (T2 or R2) yields the original sentence, so only R1 can fix it;
//! - stage 2: T2 emits the faulty sentence while the fault is active;
//! - stage 3: T3 emits the faulty formula while the fault is active.
//!
//! A fault is active at iteration 0, and at every iteration when stubborn.
//! Repairs (R1..R3) are always clean. The oracle judge names the faulted
//! stage of the rule (3 when the rule has no fault).

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::faults::{FaultMode, FaultSpec};
use super::{BackendError, CallCounter, PromptMarker, Role, TranslatorBackend};
use crate::corpus::CorpusRecord;
use crate::rng::SplitMix64;
use crate::smt::{parse_formula, sexpr, Formula, SExpr, Schema, SortKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Context {
    Roadway(RoadKind),
    FireHose,
    SchoolZone,
    BeingPassed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoadKind {
    Highway,
    Residential,
    Rural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Stop,
    Signal,
    Accelerate,
    Remain,
    Exceed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exception {
    Consent,
    Permit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VehicleClass {
    Car,
    Truck,
    Bus,
    Motorcycle,
}

/// The content of one synthetic rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleSpec {
    /// `None` means any vehicle.
    pub class: Option<VehicleClass>,
    pub context: Context,
    /// true for "must", false for "must not".
    pub positive: bool,
    pub action: Action,
    pub exception: Option<Exception>,
}

const CLASSES: [VehicleClass; 4] = [VehicleClass::Car, VehicleClass::Truck, VehicleClass::Bus, VehicleClass::Motorcycle];
const ROADS: [RoadKind; 3] = [RoadKind::Highway, RoadKind::Residential, RoadKind::Rural];
const LIMITS: [u32; 7] = [25, 30, 35, 45, 55, 65, 70];

impl VehicleClass {
    fn word(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Truck => "truck",
            VehicleClass::Bus => "bus",
            VehicleClass::Motorcycle => "motorcycle",
        }
    }

    fn ctor(self) -> &'static str {
        match self {
            VehicleClass::Car => "Car",
            VehicleClass::Truck => "Truck",
            VehicleClass::Bus => "Bus",
            VehicleClass::Motorcycle => "Motorcycle",
        }
    }
}

impl RoadKind {
    fn word(self) -> &'static str {
        match self {
            RoadKind::Highway => "highway",
            RoadKind::Residential => "residential",
            RoadKind::Rural => "rural",
        }
    }

    fn ctor(self) -> &'static str {
        match self {
            RoadKind::Highway => "Highway",
            RoadKind::Residential => "Residential",
            RoadKind::Rural => "Rural",
        }
    }
}

impl RuleSpec {
    pub fn sentence(&self) -> String {
        let class = self.class.map_or("vehicle", VehicleClass::word);
        let context = match self.context {
            Context::Roadway(k) => format!("on a {} roadway", k.word()),
            Context::FireHose => "on a roadway where a fire hose is laid".into(),
            Context::SchoolZone => "on a roadway where a school zone is active".into(),
            Context::BeingPassed => "being passed by another vehicle".into(),
        };
        let modal = if self.positive { "must" } else { "must not" };
        let action = match self.action {
            Action::Stop => "stop".to_string(),
            Action::Signal => "sound an audible signal".into(),
            Action::Accelerate => "accelerate".into(),
            Action::Remain => "remain on the roadway".into(),
            Action::Exceed(n) => format!("exceed {n} miles per hour"),
        };
        let exception = match self.exception {
            None => String::new(),
            Some(Exception::Consent) => " unless the fire department has consented".into(),
            Some(Exception::Permit) => " unless the operator holds a permit".into(),
        };
        format!("A {class} {context} {modal} {action}{exception}.")
    }

    fn uses_roadway(&self) -> bool {
        !matches!(self.context, Context::BeingPassed) || self.action == Action::Remain
    }

    /// Canonical formula text.
    pub fn formula_text(&self) -> String {
        let mut binders = vec!["(v Vehicle)"];
        if self.context == Context::BeingPassed {
            binders.push("(w Vehicle)");
        }
        if self.uses_roadway() {
            binders.push("(r Roadway)");
        }
        binders.push("(t Int)");
        let mut conj: Vec<String> = Vec::new();
        if let Some(c) = self.class {
            conj.push(format!("(= (kind v) {})", c.ctor()));
        }
        match self.context {
            Context::Roadway(k) => {
                conj.push("(on_roadway v r t)".into());
                conj.push(format!("(= (roadway_kind r) {})", k.ctor()));
            }
            Context::FireHose => {
                conj.push("(on_roadway v r t)".into());
                conj.push("(fire_hose_on_roadway r t)".into());
            }
            Context::SchoolZone => {
                conj.push("(on_roadway v r t)".into());
                conj.push("(school_zone_active r t)".into());
            }
            Context::BeingPassed => conj.push("(passing w v t)".into()),
        }
        match self.exception {
            Some(Exception::Consent) => conj.push("(not (fire_dept_consent v t))".into()),
            Some(Exception::Permit) => conj.push("(not (has_permit v t))".into()),
            None => {}
        }
        let antecedent = if conj.len() == 1 {
            conj.pop().unwrap()
        } else {
            format!("(and {})", conj.join(" "))
        };
        let atom = match self.action {
            Action::Stop => "(stopped v t)".to_string(),
            Action::Signal => "(audible_signal v t)".into(),
            Action::Accelerate => "(accelerating v t)".into(),
            Action::Remain => "(on_roadway v r t)".into(),
            Action::Exceed(n) => format!("(> (speed v t) {n}.0)"),
        };
        let consequent = if self.positive { atom } else { format!("(not {atom})") };
        format!("(forall ({}) (=> {antecedent} {consequent}))", binders.join(" "))
    }

    /// Reads a sentence of the family language.
    pub fn from_sentence(text: &str) -> Option<RuleSpec> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            Regex::new(concat!(
                r"^A (car|truck|bus|motorcycle|vehicle) ",
                r"(on a (highway|residential|rural) roadway|on a roadway where a fire hose is laid|",
                r"on a roadway where a school zone is active|being passed by another vehicle) ",
                r"must( not)? ",
                r"(stop|sound an audible signal|accelerate|remain on the roadway|exceed (\d+) miles per hour)",
                r"( unless (the fire department has consented|the operator holds a permit))?\.$"
            ))
            .unwrap()
        });
        let c = re.captures(text.trim())?;
        let class = match &c[1] {
            "vehicle" => None,
            w => Some(*CLASSES.iter().find(|k| k.word() == w)?),
        };
        let context = match c.get(3) {
            Some(k) => Context::Roadway(*ROADS.iter().find(|r| r.word() == k.as_str())?),
            None if c[2].contains("fire hose") => Context::FireHose,
            None if c[2].contains("school zone") => Context::SchoolZone,
            None => Context::BeingPassed,
        };
        let action = match &c[5] {
            "stop" => Action::Stop,
            "sound an audible signal" => Action::Signal,
            "accelerate" => Action::Accelerate,
            "remain on the roadway" => Action::Remain,
            _ => Action::Exceed(c[6].parse().ok()?),
        };
        let exception = c.get(8).map(|e| {
            if e.as_str().contains("fire department") {
                Exception::Consent
            } else {
                Exception::Permit
            }
        });
        Some(RuleSpec {
            class,
            context,
            positive: c.get(4).is_none(),
            action,
            exception,
        })
    }

    /// Reads a formula of the family language; anything whose re-encoding
    /// differs from the canonical input is rejected.
    pub fn from_formula(f: &Formula) -> Option<RuleSpec> {
        let canonical = f.render();
        let e = sexpr::parse_one(&canonical).ok()?;
        let items = e.as_list()?;
        if e.head() != Some("forall") || items.len() != 3 {
            return None;
        }
        let body = items[2].as_list()?;
        if items[2].head() != Some("=>") || body.len() != 3 {
            return None;
        }
        let conj: Vec<&SExpr> = match body[1].head() {
            Some("and") => body[1].as_list()?[1..].iter().collect(),
            _ => vec![&body[1]],
        };
        let mut class = None;
        let mut road = None;
        let mut context = None;
        let mut exception = None;
        for c in conj {
            let s = c.to_string();
            match s.as_str() {
                "(on_roadway v r t)" => {}
                "(fire_hose_on_roadway r t)" => context = Some(Context::FireHose),
                "(school_zone_active r t)" => context = Some(Context::SchoolZone),
                "(passing w v t)" => context = Some(Context::BeingPassed),
                "(not (fire_dept_consent v t))" => exception = Some(Exception::Consent),
                "(not (has_permit v t))" => exception = Some(Exception::Permit),
                _ => {
                    if let Some(k) = s.strip_prefix("(= (kind v) ").and_then(|x| x.strip_suffix(')')) {
                        class = Some(*CLASSES.iter().find(|c| c.ctor() == k)?);
                    } else if let Some(k) = s.strip_prefix("(= (roadway_kind r) ").and_then(|x| x.strip_suffix(')')) {
                        road = Some(*ROADS.iter().find(|r| r.ctor() == k)?);
                    } else {
                        return None;
                    }
                }
            }
        }
        let context = match (context, road) {
            (None, Some(k)) => Context::Roadway(k),
            (Some(c), None) => c,
            _ => return None,
        };
        let (positive, atom) = match body[2].head() {
            Some("not") => (false, body[2].as_list()?.get(1)?.to_string()),
            _ => (true, body[2].to_string()),
        };
        let action = match atom.as_str() {
            "(stopped v t)" => Action::Stop,
            "(audible_signal v t)" => Action::Signal,
            "(accelerating v t)" => Action::Accelerate,
            "(on_roadway v r t)" => Action::Remain,
            _ => {
                let n = atom.strip_prefix("(> (speed v t) ")?.strip_suffix(".0)")?;
                Action::Exceed(n.parse().ok()?)
            }
        };
        let spec = RuleSpec {
            class,
            context,
            positive,
            action,
            exception,
        };
        (spec.formula_text() == canonical).then_some(spec)
    }

    /// The spec-level effect of a fault mode (custom replacement excluded).
    pub fn mutate(&self, mode: &FaultMode) -> RuleSpec {
        let mut s = *self;
        match mode {
            FaultMode::NegationDrop | FaultMode::CustomReplacement(_) => s.positive = !s.positive,
            FaultMode::ConsequentSwap => {
                s.action = match s.action {
                    Action::Remain => Action::Stop,
                    Action::Stop => Action::Signal,
                    Action::Signal => Action::Accelerate,
                    Action::Accelerate => Action::Remain,
                    Action::Exceed(_) => Action::Stop,
                }
            }
            FaultMode::ExceptionDrop => {
                if s.exception.is_some() {
                    s.exception = None;
                } else if s.class.is_some() {
                    s.class = None;
                } else {
                    s.positive = !s.positive;
                }
            }
        }
        s
    }
}

fn draw_spec(rng: &mut SplitMix64, family: usize) -> RuleSpec {
    let class = if rng.chance(1, 5) { None } else { Some(*rng.pick(&CLASSES)) };
    let road_context = |rng: &mut SplitMix64| match rng.below(3) {
        0 => Context::Roadway(*rng.pick(&ROADS)),
        1 => Context::FireHose,
        _ => Context::SchoolZone,
    };
    match family {
        // prohibition
        0 => RuleSpec {
            class,
            context: road_context(rng),
            positive: false,
            action: *rng.pick(&[Action::Remain, Action::Accelerate, Action::Stop]),
            exception: None,
        },
        // conditional obligation
        1 => RuleSpec {
            class,
            context: road_context(rng),
            positive: true,
            action: *rng.pick(&[Action::Stop, Action::Signal]),
            exception: None,
        },
        // exception clause
        2 => RuleSpec {
            class,
            context: road_context(rng),
            positive: rng.chance(1, 2),
            action: *rng.pick(&[Action::Remain, Action::Stop, Action::Signal]),
            exception: Some(*rng.pick(&[Exception::Consent, Exception::Permit])),
        },
        // speed bound
        3 => RuleSpec {
            class,
            context: if rng.chance(1, 2) {
                Context::SchoolZone
            } else {
                Context::Roadway(*rng.pick(&ROADS))
            },
            positive: false,
            action: Action::Exceed(*rng.pick(&LIMITS)),
            exception: None,
        },
        // yield while being passed
        _ => RuleSpec {
            class,
            context: Context::BeingPassed,
            positive: false,
            action: Action::Accelerate,
            exception: None,
        },
    }
}

/// Checks that the schema declares the vocabulary the families use.
pub fn check_vocabulary(schema: &Schema) -> Result<(), String> {
    let funs = [
        "kind",
        "speed",
        "on_roadway",
        "roadway_kind",
        "fire_hose_on_roadway",
        "school_zone_active",
        "stopped",
        "audible_signal",
        "accelerating",
        "passing",
        "fire_dept_consent",
        "has_permit",
    ];
    for f in funs {
        if schema.signature(f).is_none() {
            return Err(format!("schema lacks `{f}`, required by the synthetic corpus"));
        }
    }
    for (sort, ctors) in [
        ("VehicleKind", &["Car", "Truck", "Bus", "Motorcycle"][..]),
        ("RoadwayKind", &["Highway", "Residential", "Rural"][..]),
    ] {
        match schema.sort(sort).map(|s| &s.kind) {
            Some(SortKind::Enumerated(have)) if ctors.iter().all(|c| have.iter().any(|h| h == c)) => {}
            _ => return Err(format!("schema lacks enumeration `{sort}` with {}", ctors.join(", "))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticRule {
    pub id: String,
    pub text: String,
    pub spec: RuleSpec,
    pub formula: Formula,
}

struct FaultPlan {
    spec: FaultSpec,
    /// Faulty artifact: formula text for stages 1 and 3, a sentence for 2.
    output: String,
}

/// Everything the oracle backends need: rules by id and planned faults.
pub struct SyntheticWorld {
    schema: Schema,
    rules: BTreeMap<String, SyntheticRule>,
    faults: BTreeMap<String, FaultPlan>,
}

impl SyntheticWorld {
    /// Rebuilds a world from corpus records (every text must be a family
    /// sentence) and fault specs.
    pub fn from_records(schema: &Schema, records: &[CorpusRecord], faults: &[FaultSpec]) -> Result<Self, String> {
        check_vocabulary(schema)?;
        let mut rules = BTreeMap::new();
        for r in records {
            let spec = RuleSpec::from_sentence(&r.text)
                .ok_or_else(|| format!("rule {}: text is not a synthetic-family sentence", r.id))?;
            let formula = parse_formula(&spec.formula_text(), schema)
                .map_err(|e| format!("rule {}: generated formula rejected: {e}", r.id))?;
            if rules
                .insert(
                    r.id.clone(),
                    SyntheticRule {
                        id: r.id.clone(),
                        text: r.text.clone(),
                        spec,
                        formula,
                    },
                )
                .is_some()
            {
                return Err(format!("duplicate rule id {}", r.id));
            }
        }
        let mut plans = BTreeMap::new();
        for f in faults {
            f.validate()?;
            let rule = rules
                .get(&f.rule_id)
                .ok_or_else(|| format!("fault references unknown rule `{}`", f.rule_id))?;
            let output = match (&f.mode, f.stage) {
                (FaultMode::CustomReplacement(text), 2) => {
                    if RuleSpec::from_sentence(text).is_none() {
                        return Err(format!(
                            "fault for {}: custom stage-2 text must be a synthetic-family sentence",
                            f.rule_id
                        ));
                    }
                    text.clone()
                }
                (FaultMode::CustomReplacement(text), _) => parse_formula(text, schema)
                    .map_err(|e| format!("fault for {}: custom formula rejected: {e}", f.rule_id))?
                    .render(),
                (mode, 2) => rule.spec.mutate(mode).sentence(),
                (mode, _) => rule.spec.mutate(mode).formula_text(),
            };
            if plans
                .insert(f.rule_id.clone(), FaultPlan { spec: f.clone(), output })
                .is_some()
            {
                return Err(format!("more than one fault for rule {}", f.rule_id));
            }
        }
        Ok(SyntheticWorld {
            schema: schema.clone(),
            rules,
            faults: plans,
        })
    }

    pub fn rules(&self) -> impl Iterator<Item = &SyntheticRule> {
        self.rules.values()
    }

    pub fn rule(&self, id: &str) -> Option<&SyntheticRule> {
        self.rules.get(id)
    }

    pub fn fault(&self, id: &str) -> Option<&FaultSpec> {
        self.faults.get(id).map(|p| &p.spec)
    }

    fn active_fault(&self, id: &str, stage: u8, iteration: u32) -> Option<&str> {
        let plan = self.faults.get(id)?;
        (plan.spec.stage == stage && plan.spec.active(iteration)).then_some(plan.output.as_str())
    }

    fn back_translate(&self, rule: &SyntheticRule, formula_text: &str) -> Result<String, BackendError> {
        if let Some(plan) = self.faults.get(&rule.id) {
            if plan.spec.stage == 1 && plan.output == canonical(formula_text, &self.schema)? {
                return Ok(rule.text.clone());
            }
        }
        let f = parse_formula(formula_text, &self.schema)
            .map_err(|e| BackendError::MalformedResponse(format!("synthetic T2 input: {e}")))?;
        RuleSpec::from_formula(&f)
            .map(|s| s.sentence())
            .ok_or_else(|| BackendError::MalformedResponse("formula is outside the synthetic language".into()))
    }
}

fn canonical(text: &str, schema: &Schema) -> Result<String, BackendError> {
    parse_formula(text, schema)
        .map(|f| f.render())
        .map_err(|e| BackendError::MalformedResponse(format!("synthetic input: {e}")))
}

fn formalize(text: &str) -> Result<String, BackendError> {
    RuleSpec::from_sentence(text)
        .map(|s| s.formula_text())
        .ok_or_else(|| BackendError::MalformedResponse(format!("sentence outside the synthetic language: {text}")))
}

/// Text between `<tag>` and `</tag>` in a rendered prompt.
pub fn tagged<'a>(prompt: &'a str, tag: &str) -> Result<&'a str, BackendError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = prompt
        .find(&open)
        .ok_or_else(|| BackendError::MalformedResponse(format!("prompt has no <{tag}> artifact")))?
        + open.len();
    let end = prompt[start..]
        .find(&close)
        .ok_or_else(|| BackendError::MalformedResponse(format!("prompt has no </{tag}>")))?;
    Ok(&prompt[start..start + end])
}

/// Oracle translator, repairer and judge for a synthetic world.
pub struct SyntheticBackend {
    name: String,
    world: Arc<SyntheticWorld>,
    inject: bool,
    calls: CallCounter,
}

impl SyntheticBackend {
    /// Exact translators with no faults.
    pub fn oracle(world: Arc<SyntheticWorld>) -> Self {
        SyntheticBackend {
            name: "synthetic-oracle".into(),
            world,
            inject: false,
            calls: CallCounter::default(),
        }
    }

    /// Exact translators with the world's faults injected.
    pub fn with_faults(world: Arc<SyntheticWorld>) -> Self {
        SyntheticBackend {
            name: "synthetic-faulty".into(),
            world,
            inject: true,
            calls: CallCounter::default(),
        }
    }
}

impl TranslatorBackend for SyntheticBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.bump();
        let m = PromptMarker::parse(prompt)
            .ok_or_else(|| BackendError::MalformedResponse("synthetic backend needs a role marker".into()))?;
        let w = &self.world;
        let rule = w
            .rule(&m.rule_id)
            .ok_or_else(|| BackendError::MissingEntry(format!("synthetic rule {}", m.rule_id)))?;
        let fault = |stage: u8| {
            if self.inject {
                w.active_fault(&rule.id, stage, m.iteration)
            } else {
                None
            }
        };
        match m.role {
            Role::T1 => match fault(1) {
                Some(out) => Ok(out.to_string()),
                None => formalize(tagged(prompt, "original_nl")?),
            },
            Role::T2 => {
                let clean = w.back_translate(rule, tagged(prompt, "phase1_smt")?)?;
                Ok(fault(2).map(str::to_string).unwrap_or(clean))
            }
            Role::T3 => {
                let clean = formalize(tagged(prompt, "reconstructed_nl")?)?;
                Ok(fault(3).map(str::to_string).unwrap_or(clean))
            }
            Role::R1 => formalize(tagged(prompt, "original_nl")?),
            Role::R2 => w.back_translate(rule, tagged(prompt, "phase1_smt")?),
            Role::R3 => formalize(tagged(prompt, "reconstructed_nl")?),
            Role::D => {
                let stage = w.fault(&rule.id).map_or(3, |f| f.stage);
                Ok(format!(
                    "FIRST_FAILED_ARROW: {stage}\nREASONING: Arrow {stage} does not preserve the meaning of its input artifact."
                ))
            }
        }
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

/// A generated corpus and its world.
pub struct SyntheticCorpus {
    pub rules: Vec<SyntheticRule>,
    pub world: Arc<SyntheticWorld>,
}

impl SyntheticCorpus {
    pub fn records(&self) -> Vec<CorpusRecord> {
        self.rules
            .iter()
            .map(|r| CorpusRecord {
                id: r.id.clone(),
                text: r.text.clone(),
            })
            .collect()
    }
}

/// Rule ids `s001`, `s002`, ... (wider when `n` needs it).
pub fn rule_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("s{:0width$}", i + 1)
}

/// Generates `n` rules from `seed`; families cycle in order and parameters
/// come from the seeded stream.
pub fn generate_synthetic_corpus(
    seed: u64,
    n: usize,
    schema: &Schema,
    faults: &[FaultSpec],
) -> Result<SyntheticCorpus, String> {
    if n == 0 {
        return Err("corpus size must be positive".into());
    }
    let mut rng = SplitMix64::new(seed);
    let records: Vec<CorpusRecord> = (0..n)
        .map(|i| CorpusRecord {
            id: rule_id(i, n),
            text: draw_spec(&mut rng, i % 5).sentence(),
        })
        .collect();
    let world = SyntheticWorld::from_records(schema, &records, faults)?;
    let rules = records.iter().map(|r| world.rules[&r.id].clone()).collect();
    Ok(SyntheticCorpus {
        rules,
        world: Arc::new(world),
    })
}

/// Draws faults for `percent` percent of `rule_ids` (in expectation). Each chosen rule gets one
/// fault at `stage`, or at a uniformly drawn stage when `stage` is None, with
/// a uniformly drawn built-in mode.
pub fn plan_faults(seed: u64, rule_ids: &[String], percent: u64, stage: Option<u8>, stubborn: bool) -> Vec<FaultSpec> {
    const MODES: [FaultMode; 3] = [FaultMode::ConsequentSwap, FaultMode::NegationDrop, FaultMode::ExceptionDrop];
    let mut rng = SplitMix64::new(seed ^ 0xfa17);
    rule_ids
        .iter()
        .filter_map(|id| {
            let chosen = rng.chance(percent, 100);
            let st = stage.unwrap_or_else(|| rng.below(3) as u8 + 1);
            let mode = rng.pick(&MODES).clone();
            chosen.then(|| FaultSpec {
                rule_id: id.clone(),
                stage: st,
                mode,
                stubborn,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::load(include_str!("../../../../data/schema/traffic_sample.smt2")).unwrap()
    }

    #[test]
    fn sentence_and_formula_invert() {
        let s = schema();
        let mut rng = SplitMix64::new(7);
        for i in 0..500 {
            let spec = draw_spec(&mut rng, i % 5);
            assert_eq!(RuleSpec::from_sentence(&spec.sentence()), Some(spec));
            let f = parse_formula(&spec.formula_text(), &s).unwrap();
            assert_eq!(f.render(), spec.formula_text());
            assert_eq!(RuleSpec::from_formula(&f), Some(spec));
        }
    }

    #[test]
    fn example_rendering() {
        let spec = RuleSpec {
            class: Some(VehicleClass::Truck),
            context: Context::FireHose,
            positive: false,
            action: Action::Remain,
            exception: Some(Exception::Consent),
        };
        assert_eq!(
            spec.sentence(),
            "A truck on a roadway where a fire hose is laid must not remain on the roadway unless the fire department has consented."
        );
        assert_eq!(
            spec.formula_text(),
            "(forall ((v Vehicle) (r Roadway) (t Int)) (=> (and (= (kind v) Truck) (on_roadway v r t) (fire_hose_on_roadway r t) (not (fire_dept_consent v t))) (not (on_roadway v r t))))"
        );
    }

    #[test]
    fn generation_errors() {
        let s = schema();
        assert!(generate_synthetic_corpus(1, 0, &s, &[]).is_err());
        let bad = FaultSpec {
            rule_id: "nope".into(),
            stage: 3,
            mode: FaultMode::NegationDrop,
            stubborn: false,
        };
        assert!(generate_synthetic_corpus(1, 3, &s, &[bad]).is_err());
        assert!(generate_synthetic_corpus(1, 3, &Schema::empty(), &[]).is_err());
    }

    #[test]
    fn ids_are_padded() {
        assert_eq!(rule_id(0, 10), "s001");
        assert_eq!(rule_id(1233, 5000), "s1234");
    }
}
