//! External SMT solver over standard streams.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use super::enumerate::{Interpretation, Value};
use crate::smt::{sexpr, SExpr, Schema, SortKind, Ty};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub program: String,
    pub args: Vec<String>,
    pub timeout_seconds: f64,
    /// Maximum number of solver processes alive at once.
    pub max_concurrent: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            program: "z3".into(),
            args: vec!["-in".into()],
            timeout_seconds: 10.0,
            max_concurrent: 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("solver `{0}` not found")]
    NotFound(String),
    #[error("solver protocol error: {0}")]
    Protocol(String),
    #[error("solver i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// The solver's answer to a satisfiability query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat { model: Option<String> },
    Unsat,
    Unknown { reason: String },
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

/// Shared handle to a configured solver binary; limits concurrent processes.
#[derive(Clone)]
pub struct SolverHandle {
    config: SolverConfig,
    slots: Arc<Slots>,
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

impl SolverHandle {
    pub fn new(config: SolverConfig) -> Self {
        let n = config.max_concurrent.max(1);
        SolverHandle {
            config,
            slots: Arc::new(Slots {
                free: Mutex::new(n),
                cv: Condvar::new(),
            }),
        }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// True when the configured program can be started.
    pub fn is_available(&self) -> bool {
        Command::new(&self.config.program)
            .arg("-version")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok()
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.slots.free.lock().unwrap();
        while *free == 0 {
            free = self.slots.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(&self.slots)
    }

    /// Runs one script in a fresh process. On `sat` and `want_model`, sends
    /// `(get-model)` and returns the raw model text.
    pub fn check(&self, script: &str, want_model: bool) -> Result<SolverAnswer, SolverError> {
        let _slot = self.acquire();
        let timeout = Duration::from_secs_f64(self.config.timeout_seconds.max(0.001));
        let deadline = Instant::now() + timeout;
        let mut child = Command::new(&self.config.program)
            .args(&self.config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                    SolverError::NotFound(self.config.program.clone())
                }
                _ => SolverError::Io(e),
            })?;
        let mut stdin = child.stdin.take().unwrap();
        let stdout = child.stdout.take().unwrap();
        let (tx, rx) = mpsc::channel::<String>();
        let reader = std::thread::spawn(move || {
            let mut lines = BufReader::new(stdout);
            let mut line = String::new();
            loop {
                line.clear();
                match lines.read_line(&mut line) {
                    Ok(0) | Err(_) => break,
                    Ok(_) => {
                        if tx.send(line.trim_end().to_string()).is_err() {
                            break;
                        }
                    }
                }
            }
            // drain so the child never blocks on a full pipe
            let _ = lines.read_to_end(&mut Vec::new());
        });

        let outcome = (|| {
            if let Err(e) = stdin.write_all(script.as_bytes()).and_then(|_| stdin.write_all(b"\n")) {
                return Err(SolverError::Protocol(format!("could not send script: {e}")));
            }
            stdin.flush()?;
            let first = match next_line(&rx, deadline) {
                Next::Line(l) => l,
                Next::Timeout => return Ok(None),
                Next::Closed => return Err(SolverError::Protocol("solver exited without an answer".into())),
            };
            match first.as_str() {
                "unsat" => Ok(Some(SolverAnswer::Unsat)),
                "unknown" => Ok(Some(SolverAnswer::Unknown {
                    reason: "solver answered unknown".into(),
                })),
                "sat" if !want_model => Ok(Some(SolverAnswer::Sat { model: None })),
                "sat" => {
                    stdin.write_all(b"(get-model)\n(exit)\n")?;
                    stdin.flush()?;
                    let mut text = String::new();
                    let mut depth = 0i64;
                    let mut started = false;
                    loop {
                        match next_line(&rx, deadline) {
                            Next::Line(l) => {
                                depth += paren_balance(&l);
                                started |= l.contains('(');
                                text.push_str(&l);
                                text.push('\n');
                                if started && depth <= 0 {
                                    break;
                                }
                            }
                            Next::Timeout | Next::Closed => break,
                        }
                    }
                    let model = (started && depth <= 0).then_some(text);
                    Ok(Some(SolverAnswer::Sat { model }))
                }
                other => Err(SolverError::Protocol(format!("unexpected reply `{other}`"))),
            }
        })();
        drop(stdin);
        kill(&mut child);
        let _ = reader.join();
        match outcome? {
            Some(answer) => Ok(answer),
            None => Ok(SolverAnswer::Unknown {
                reason: format!("timed out after {:.1} s", timeout.as_secs_f64()),
            }),
        }
    }
}

enum Next {
    Line(String),
    Timeout,
    Closed,
}

fn next_line(rx: &Receiver<String>, deadline: Instant) -> Next {
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(l) if l.trim().is_empty() => continue,
            Ok(l) => return Next::Line(l.trim().to_string()),
            Err(RecvTimeoutError::Timeout) => return Next::Timeout,
            Err(RecvTimeoutError::Disconnected) => return Next::Closed,
        }
    }
}

fn paren_balance(line: &str) -> i64 {
    let mut depth = 0;
    let mut in_str = false;
    for c in line.chars() {
        match c {
            '"' => in_str = !in_str,
            ';' if !in_str => break,
            '(' if !in_str => depth += 1,
            ')' if !in_str => depth -= 1,
            _ => {}
        }
    }
    depth
}

#[derive(Debug, Clone, PartialEq)]
enum MVal {
    B(bool),
    N(Rational64),
    E(String, usize),
    C(String),
}

struct ModelFun {
    params: Vec<String>,
    body: SExpr,
}

struct Model<'a> {
    schema: &'a Schema,
    funs: HashMap<String, ModelFun>,
}

fn universe_element(atom: &str) -> Option<(String, usize)> {
    let (sort, idx) = atom.rsplit_once("!val!")?;
    Some((sort.to_string(), idx.parse().ok()?))
}

fn parse_number(atom: &str) -> Option<Rational64> {
    if let Ok(i) = atom.parse::<i64>() {
        return Some(Rational64::from_integer(i));
    }
    let (a, b) = atom.split_once('.')?;
    let denom = 10i64.checked_pow(b.len() as u32)?;
    let numer: i64 = format!("{a}{b}").parse().ok()?;
    Some(Rational64::new(numer, denom))
}

impl Model<'_> {
    fn eval(&self, e: &SExpr, env: &[(String, MVal)], depth: usize) -> Option<MVal> {
        if depth > 200 {
            return None;
        }
        match e {
            SExpr::Atom { text, .. } => {
                if let Some((_, v)) = env.iter().rev().find(|(n, _)| n == text) {
                    return Some(v.clone());
                }
                match text.as_str() {
                    "true" => return Some(MVal::B(true)),
                    "false" => return Some(MVal::B(false)),
                    _ => {}
                }
                if let Some(n) = parse_number(text) {
                    return Some(MVal::N(n));
                }
                if let Some((s, i)) = universe_element(text) {
                    return Some(MVal::E(s, i));
                }
                if self.schema.constructor_sort(text).is_some() {
                    return Some(MVal::C(text.clone()));
                }
                self.call(text, &[], depth)
            }
            SExpr::List { items, .. } => {
                let head = items.first()?.as_atom()?;
                let args = &items[1..];
                let bool_of = |m: &Model, x: &SExpr| match m.eval(x, env, depth + 1)? {
                    MVal::B(b) => Some(b),
                    _ => None,
                };
                let num_of = |m: &Model, x: &SExpr| match m.eval(x, env, depth + 1)? {
                    MVal::N(n) => Some(n),
                    _ => None,
                };
                Some(match head {
                    "ite" if args.len() == 3 => {
                        return if bool_of(self, &args[0])? {
                            self.eval(&args[1], env, depth + 1)
                        } else {
                            self.eval(&args[2], env, depth + 1)
                        }
                    }
                    "not" if args.len() == 1 => MVal::B(!bool_of(self, &args[0])?),
                    "and" => {
                        let mut all = true;
                        for a in args {
                            all &= bool_of(self, a)?;
                        }
                        MVal::B(all)
                    }
                    "or" => {
                        let mut any = false;
                        for a in args {
                            any |= bool_of(self, a)?;
                        }
                        MVal::B(any)
                    }
                    "=>" if args.len() == 2 => MVal::B(!bool_of(self, &args[0])? || bool_of(self, &args[1])?),
                    "=" if args.len() >= 2 => {
                        let first = self.eval(&args[0], env, depth + 1)?;
                        let mut eq = true;
                        for a in &args[1..] {
                            eq &= self.eval(a, env, depth + 1)? == first;
                        }
                        MVal::B(eq)
                    }
                    "distinct" if args.len() >= 2 => {
                        let vals = args
                            .iter()
                            .map(|a| self.eval(a, env, depth + 1))
                            .collect::<Option<Vec<_>>>()?;
                        let mut ok = true;
                        for i in 0..vals.len() {
                            for j in i + 1..vals.len() {
                                ok &= vals[i] != vals[j];
                            }
                        }
                        MVal::B(ok)
                    }
                    "<" | "<=" | ">" | ">=" if args.len() == 2 => {
                        let a = num_of(self, &args[0])?;
                        let b = num_of(self, &args[1])?;
                        MVal::B(match head {
                            "<" => a < b,
                            "<=" => a <= b,
                            ">" => a > b,
                            _ => a >= b,
                        })
                    }
                    "+" => {
                        let mut acc = Rational64::from_integer(0);
                        for a in args {
                            acc += num_of(self, a)?;
                        }
                        MVal::N(acc)
                    }
                    "-" if args.len() == 1 => MVal::N(-num_of(self, &args[0])?),
                    "-" if args.len() >= 2 => {
                        let mut acc = num_of(self, &args[0])?;
                        for a in &args[1..] {
                            acc -= num_of(self, a)?;
                        }
                        MVal::N(acc)
                    }
                    "*" => {
                        let mut acc = Rational64::from_integer(1);
                        for a in args {
                            acc *= num_of(self, a)?;
                        }
                        MVal::N(acc)
                    }
                    "/" if args.len() == 2 => {
                        let b = num_of(self, &args[1])?;
                        if b == Rational64::from_integer(0) {
                            return None;
                        }
                        MVal::N(num_of(self, &args[0])? / b)
                    }
                    "to_real" | "to_int" if args.len() == 1 => {
                        let n = num_of(self, &args[0])?;
                        MVal::N(if head == "to_int" { n.floor() } else { n })
                    }
                    "let" if args.len() == 2 => {
                        let mut inner = env.to_vec();
                        for b in args[0].as_list()? {
                            let pair = b.as_list()?;
                            let v = self.eval(pair.get(1)?, env, depth + 1)?;
                            inner.push((pair.first()?.as_atom()?.to_string(), v));
                        }
                        return self.eval(&args[1], &inner, depth + 1);
                    }
                    name => {
                        let vals = args
                            .iter()
                            .map(|a| self.eval(a, env, depth + 1))
                            .collect::<Option<Vec<_>>>()?;
                        return self.call(name, &vals, depth + 1);
                    }
                })
            }
        }
    }

    fn call(&self, name: &str, args: &[MVal], depth: usize) -> Option<MVal> {
        let f = self.funs.get(name)?;
        if f.params.len() != args.len() {
            return None;
        }
        let env: Vec<(String, MVal)> = f.params.iter().cloned().zip(args.iter().cloned()).collect();
        self.eval(&f.body, &env, depth + 1)
    }
}

fn collect_universe(e: &SExpr, sizes: &mut BTreeMap<String, usize>) {
    match e {
        SExpr::Atom { text, .. } => {
            if let Some((s, i)) = universe_element(text) {
                let n = sizes.entry(s).or_insert(0);
                *n = (*n).max(i + 1);
            }
        }
        SExpr::List { items, .. } => items.iter().for_each(|i| collect_universe(i, sizes)),
    }
}

fn to_value(v: &MVal, ty: &Ty, schema: &Schema) -> Option<Value> {
    Some(match (v, ty) {
        (MVal::B(b), Ty::Bool) => Value::Bool(*b),
        (MVal::N(n), Ty::Int) if n.is_integer() => Value::Int(*n.numer()),
        (MVal::N(n), Ty::Real) => Value::Real(*n),
        (MVal::E(s, i), Ty::Named(t)) if s == t => Value::Elem {
            sort: s.clone(),
            index: *i,
        },
        (MVal::C(c), Ty::Named(t)) if schema.constructor_sort(c) == Some(t.as_str()) => Value::Ctor(c.clone()),
        _ => return None,
    })
}

fn arg_domain(ty: &Ty, schema: &Schema, sizes: &BTreeMap<String, usize>, window: (i64, i64)) -> Option<Vec<MVal>> {
    Some(match ty {
        Ty::Bool => vec![MVal::B(false), MVal::B(true)],
        Ty::Int | Ty::Real => (window.0..=window.1)
            .map(|i| MVal::N(Rational64::from_integer(i)))
            .collect(),
        Ty::Named(n) => match &schema.sort(n)?.kind {
            SortKind::Enumerated(ctors) => ctors.iter().map(|c| MVal::C(c.clone())).collect(),
            _ => (0..*sizes.get(n)?).map(|i| MVal::E(n.clone(), i)).collect(),
        },
    })
}

/// Widest Int window a model-derived interpretation will tabulate.
const MAX_MODEL_WINDOW: i64 = 16;
const MAX_MODEL_CELLS: usize = 1 << 16;

/// Best-effort conversion of a `(get-model)` reply into an interpretation.
/// Universe elements `S!val!i` become domain elements; integer constants in
/// the model widen the base window so the tables cover the points the solver
/// chose. Returns `None` on anything it cannot read.
pub fn parse_model(text: &str, schema: &Schema, base_window: (i64, i64)) -> Option<Interpretation> {
    let forms = sexpr::parse_all(text).ok()?;
    let mut defs: Vec<&SExpr> = Vec::new();
    for f in &forms {
        match f.head() {
            Some("model") => defs.extend(f.as_list()?[1..].iter()),
            Some(_) => defs.push(f),
            None => defs.extend(f.as_list()?.iter()),
        }
    }
    let mut funs = HashMap::new();
    let mut sizes = BTreeMap::new();
    let (mut lo, mut hi) = base_window;
    for d in defs {
        collect_universe(d, &mut sizes);
        let items = d.as_list()?;
        match d.head() {
            Some("define-fun") if items.len() == 5 => {
                let name = items[1].as_atom()?.to_string();
                let params = items[2]
                    .as_list()?
                    .iter()
                    .map(|p| p.as_list().and_then(|p| p.first()).and_then(SExpr::as_atom).map(str::to_string))
                    .collect::<Option<Vec<_>>>()?;
                collect_ints(&items[4], &mut lo, &mut hi);
                funs.insert(
                    name,
                    ModelFun {
                        params,
                        body: items[4].clone(),
                    },
                );
            }
            Some("declare-fun") | Some("forall") => {}
            _ => return None,
        }
    }
    lo = lo.max(base_window.0 - MAX_MODEL_WINDOW);
    hi = hi.min(base_window.1 + MAX_MODEL_WINDOW);
    for s in schema.sorts() {
        if s.kind == SortKind::Uninterpreted {
            sizes.entry(s.name.clone()).or_insert(1);
        }
    }
    let model = Model { schema, funs };
    let mut interp = Interpretation {
        domain_sizes: sizes.clone(),
        int_window: (lo, hi),
        ..Interpretation::default()
    };
    for sig in schema.signatures() {
        if !model.funs.contains_key(&sig.name) {
            continue;
        }
        let domains = sig
            .arg_sorts
            .iter()
            .map(|t| arg_domain(t, schema, &sizes, (lo, hi)))
            .collect::<Option<Vec<_>>>()?;
        let total: usize = domains.iter().map(Vec::len).product();
        if total > MAX_MODEL_CELLS {
            return None;
        }
        let mut table = BTreeMap::new();
        for cell in 0..total {
            let mut rem = cell;
            let mut args = vec![MVal::B(false); domains.len()];
            for (k, d) in domains.iter().enumerate().rev() {
                args[k] = d[rem % d.len()].clone();
                rem /= d.len();
            }
            let result = model.call(&sig.name, &args, 0)?;
            let key = args
                .iter()
                .zip(&sig.arg_sorts)
                .map(|(a, t)| to_value(a, t, schema))
                .collect::<Option<Vec<_>>>()?;
            table.insert(key, to_value(&result, &sig.result_sort, schema)?);
        }
        if let Some(first) = table.values().next().cloned() {
            interp.defaults.insert(sig.name.clone(), first);
        }
        interp.tables.insert(sig.name.clone(), table);
    }
    Some(interp)
}

fn collect_ints(e: &SExpr, lo: &mut i64, hi: &mut i64) {
    match e {
        SExpr::Atom { text, .. } => {
            if let Ok(i) = text.parse::<i64>() {
                *lo = (*lo).min(i);
                *hi = (*hi).max(i);
            }
        }
        SExpr::List { items, .. } => {
            if e.head() == Some("-") && items.len() == 2 {
                if let Some(Ok(i)) = items[1].as_atom().map(str::parse::<i64>) {
                    *lo = (*lo).min(-i);
                    return;
                }
            }
            items.iter().for_each(|i| collect_ints(i, lo, hi));
        }
    }
}
