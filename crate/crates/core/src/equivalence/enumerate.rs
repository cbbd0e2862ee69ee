//! Finite-model enumeration: a bounded, solver-independent equivalence oracle.
//!
//! Uninterpreted sorts get domains of size 1..=max_domain_size, Int and Real
//! quantifiers range over the integer window, and every free function symbol
//! ranges over all total tables on its bounded argument space. Numeric
//! results range over a pool made of the window plus every numeric literal of
//! either formula and its two integer neighbours, so threshold comparisons can
//! be separated. Arguments that fall outside the bounded space (for example
//! `t + 1` at the top of the window) read the table's default cell.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::smt::{ArithOp, CmpOp, Formula, Quantifier, Schema, SortKind, Term, Ty};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerationBudget {
    pub max_domain_size: usize,
    /// Inclusive integer range used for Int (and Real) quantification.
    pub int_window: (i64, i64),
    pub max_interpretations: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_domain_size: 2,
            int_window: (0, 1),
            max_interpretations: 10_000_000,
        }
    }
}

impl EnumerationBudget {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_domain_size == 0 {
            return Err("max_domain_size must be positive".into());
        }
        if self.int_window.0 > self.int_window.1 {
            return Err(format!("int_window {:?} is empty", self.int_window));
        }
        if self.max_interpretations == 0 {
            return Err("max_interpretations must be positive".into());
        }
        Ok(())
    }
}

/// A value in an interpretation, tagged enough to print and re-read it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(Rational64),
    /// Element `index` of an uninterpreted sort's finite domain.
    Elem { sort: String, index: usize },
    /// Constructor of an enumerated sort.
    Ctor(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) if r.is_integer() => write!(f, "{}.0", r.numer()),
            Value::Real(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Value::Elem { sort, index } => write!(f, "{sort}!{index}"),
            Value::Ctor(c) => f.write_str(c),
        }
    }
}

/// A finite model: bounded domains plus a table per function symbol.
/// Argument tuples missing from a table read the symbol's default value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Interpretation {
    pub domain_sizes: BTreeMap<String, usize>,
    pub int_window: (i64, i64),
    pub tables: BTreeMap<String, BTreeMap<Vec<Value>, Value>>,
    pub defaults: BTreeMap<String, Value>,
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (sort, n) in &self.domain_sizes {
            writeln!(f, "|{sort}| = {n}")?;
        }
        let names: BTreeSet<&String> = self.tables.keys().chain(self.defaults.keys()).collect();
        for name in names {
            if let Some(table) = self.tables.get(name) {
                for (args, value) in table {
                    if args.is_empty() {
                        writeln!(f, "{name} = {value}")?;
                    } else {
                        let args: Vec<String> = args.iter().map(Value::to_string).collect();
                        writeln!(f, "{name}({}) = {value}", args.join(", "))?;
                    }
                }
            }
            if let Some(d) = self.defaults.get(name) {
                let has_args = self.tables.get(name).is_some_and(|t| t.keys().any(|k| !k.is_empty()));
                if has_args || !self.tables.contains_key(name) {
                    writeln!(f, "{name}(otherwise) = {d}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("symbol `{0}` is not declared in the schema")]
    UnknownSymbol(String),
    #[error("interpretation has no domain for sort `{0}`")]
    MissingDomain(String),
    #[error("interpretation has no table for `{0}`")]
    MissingTable(String),
    #[error("value {value} does not belong to sort {sort}")]
    BadValue { value: String, sort: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum V {
    B(bool),
    I(i64),
    R(Rational64),
    E(u32),
}

impl V {
    fn truth(self) -> bool {
        matches!(self, V::B(true))
    }

    fn as_rational(self) -> Rational64 {
        match self {
            V::I(i) => Rational64::from_integer(i),
            V::R(r) => r,
            _ => Rational64::from_integer(0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ArgIx {
    Finite(u32),
    Bool,
    Window { lo: i64, hi: i64, real: bool },
}

impl ArgIx {
    fn radix(self) -> usize {
        match self {
            ArgIx::Finite(n) => n as usize,
            ArgIx::Bool => 2,
            ArgIx::Window { lo, hi, .. } => (hi - lo + 1) as usize,
        }
    }

    fn index(self, v: V) -> Option<usize> {
        match (self, v) {
            (ArgIx::Finite(n), V::E(i)) if i < n => Some(i as usize),
            (ArgIx::Bool, V::B(b)) => Some(b as usize),
            (ArgIx::Window { lo, hi, .. }, V::I(i)) if (lo..=hi).contains(&i) => Some((i - lo) as usize),
            (ArgIx::Window { lo, hi, .. }, V::R(r)) if r.is_integer() && (lo..=hi).contains(r.numer()) => {
                Some((r.numer() - lo) as usize)
            }
            _ => None,
        }
    }

    fn decode(self, i: usize) -> V {
        match self {
            ArgIx::Finite(_) => V::E(i as u32),
            ArgIx::Bool => V::B(i == 1),
            ArgIx::Window { lo, real: false, .. } => V::I(lo + i as i64),
            ArgIx::Window { lo, real: true, .. } => V::R(Rational64::from_integer(lo + i as i64)),
        }
    }
}

struct SymLayout {
    name: String,
    arg_tys: Vec<Ty>,
    args: Vec<ArgIx>,
    result_ty: Ty,
    offset: usize,
    cells: usize,
    results: Vec<V>,
}

enum Node {
    Const(V),
    Var(usize),
    App(usize, Vec<Node>),
    Not(Box<Node>),
    And(Vec<Node>),
    Or(Vec<Node>),
    Implies(Vec<Node>),
    Eq(Vec<Node>),
    Ite(Box<Node>, Box<Node>, Box<Node>),
    Cmp(CmpOp, Box<Node>, Box<Node>),
    Arith(ArithOp, Vec<Node>),
    Quant {
        forall: bool,
        vars: Vec<(usize, usize)>,
        body: Box<Node>,
    },
}

/// How domains and result ranges are chosen while compiling.
struct Space<'a> {
    schema: &'a Schema,
    sizes: BTreeMap<String, usize>,
    window: (i64, i64),
    int_pool: Vec<i64>,
    real_pool: Vec<Rational64>,
}

impl Space<'_> {
    fn finite_size(&self, ty: &Ty) -> Result<u32, EvalError> {
        match self.schema.kind_of(ty) {
            Some(SortKind::Enumerated(ctors)) => Ok(ctors.len() as u32),
            Some(SortKind::Uninterpreted) => {
                let name = ty.to_string();
                self.sizes
                    .get(&name)
                    .map(|n| *n as u32)
                    .ok_or(EvalError::MissingDomain(name))
            }
            _ => Err(EvalError::MissingDomain(ty.to_string())),
        }
    }

    fn arg_ix(&self, ty: &Ty) -> Result<ArgIx, EvalError> {
        let (lo, hi) = self.window;
        Ok(match ty {
            Ty::Bool => ArgIx::Bool,
            Ty::Int => ArgIx::Window { lo, hi, real: false },
            Ty::Real => ArgIx::Window { lo, hi, real: true },
            Ty::Named(_) => ArgIx::Finite(self.finite_size(ty)?),
        })
    }

    fn quant_domain(&self, ty: &Ty) -> Result<Vec<V>, EvalError> {
        let ix = self.arg_ix(ty)?;
        Ok((0..ix.radix()).map(|i| ix.decode(i)).collect())
    }

    fn result_range(&self, ty: &Ty) -> Result<Vec<V>, EvalError> {
        Ok(match ty {
            Ty::Int => self.int_pool.iter().map(|i| V::I(*i)).collect(),
            Ty::Real => self.real_pool.iter().map(|r| V::R(*r)).collect(),
            _ => self.quant_domain(ty)?,
        })
    }
}

struct Compiled {
    syms: Vec<SymLayout>,
    domains: Vec<Vec<V>>,
    slots: usize,
    roots: Vec<Node>,
}

struct Compiler<'a, 'b> {
    space: &'b Space<'a>,
    syms: Vec<SymLayout>,
    sym_index: BTreeMap<String, usize>,
    domains: Vec<Vec<V>>,
    scopes: Vec<(String, usize)>,
    slots: usize,
    cells: usize,
}

impl<'a, 'b> Compiler<'a, 'b> {
    fn new(space: &'b Space<'a>) -> Self {
        Compiler {
            space,
            syms: Vec::new(),
            sym_index: BTreeMap::new(),
            domains: Vec::new(),
            scopes: Vec::new(),
            slots: 0,
            cells: 0,
        }
    }

    fn symbol(&mut self, name: &str) -> Result<usize, EvalError> {
        if let Some(i) = self.sym_index.get(name) {
            return Ok(*i);
        }
        let sig = self
            .space
            .schema
            .signature(name)
            .ok_or_else(|| EvalError::UnknownSymbol(name.to_string()))?;
        let args = sig
            .arg_sorts
            .iter()
            .map(|t| self.space.arg_ix(t))
            .collect::<Result<Vec<_>, _>>()?;
        let cells = args.iter().map(|a| a.radix()).product::<usize>();
        let layout = SymLayout {
            name: name.to_string(),
            arg_tys: sig.arg_sorts.clone(),
            args,
            result_ty: sig.result_sort.clone(),
            offset: self.cells,
            cells,
            results: self.space.result_range(&sig.result_sort)?,
        };
        self.cells += cells;
        self.syms.push(layout);
        self.sym_index.insert(name.to_string(), self.syms.len() - 1);
        Ok(self.syms.len() - 1)
    }

    fn ctor_index(&self, name: &str, sort: &str) -> Result<u32, EvalError> {
        match self.space.schema.sort(sort).map(|s| &s.kind) {
            Some(SortKind::Enumerated(ctors)) => ctors
                .iter()
                .position(|c| c == name)
                .map(|p| p as u32)
                .ok_or_else(|| EvalError::UnknownSymbol(name.to_string())),
            _ => Err(EvalError::UnknownSymbol(name.to_string())),
        }
    }

    fn all(&mut self, ts: &[Term]) -> Result<Vec<Node>, EvalError> {
        ts.iter().map(|t| self.node(t)).collect()
    }

    fn node(&mut self, t: &Term) -> Result<Node, EvalError> {
        Ok(match t {
            Term::Bool(b) => Node::Const(V::B(*b)),
            Term::Int(i) => Node::Const(V::I(*i)),
            Term::Real(r) => Node::Const(V::R(*r)),
            Term::Ctor { name, sort } => Node::Const(V::E(self.ctor_index(name, sort)?)),
            Term::Var { name, .. } => {
                let slot = self
                    .scopes
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| EvalError::UnknownSymbol(name.clone()))?;
                Node::Var(slot)
            }
            Term::App { func, args } => {
                let sym = self.symbol(func)?;
                Node::App(sym, self.all(args)?)
            }
            Term::Not(a) => Node::Not(Box::new(self.node(a)?)),
            Term::And(xs) => Node::And(self.all(xs)?),
            Term::Or(xs) => Node::Or(self.all(xs)?),
            Term::Implies(xs) => Node::Implies(self.all(xs)?),
            Term::Eq(xs) => Node::Eq(self.all(xs)?),
            Term::Ite(c, a, b) => Node::Ite(
                Box::new(self.node(c)?),
                Box::new(self.node(a)?),
                Box::new(self.node(b)?),
            ),
            Term::Cmp(op, a, b) => Node::Cmp(*op, Box::new(self.node(a)?), Box::new(self.node(b)?)),
            Term::Arith(op, xs) => Node::Arith(*op, self.all(xs)?),
            Term::Quant { kind, vars, body } => {
                let depth = self.scopes.len();
                let mut bound = Vec::with_capacity(vars.len());
                for (name, ty) in vars {
                    let domain = self.space.quant_domain(ty)?;
                    self.domains.push(domain);
                    let slot = self.slots;
                    self.slots += 1;
                    self.scopes.push((name.clone(), slot));
                    bound.push((slot, self.domains.len() - 1));
                }
                let body = self.node(body);
                self.scopes.truncate(depth);
                Node::Quant {
                    forall: *kind == Quantifier::Forall,
                    vars: bound,
                    body: Box::new(body?),
                }
            }
        })
    }

    fn finish(self, roots: Vec<Node>) -> Compiled {
        Compiled {
            syms: self.syms,
            domains: self.domains,
            slots: self.slots,
            roots,
        }
    }
}

fn compile(space: &Space<'_>, formulas: &[&Formula]) -> Result<Compiled, EvalError> {
    let mut c = Compiler::new(space);
    let roots = formulas
        .iter()
        .map(|f| c.node(f.root()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(c.finish(roots))
}

struct Eval<'a> {
    syms: &'a [SymLayout],
    domains: &'a [Vec<V>],
    env: Vec<V>,
}

impl Eval<'_> {
    fn eval(&mut self, n: &Node, cells: &[u32]) -> V {
        match n {
            Node::Const(v) => *v,
            Node::Var(s) => self.env[*s],
            Node::App(sym, args) => {
                let syms = self.syms;
                let layout = &syms[*sym];
                let mut index = 0usize;
                let mut inside = true;
                for (a, ix) in args.iter().zip(&layout.args) {
                    let v = self.eval(a, cells);
                    match ix.index(v) {
                        Some(i) => index = index * ix.radix() + i,
                        None => inside = false,
                    }
                }
                if inside {
                    layout.results[cells[layout.offset + index] as usize]
                } else {
                    layout.results[0]
                }
            }
            Node::Not(a) => V::B(!self.eval(a, cells).truth()),
            Node::And(xs) => V::B(xs.iter().all(|x| self.eval(x, cells).truth())),
            Node::Or(xs) => V::B(xs.iter().any(|x| self.eval(x, cells).truth())),
            Node::Implies(xs) => {
                // right-associative: a => (b => c) is false only when all
                // premises hold and the last operand fails
                let (last, premises) = xs.split_last().unwrap();
                if premises.iter().all(|p| self.eval(p, cells).truth()) {
                    V::B(self.eval(last, cells).truth())
                } else {
                    V::B(true)
                }
            }
            Node::Eq(xs) => {
                let first = self.eval(&xs[0], cells);
                V::B(xs[1..].iter().all(|x| values_equal(self.eval(x, cells), first)))
            }
            Node::Ite(c, a, b) => {
                if self.eval(c, cells).truth() {
                    self.eval(a, cells)
                } else {
                    self.eval(b, cells)
                }
            }
            Node::Cmp(op, a, b) => {
                let a = self.eval(a, cells);
                let b = self.eval(b, cells);
                let ord = match (a, b) {
                    (V::I(x), V::I(y)) => x.cmp(&y),
                    _ => a.as_rational().cmp(&b.as_rational()),
                };
                V::B(match op {
                    CmpOp::Lt => ord.is_lt(),
                    CmpOp::Le => ord.is_le(),
                    CmpOp::Gt => ord.is_gt(),
                    CmpOp::Ge => ord.is_ge(),
                })
            }
            Node::Arith(op, xs) => {
                let vals: Vec<V> = xs.iter().map(|x| self.eval(x, cells)).collect();
                arith(*op, &vals)
            }
            Node::Quant { forall, vars, body } => V::B(self.quant(*forall, vars, body, cells)),
        }
    }

    fn quant(&mut self, forall: bool, vars: &[(usize, usize)], body: &Node, cells: &[u32]) -> bool {
        let Some(((slot, dom), rest)) = vars.split_first() else {
            return self.eval(body, cells).truth();
        };
        for i in 0..self.domains[*dom].len() {
            self.env[*slot] = self.domains[*dom][i];
            let r = self.quant(forall, rest, body, cells);
            if r != forall {
                return r;
            }
        }
        forall
    }
}

fn values_equal(a: V, b: V) -> bool {
    match (a, b) {
        (V::I(_), V::R(_)) | (V::R(_), V::I(_)) => a.as_rational() == b.as_rational(),
        _ => a == b,
    }
}

fn arith(op: ArithOp, vals: &[V]) -> V {
    let real = vals.iter().any(|v| matches!(v, V::R(_)));
    if real {
        let rs: Vec<Rational64> = vals.iter().map(|v| v.as_rational()).collect();
        V::R(match (op, rs.as_slice()) {
            (ArithOp::Sub, [x]) => -*x,
            (ArithOp::Sub, [x, rest @ ..]) => rest.iter().fold(*x, |acc, r| acc - r),
            (_, xs) => xs.iter().fold(Rational64::from_integer(0), |acc, r| acc + r),
        })
    } else {
        let is: Vec<i64> = vals
            .iter()
            .map(|v| match v {
                V::I(i) => *i,
                _ => 0,
            })
            .collect();
        V::I(match (op, is.as_slice()) {
            (ArithOp::Sub, [x]) => x.wrapping_neg(),
            (ArithOp::Sub, [x, rest @ ..]) => rest.iter().fold(*x, |acc, r| acc.wrapping_sub(*r)),
            (_, xs) => xs.iter().fold(0i64, |acc, r| acc.wrapping_add(*r)),
        })
    }
}

fn to_value(v: V, ty: &Ty, schema: &Schema) -> Value {
    match (v, ty) {
        (V::B(b), _) => Value::Bool(b),
        (V::I(i), _) => Value::Int(i),
        (V::R(r), _) => Value::Real(r),
        (V::E(i), Ty::Named(sort)) => match schema.sort(sort).map(|s| &s.kind) {
            Some(SortKind::Enumerated(ctors)) => Value::Ctor(ctors[i as usize].clone()),
            _ => Value::Elem {
                sort: sort.clone(),
                index: i as usize,
            },
        },
        (V::E(i), _) => Value::Int(i as i64),
    }
}

fn from_value(v: &Value, ty: &Ty, schema: &Schema) -> Result<V, EvalError> {
    let bad = || EvalError::BadValue {
        value: v.to_string(),
        sort: ty.to_string(),
    };
    match (v, ty) {
        (Value::Bool(b), Ty::Bool) => Ok(V::B(*b)),
        (Value::Int(i), Ty::Int) => Ok(V::I(*i)),
        (Value::Int(i), Ty::Real) => Ok(V::R(Rational64::from_integer(*i))),
        (Value::Real(r), Ty::Real) => Ok(V::R(*r)),
        (Value::Elem { sort, index }, Ty::Named(s)) if sort == s => Ok(V::E(*index as u32)),
        (Value::Ctor(c), Ty::Named(s)) => match schema.sort(s).map(|x| &x.kind) {
            Some(SortKind::Enumerated(ctors)) => ctors.iter().position(|x| x == c).map(|p| V::E(p as u32)).ok_or_else(bad),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

fn extract(compiled: &Compiled, cells: &[u32], schema: &Schema, space: &Space<'_>) -> Interpretation {
    let mut interp = Interpretation {
        domain_sizes: space.sizes.clone(),
        int_window: space.window,
        ..Interpretation::default()
    };
    for sym in &compiled.syms {
        let mut table = BTreeMap::new();
        for cell in 0..sym.cells {
            let mut rem = cell;
            let mut args = vec![Value::Bool(false); sym.args.len()];
            for (k, ix) in sym.args.iter().enumerate().rev() {
                let r = ix.radix();
                args[k] = to_value(ix.decode(rem % r), &sym.arg_tys[k], schema);
                rem /= r;
            }
            let result = sym.results[cells[sym.offset + cell] as usize];
            table.insert(args, to_value(result, &sym.result_ty, schema));
        }
        interp.tables.insert(sym.name.clone(), table);
        interp
            .defaults
            .insert(sym.name.clone(), to_value(sym.results[0], &sym.result_ty, schema));
    }
    interp
}

/// Evaluates a closed formula under an interpretation. Int and Real
/// quantifiers range over the interpretation's integer window.
pub fn evaluate(formula: &Formula, schema: &Schema, interp: &Interpretation) -> Result<bool, EvalError> {
    let mut results = evaluate_all(&[formula], schema, interp)?;
    Ok(results.pop().unwrap())
}

pub(crate) fn evaluate_all(
    formulas: &[&Formula],
    schema: &Schema,
    interp: &Interpretation,
) -> Result<Vec<bool>, EvalError> {
    let space = Space {
        schema,
        sizes: interp.domain_sizes.clone(),
        window: interp.int_window,
        int_pool: Vec::new(),
        real_pool: Vec::new(),
    };
    let mut compiled = compile(&space, formulas)?;
    let mut cells = Vec::new();
    for sym in &mut compiled.syms {
        let table = interp.tables.get(&sym.name);
        let default = match interp.defaults.get(&sym.name) {
            Some(d) => Some(d),
            None => table.and_then(|t| t.values().next()),
        }
        .ok_or_else(|| EvalError::MissingTable(sym.name.clone()))?;
        let mut results = vec![from_value(default, &sym.result_ty, schema)?];
        let mut sym_cells = vec![0u32; sym.cells];
        for (args, value) in table.into_iter().flatten() {
            if args.len() != sym.args.len() {
                return Err(EvalError::MissingTable(sym.name.clone()));
            }
            let mut index = 0usize;
            let mut inside = true;
            for ((a, ix), ty) in args.iter().zip(&sym.args).zip(&sym.arg_tys) {
                match ix.index(from_value(a, ty, schema)?) {
                    Some(i) => index = index * ix.radix() + i,
                    None => inside = false,
                }
            }
            if !inside {
                continue;
            }
            let v = from_value(value, &sym.result_ty, schema)?;
            let pos = match results.iter().position(|r| *r == v) {
                Some(p) => p,
                None => {
                    results.push(v);
                    results.len() - 1
                }
            };
            sym_cells[index] = pos as u32;
        }
        sym.results = results;
        cells.extend(sym_cells);
    }
    let mut ev = Eval {
        syms: &compiled.syms,
        domains: &compiled.domains,
        env: vec![V::B(false); compiled.slots],
    };
    Ok(compiled.roots.iter().map(|r| ev.eval(r, &cells).truth()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnumerationOutcome {
    Equivalent { checked: u64 },
    Counterexample { interpretation: Interpretation, checked: u64 },
    BudgetExceeded { required: u128, checked: u64 },
}

fn collect_sorts(t: &Term, schema: &Schema, out: &mut BTreeSet<String>) {
    if let Term::Quant { vars, .. } = t {
        for (_, ty) in vars {
            if let (Ty::Named(n), Some(SortKind::Uninterpreted)) = (ty, schema.kind_of(ty)) {
                out.insert(n.clone());
            }
        }
    }
    t.children().for_each(|c| collect_sorts(c, schema, out));
}

fn size_combinations(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..n {
        all = all
            .into_iter()
            .flat_map(|prefix| {
                (1..=max).map(move |k| {
                    let mut p = prefix.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    all.sort_by(|a, b| a.iter().sum::<usize>().cmp(&b.iter().sum::<usize>()).then_with(|| a.cmp(b)));
    all
}

/// Searches all bounded interpretations, smallest domains first, for one
/// under which `phi` and `psi` disagree.
pub fn enumerate(
    phi: &Formula,
    psi: &Formula,
    schema: &Schema,
    budget: &EnumerationBudget,
) -> Result<EnumerationOutcome, EvalError> {
    if phi == psi {
        return Ok(EnumerationOutcome::Equivalent { checked: 0 });
    }
    let mut sorts = BTreeSet::new();
    let symbols: BTreeSet<String> = phi.free_symbols().into_iter().chain(psi.free_symbols()).collect();
    for name in &symbols {
        let sig = schema
            .signature(name)
            .ok_or_else(|| EvalError::UnknownSymbol(name.clone()))?;
        for ty in sig.arg_sorts.iter().chain(std::iter::once(&sig.result_sort)) {
            if let (Ty::Named(n), Some(SortKind::Uninterpreted)) = (ty, schema.kind_of(ty)) {
                sorts.insert(n.clone());
            }
        }
    }
    collect_sorts(phi.root(), schema, &mut sorts);
    collect_sorts(psi.root(), schema, &mut sorts);
    let sorts: Vec<String> = sorts.into_iter().collect();

    let (lo, hi) = budget.int_window;
    let mut literals = BTreeSet::new();
    phi.root().numeric_literals(&mut literals);
    psi.root().numeric_literals(&mut literals);
    let one = Rational64::from_integer(1);
    let mut real_pool: BTreeSet<Rational64> = (lo..=hi).map(Rational64::from_integer).collect();
    let mut int_pool: BTreeSet<i64> = (lo..=hi).collect();
    for l in &literals {
        real_pool.extend([*l - one, *l, *l + one]);
        if l.is_integer() {
            let i = *l.numer();
            int_pool.extend([i.saturating_sub(1), i, i.saturating_add(1)]);
        }
    }

    let mut checked: u64 = 0;
    for combo in size_combinations(sorts.len(), budget.max_domain_size) {
        let space = Space {
            schema,
            sizes: sorts.iter().cloned().zip(combo.iter().copied()).collect(),
            window: budget.int_window,
            int_pool: int_pool.iter().copied().collect(),
            real_pool: real_pool.iter().copied().collect(),
        };
        let compiled = compile(&space, &[phi, psi])?;
        let mut radix = Vec::new();
        let mut count: u128 = 1;
        for sym in &compiled.syms {
            for _ in 0..sym.cells {
                radix.push(sym.results.len() as u32);
                count = count.saturating_mul(sym.results.len() as u128);
            }
        }
        let required = count.saturating_add(checked as u128);
        if required > budget.max_interpretations as u128 {
            return Ok(EnumerationOutcome::BudgetExceeded { required, checked });
        }
        let mut cells = vec![0u32; radix.len()];
        let mut ev = Eval {
            syms: &compiled.syms,
            domains: &compiled.domains,
            env: vec![V::B(false); compiled.slots],
        };
        loop {
            let a = ev.eval(&compiled.roots[0], &cells).truth();
            let b = ev.eval(&compiled.roots[1], &cells).truth();
            checked += 1;
            if a != b {
                let interpretation = extract(&compiled, &cells, schema, &space);
                return Ok(EnumerationOutcome::Counterexample { interpretation, checked });
            }
            let mut i = 0;
            loop {
                if i == cells.len() {
                    break;
                }
                cells[i] += 1;
                if cells[i] < radix[i] {
                    break;
                }
                cells[i] = 0;
                i += 1;
            }
            if i == cells.len() {
                break;
            }
        }
    }
    Ok(EnumerationOutcome::Equivalent { checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smt::parse_formula;

    fn schema() -> Schema {
        Schema::load(
            "(declare-sort V 0)\n(declare-fun p () Bool)\n(declare-fun q (V) Bool)\n(declare-fun speed (V Int) Real)\n(declare-datatypes ((K 0)) (((A) (B))))\n(declare-fun kind (V) K)",
        )
        .unwrap()
    }

    fn f(s: &Schema, t: &str) -> Formula {
        parse_formula(t, s).unwrap()
    }

    #[test]
    fn combos_smallest_first() {
        assert_eq!(size_combinations(2, 2), vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        assert_eq!(size_combinations(0, 2), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn nullary_negation() {
        let s = schema();
        let out = enumerate(&f(&s, "p"), &f(&s, "(not p)"), &s, &EnumerationBudget::default()).unwrap();
        match out {
            EnumerationOutcome::Counterexample { interpretation, .. } => {
                assert_eq!(interpretation.tables["p"][&vec![]], Value::Bool(false));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quantifier_duality() {
        let s = schema();
        let a = f(&s, "(not (forall ((v V)) (q v)))");
        let b = f(&s, "(exists ((v V)) (not (q v)))");
        let out = enumerate(&a, &b, &s, &EnumerationBudget::default()).unwrap();
        assert!(matches!(out, EnumerationOutcome::Equivalent { .. }));
    }

    #[test]
    fn needs_two_elements() {
        let s = schema();
        let a = f(&s, "(forall ((v V) (w V)) (= (kind v) (kind w)))");
        let b = f(&s, "true");
        match enumerate(&a, &b, &s, &EnumerationBudget::default()).unwrap() {
            EnumerationOutcome::Counterexample { interpretation, .. } => {
                assert_eq!(interpretation.domain_sizes["V"], 2);
                assert!(!evaluate(&a, &s, &interpretation).unwrap());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thresholds_separated_by_pool() {
        let s = schema();
        let a = f(&s, "(forall ((v V) (t Int)) (> (speed v t) 30.0))");
        let b = f(&s, "(forall ((v V) (t Int)) (>= (speed v t) 30.0))");
        let out = enumerate(&a, &b, &s, &EnumerationBudget::default()).unwrap();
        assert!(matches!(out, EnumerationOutcome::Counterexample { .. }));
    }

    #[test]
    fn budget_exceeded_reports_count() {
        let s = schema();
        let a = f(&s, "(forall ((v V) (t Int)) (> (speed v t) 30.0))");
        let b = f(&s, "(forall ((v V) (t Int)) (> (speed v t) 31.0))");
        let budget = EnumerationBudget {
            max_interpretations: 10,
            ..EnumerationBudget::default()
        };
        match enumerate(&a, &b, &s, &budget).unwrap() {
            EnumerationOutcome::BudgetExceeded { required, .. } => assert!(required > 10),
            other => panic!("{other:?}"),
        }
    }
}
