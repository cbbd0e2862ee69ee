//! Sort-checking formula parser.

use std::collections::HashSet;

use num_rational::Rational64;

use super::formula::{ArithOp, CmpOp, Formula, Quantifier, Term};
use super::schema::Schema;
use super::sexpr::{self, is_identifier, Pos, SExpr};
use super::Ty;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormulaErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("{context} expects {expected}, got {actual}")]
    SortMismatch {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("`{symbol}` expects {expected} argument(s), got {actual}")]
    Arity {
        symbol: String,
        expected: String,
        actual: usize,
    },
    #[error("unsupported construct `{0}`")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {kind}")]
pub struct FormulaError {
    pub pos: Pos,
    pub kind: FormulaErrorKind,
}

fn err(pos: Pos, kind: FormulaErrorKind) -> FormulaError {
    FormulaError { pos, kind }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> FormulaError {
    err(pos, FormulaErrorKind::Syntax(msg.into()))
}

/// Parses `text` as a closed formula of sort Bool over `schema`.
pub fn parse_formula(text: &str, schema: &Schema) -> Result<Formula, FormulaError> {
    let expr = sexpr::parse_one(text).map_err(|e| syntax(e.pos, e.message))?;
    let mut binders = HashSet::new();
    collect_binders(&expr, &mut binders);
    let mut checker = Checker {
        schema,
        scopes: Vec::new(),
        binders,
    };
    let (root, ty) = checker.term(&expr, Some(&Ty::Bool))?;
    if ty != Ty::Bool {
        return Err(err(
            expr.pos(),
            FormulaErrorKind::SortMismatch {
                context: "formula".into(),
                expected: "Bool".into(),
                actual: ty.to_string(),
            },
        ));
    }
    Ok(Formula { root })
}

fn collect_binders(e: &SExpr, out: &mut HashSet<String>) {
    if let Some(items) = e.as_list() {
        if matches!(e.head(), Some("forall" | "exists")) {
            if let Some(vars) = items.get(1).and_then(SExpr::as_list) {
                for v in vars {
                    if let Some(name) = v.as_list().and_then(|p| p.first()).and_then(SExpr::as_atom) {
                        out.insert(name.to_string());
                    }
                }
            }
        }
        for item in items {
            collect_binders(item, out);
        }
    }
}

fn is_numeral(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn parse_decimal(s: &str) -> Option<Rational64> {
    let (int_part, frac) = s.split_once('.')?;
    if !is_numeral(int_part) || !is_numeral(frac) {
        return None;
    }
    let denom = 10i64.checked_pow(frac.len() as u32)?;
    let numer = format!("{int_part}{frac}").parse::<i64>().ok()?;
    Some(Rational64::new(numer, denom))
}

struct Checker<'s> {
    schema: &'s Schema,
    scopes: Vec<(String, Ty)>,
    binders: HashSet<String>,
}

impl Checker<'_> {
    fn term(&mut self, e: &SExpr, hint: Option<&Ty>) -> Result<(Term, Ty), FormulaError> {
        match e {
            SExpr::Atom { text, pos } => self.atom(text, *pos, hint),
            SExpr::List { items, pos } => self.list(items, *pos, hint),
        }
    }

    fn atom(&self, text: &str, pos: Pos, hint: Option<&Ty>) -> Result<(Term, Ty), FormulaError> {
        if is_numeral(text) {
            let n: i64 = text
                .parse()
                .map_err(|_| syntax(pos, format!("numeral `{text}` out of range")))?;
            return Ok(if hint == Some(&Ty::Real) {
                (Term::Real(Rational64::from_integer(n)), Ty::Real)
            } else {
                (Term::Int(n), Ty::Int)
            });
        }
        if let Some(r) = parse_decimal(text) {
            return Ok((Term::Real(r), Ty::Real));
        }
        match text {
            "true" => return Ok((Term::Bool(true), Ty::Bool)),
            "false" => return Ok((Term::Bool(false), Ty::Bool)),
            _ => {}
        }
        if !is_identifier(text) {
            return Err(syntax(pos, format!("invalid token `{text}`")));
        }
        if let Some((name, ty)) = self.scopes.iter().rev().find(|(n, _)| n == text) {
            return Ok((
                Term::Var {
                    name: name.clone(),
                    sort: ty.clone(),
                },
                ty.clone(),
            ));
        }
        if let Some(sort) = self.schema.constructor_sort(text) {
            return Ok((
                Term::Ctor {
                    name: text.to_string(),
                    sort: sort.to_string(),
                },
                Ty::Named(sort.to_string()),
            ));
        }
        if let Some(sig) = self.schema.signature(text) {
            if !sig.arg_sorts.is_empty() {
                return Err(err(
                    pos,
                    FormulaErrorKind::Arity {
                        symbol: text.to_string(),
                        expected: sig.arg_sorts.len().to_string(),
                        actual: 0,
                    },
                ));
            }
            return Ok((
                Term::App {
                    func: text.to_string(),
                    args: Vec::new(),
                },
                sig.result_sort.clone(),
            ));
        }
        if self.binders.contains(text) {
            Err(err(pos, FormulaErrorKind::UnboundVariable(text.to_string())))
        } else {
            Err(err(pos, FormulaErrorKind::UnknownSymbol(text.to_string())))
        }
    }

    fn expect(&mut self, e: &SExpr, want: &Ty, context: impl FnOnce() -> String) -> Result<Term, FormulaError> {
        let (t, ty) = self.term(e, Some(want))?;
        if &ty != want {
            return Err(err(
                e.pos(),
                FormulaErrorKind::SortMismatch {
                    context: context(),
                    expected: want.to_string(),
                    actual: ty.to_string(),
                },
            ));
        }
        Ok(t)
    }

    fn bools(&mut self, op: &str, args: &[SExpr]) -> Result<Vec<Term>, FormulaError> {
        args.iter()
            .enumerate()
            .map(|(i, a)| self.expect(a, &Ty::Bool, || format!("operand {} of {op}", i + 1)))
            .collect()
    }

    /// Checks operands that must share one sort. Integer-valued operands are
    /// re-read in Real context when another operand is Real, so numerals act
    /// as reals there (as SMT solvers accept).
    fn same_sort(
        &mut self,
        op: &str,
        args: &[SExpr],
        hint: Option<&Ty>,
        numeric: bool,
    ) -> Result<(Vec<Term>, Ty), FormulaError> {
        let mut checked = Vec::with_capacity(args.len());
        for a in args {
            checked.push(self.term(a, hint)?);
        }
        let target = if checked.iter().any(|(_, t)| *t == Ty::Real) {
            Ty::Real
        } else {
            checked[0].1.clone()
        };
        if numeric && !target.is_numeric() {
            return Err(err(
                args[0].pos(),
                FormulaErrorKind::SortMismatch {
                    context: format!("operand 1 of {op}"),
                    expected: "Int or Real".into(),
                    actual: target.to_string(),
                },
            ));
        }
        let mut out = Vec::with_capacity(args.len());
        for (i, ((t, ty), a)) in checked.into_iter().zip(args).enumerate() {
            if ty == target {
                out.push(t);
                continue;
            }
            let retry = if target == Ty::Real && ty == Ty::Int {
                self.term(a, Some(&Ty::Real)).ok().filter(|(_, t)| *t == Ty::Real)
            } else {
                None
            };
            match retry {
                Some((t, _)) => out.push(t),
                None => {
                    return Err(err(
                        a.pos(),
                        FormulaErrorKind::SortMismatch {
                            context: format!("operand {} of {op}", i + 1),
                            expected: target.to_string(),
                            actual: ty.to_string(),
                        },
                    ))
                }
            }
        }
        Ok((out, target))
    }

    fn arity(&self, op: &str, args: &[SExpr], ok: bool, expected: &str, pos: Pos) -> Result<(), FormulaError> {
        if ok {
            Ok(())
        } else {
            Err(err(
                pos,
                FormulaErrorKind::Arity {
                    symbol: op.to_string(),
                    expected: expected.to_string(),
                    actual: args.len(),
                },
            ))
        }
    }

    fn list(&mut self, items: &[SExpr], pos: Pos, hint: Option<&Ty>) -> Result<(Term, Ty), FormulaError> {
        let Some(head) = items.first() else {
            return Err(syntax(pos, "empty application"));
        };
        let Some(op) = head.as_atom() else {
            return Err(syntax(head.pos(), "expected an operator or function symbol"));
        };
        let args = &items[1..];
        match op {
            "forall" | "exists" => self.quantifier(op, args, pos),
            "not" => {
                self.arity(op, args, args.len() == 1, "1", pos)?;
                let a = self.expect(&args[0], &Ty::Bool, || "operand of not".into())?;
                Ok((Term::not(a), Ty::Bool))
            }
            "and" => Ok((Term::And(self.bools(op, args)?), Ty::Bool)),
            "or" => Ok((Term::Or(self.bools(op, args)?), Ty::Bool)),
            "=>" => {
                self.arity(op, args, args.len() >= 2, "at least 2", pos)?;
                Ok((Term::Implies(self.bools(op, args)?), Ty::Bool))
            }
            "=" => {
                self.arity(op, args, args.len() >= 2, "at least 2", pos)?;
                let (terms, _) = self.same_sort(op, args, None, false)?;
                Ok((Term::Eq(terms), Ty::Bool))
            }
            "ite" => {
                self.arity(op, args, args.len() == 3, "3", pos)?;
                let c = self.expect(&args[0], &Ty::Bool, || "condition of ite".into())?;
                let (mut branches, ty) = self.same_sort(op, &args[1..], hint, false)?;
                let b = branches.pop().unwrap();
                let a = branches.pop().unwrap();
                Ok((Term::Ite(Box::new(c), Box::new(a), Box::new(b)), ty))
            }
            "<" | "<=" | ">" | ">=" => {
                self.arity(op, args, args.len() == 2, "2", pos)?;
                let cmp = match op {
                    "<" => CmpOp::Lt,
                    "<=" => CmpOp::Le,
                    ">" => CmpOp::Gt,
                    _ => CmpOp::Ge,
                };
                let (mut terms, _) = self.same_sort(op, args, None, true)?;
                let b = terms.pop().unwrap();
                let a = terms.pop().unwrap();
                Ok((Term::Cmp(cmp, Box::new(a), Box::new(b)), Ty::Bool))
            }
            "+" => {
                self.arity(op, args, args.len() >= 2, "at least 2", pos)?;
                let (terms, ty) = self.same_sort(op, args, hint, true)?;
                Ok((Term::Arith(ArithOp::Add, terms), ty))
            }
            "-" => {
                self.arity(op, args, !args.is_empty(), "at least 1", pos)?;
                let (terms, ty) = self.same_sort(op, args, hint, true)?;
                Ok((Term::Arith(ArithOp::Sub, terms), ty))
            }
            "let" | "distinct" | "xor" | "*" | "/" | "div" | "mod" | "abs" | "to_real" | "to_int" | "!" => {
                Err(err(head.pos(), FormulaErrorKind::Unsupported(op.to_string())))
            }
            name if is_identifier(name) => self.application(name, args, head.pos()),
            other => Err(syntax(head.pos(), format!("invalid operator `{other}`"))),
        }
    }

    fn application(&mut self, name: &str, args: &[SExpr], pos: Pos) -> Result<(Term, Ty), FormulaError> {
        let Some(sig) = self.schema.signature(name) else {
            if self.scopes.iter().any(|(n, _)| n == name) || self.schema.constructor_sort(name).is_some() {
                return Err(syntax(pos, format!("`{name}` is not a function")));
            }
            return Err(err(pos, FormulaErrorKind::UnknownSymbol(name.to_string())));
        };
        if sig.arg_sorts.len() != args.len() || args.is_empty() {
            return Err(err(
                pos,
                FormulaErrorKind::Arity {
                    symbol: name.to_string(),
                    expected: sig.arg_sorts.len().to_string(),
                    actual: args.len(),
                },
            ));
        }
        let arg_sorts = sig.arg_sorts.clone();
        let result = sig.result_sort.clone();
        let mut terms = Vec::with_capacity(args.len());
        for (i, (a, want)) in args.iter().zip(&arg_sorts).enumerate() {
            terms.push(self.expect(a, want, || format!("argument {} of {name}", i + 1))?);
        }
        Ok((
            Term::App {
                func: name.to_string(),
                args: terms,
            },
            result,
        ))
    }

    fn quantifier(&mut self, op: &str, args: &[SExpr], pos: Pos) -> Result<(Term, Ty), FormulaError> {
        self.arity(op, args, args.len() == 2, "2", pos)?;
        let binders = args[0]
            .as_list()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| syntax(args[0].pos(), "expected a non-empty list of sorted variables"))?;
        let mut vars: Vec<(String, Ty)> = Vec::new();
        for b in binders {
            let pair = b
                .as_list()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| syntax(b.pos(), "expected (name Sort)"))?;
            let name = pair[0]
                .as_atom()
                .filter(|n| is_identifier(n))
                .ok_or_else(|| syntax(pair[0].pos(), "invalid variable name"))?;
            if vars.iter().any(|(n, _)| n == name) {
                return Err(syntax(pair[0].pos(), format!("variable `{name}` bound twice")));
            }
            let sort_name = pair[1]
                .as_atom()
                .ok_or_else(|| syntax(pair[1].pos(), "expected a sort name"))?;
            let ty = self
                .schema
                .ty(sort_name)
                .ok_or_else(|| err(pair[1].pos(), FormulaErrorKind::UnknownSymbol(sort_name.to_string())))?;
            vars.push((name.to_string(), ty));
        }
        let depth = self.scopes.len();
        self.scopes.extend(vars.iter().cloned());
        let body = self.expect(&args[1], &Ty::Bool, || format!("body of {op}"));
        self.scopes.truncate(depth);
        let kind = if op == "forall" {
            Quantifier::Forall
        } else {
            Quantifier::Exists
        };
        Ok((
            Term::Quant {
                kind,
                vars,
                body: Box::new(body?),
            },
            Ty::Bool,
        ))
    }
}
