//! Typed formula AST and its canonical s-expression rendering.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Rational64;
use num_traits::{Signed, Zero};

use super::Ty;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    /// Binary or n-ary subtraction; with a single operand, negation.
    Sub,
}

/// A well-sorted term. Sorts of applications come from the schema the term
/// was checked against; variables and constructors carry theirs inline.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Bool(bool),
    Int(i64),
    /// Decimal literal; always a finite decimal since it comes from one.
    Real(Rational64),
    Ctor { name: String, sort: String },
    Var { name: String, sort: Ty },
    App { func: String, args: Vec<Term> },
    Not(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
    /// Right-associative chain `(=> a b c)` meaning `a => (b => c)`.
    Implies(Vec<Term>),
    /// Chained equality; on Bool operands this is bi-implication.
    Eq(Vec<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    Cmp(CmpOp, Box<Term>, Box<Term>),
    Arith(ArithOp, Vec<Term>),
    Quant {
        kind: Quantifier,
        vars: Vec<(String, Ty)>,
        body: Box<Term>,
    },
}

impl Term {
    pub fn not(t: Term) -> Term {
        Term::Not(Box::new(t))
    }

    fn collect_symbols<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Term::App { func, args } => {
                out.insert(func);
                for a in args {
                    a.collect_symbols(out);
                }
            }
            _ => self.children().for_each(|c| c.collect_symbols(out)),
        }
    }

    /// Direct subterms, in order.
    pub fn children(&self) -> Box<dyn Iterator<Item = &Term> + '_> {
        match self {
            Term::Bool(_) | Term::Int(_) | Term::Real(_) | Term::Ctor { .. } | Term::Var { .. } => {
                Box::new(std::iter::empty())
            }
            Term::App { args, .. }
            | Term::And(args)
            | Term::Or(args)
            | Term::Implies(args)
            | Term::Eq(args)
            | Term::Arith(_, args) => Box::new(args.iter()),
            Term::Not(a) => Box::new(std::iter::once(a.as_ref())),
            Term::Ite(c, a, b) => Box::new([c.as_ref(), a.as_ref(), b.as_ref()].into_iter()),
            Term::Cmp(_, a, b) => Box::new([a.as_ref(), b.as_ref()].into_iter()),
            Term::Quant { body, .. } => Box::new(std::iter::once(body.as_ref())),
        }
    }

    /// Numeric literals occurring anywhere in the term.
    pub fn numeric_literals(&self, out: &mut BTreeSet<Rational64>) {
        match self {
            Term::Int(i) => {
                out.insert(Rational64::from_integer(*i));
            }
            Term::Real(r) => {
                out.insert(*r);
            }
            _ => self.children().for_each(|c| c.numeric_literals(out)),
        }
    }
}

/// A closed, well-sorted formula of sort Bool.
///
/// Values are only produced by [`super::parse_formula`] (or by transforming
/// an existing formula and re-checking it), so holding one means the
/// invariants hold for the schema it was parsed against.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    pub(crate) root: Term,
}

impl Formula {
    pub fn root(&self) -> &Term {
        &self.root
    }

    /// Signature names used by the formula.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.root.collect_symbols(&mut out);
        out.into_iter().map(str::to_string).collect()
    }

    /// Canonical single-spaced s-expression text.
    pub fn render(&self) -> String {
        self.root.to_string()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

pub(crate) fn format_decimal(r: &Rational64) -> String {
    let numer = *r.numer();
    let denom = *r.denom();
    let mut scale: i64 = 1;
    let mut digits = 0usize;
    while scale % denom != 0 {
        match scale.checked_mul(10) {
            Some(s) => {
                scale = s;
                digits += 1;
            }
            // cannot happen for values parsed from decimal literals
            None => return format!("(/ {}.0 {}.0)", numer, denom),
        }
    }
    let scaled = numer.abs() as i128 * (scale / denom) as i128;
    let sign = if r.is_negative() { "-" } else { "" };
    if digits == 0 {
        return format!("{sign}{scaled}.0");
    }
    let s = format!("{:0>width$}", scaled, width = digits + 1);
    let (int_part, frac) = s.split_at(s.len() - digits);
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{int_part}.0")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, head: &str, args: &[Term]) -> fmt::Result {
    write!(f, "({head}")?;
    for a in args {
        write!(f, " {a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Bool(b) => write!(f, "{b}"),
            Term::Int(i) => write!(f, "{i}"),
            Term::Real(r) => {
                if r.is_zero() {
                    f.write_str("0.0")
                } else {
                    f.write_str(&format_decimal(r))
                }
            }
            Term::Ctor { name, .. } | Term::Var { name, .. } => f.write_str(name),
            Term::App { func, args } if args.is_empty() => f.write_str(func),
            Term::App { func, args } => write_list(f, func, args),
            Term::Not(a) => write!(f, "(not {a})"),
            Term::And(args) => write_list(f, "and", args),
            Term::Or(args) => write_list(f, "or", args),
            Term::Implies(args) => write_list(f, "=>", args),
            Term::Eq(args) => write_list(f, "=", args),
            Term::Ite(c, a, b) => write!(f, "(ite {c} {a} {b})"),
            Term::Cmp(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            Term::Arith(ArithOp::Add, args) => write_list(f, "+", args),
            Term::Arith(ArithOp::Sub, args) => write_list(f, "-", args),
            Term::Quant { kind, vars, body } => {
                let q = match kind {
                    Quantifier::Forall => "forall",
                    Quantifier::Exists => "exists",
                };
                write!(f, "({q} (")?;
                for (i, (name, sort)) in vars.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "({name} {sort})")?;
                }
                write!(f, ") {body})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals() {
        assert_eq!(format_decimal(&Rational64::new(3, 2)), "1.5");
        assert_eq!(format_decimal(&Rational64::new(30, 1)), "30.0");
        assert_eq!(format_decimal(&Rational64::new(1, 8)), "0.125");
        assert_eq!(format_decimal(&Rational64::new(-1, 4)), "-0.25");
        assert_eq!(format_decimal(&Rational64::new(1, 100)), "0.01");
    }
}
