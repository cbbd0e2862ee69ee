//! The SMT-LIB subset shared by every component: schemas, formulas and the
//! s-expression reader underneath them.

use std::fmt;

pub mod formula;
mod parse;
pub mod schema;
pub mod sexpr;

pub use formula::{ArithOp, CmpOp, Formula, Quantifier, Term};
pub use parse::{parse_formula, FormulaError, FormulaErrorKind};
pub use schema::{Schema, SchemaError, Signature, Sort, SortKind};
pub use sexpr::{Pos, SExpr, SyntaxError};

/// A sort reference: a builtin or a name declared by the schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Bool,
    Int,
    Real,
    Named(String),
}

impl Ty {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Real)
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => f.write_str("Bool"),
            Ty::Int => f.write_str("Int"),
            Ty::Real => f.write_str("Real"),
            Ty::Named(n) => f.write_str(n),
        }
    }
}
