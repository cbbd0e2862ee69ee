//! Domain schemas: the shared vocabulary of sorts and function signatures.
//!
//! A schema file is a sequence of `declare-sort`, `declare-datatypes`
//! (enumerations only), `declare-fun` and `declare-const` forms. Comment
//! lines of the form `; TAG: text` (for example `; DURATIVE: ...`) attach an
//! annotation to the declarations that follow them, until the next blank line
//! or non-tag comment.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use indexmap::IndexMap;
use regex::Regex;

use super::sexpr::{self, is_identifier, Pos, SExpr, SyntaxError};
use super::Ty;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SortKind {
    Uninterpreted,
    /// Enumerated datatype with nullary constructors, in declaration order.
    Enumerated(Vec<String>),
    Int,
    Real,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sort {
    pub name: String,
    pub kind: SortKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub name: String,
    pub arg_sorts: Vec<Ty>,
    pub result_sort: Ty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Decl {
    Sort(String),
    Fun(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed s-expression at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: duplicate name `{name}`")]
    DuplicateName { name: String, pos: Pos },
    #[error("{pos}: unknown sort `{name}`")]
    UnknownSortReference { name: String, pos: Pos },
    #[error("{pos}: invalid identifier `{name}`")]
    InvalidIdentifier { name: String, pos: Pos },
    #[error("{pos}: {message}")]
    Malformed { message: String, pos: Pos },
}

const RESERVED: &[&str] = &[
    "forall", "exists", "and", "or", "not", "ite", "let", "true", "false", "Int", "Real", "Bool",
    "distinct", "xor",
];

/// A validated domain schema.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    sorts: IndexMap<String, Sort>,
    signatures: IndexMap<String, Signature>,
    constructors: HashMap<String, String>,
    order: Vec<Decl>,
    annotations: BTreeMap<String, String>,
    source_text: String,
}

/// Equality ignores the raw source text: two schemas are equal when they
/// declare the same vocabulary in the same order with the same annotations.
impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.sorts == other.sorts
            && self.signatures == other.signatures
            && self.annotations == other.annotations
    }
}

impl Eq for Schema {}

fn builtin(name: &str) -> Option<Ty> {
    match name {
        "Bool" => Some(Ty::Bool),
        "Int" => Some(Ty::Int),
        "Real" => Some(Ty::Real),
        _ => None,
    }
}

fn malformed(pos: Pos, message: impl Into<String>) -> SchemaError {
    SchemaError::Malformed {
        message: message.into(),
        pos,
    }
}

impl Schema {
    pub fn empty() -> Self {
        Schema::default()
    }

    /// Parses and validates schema text.
    pub fn load(text: &str) -> Result<Schema, SchemaError> {
        let forms = sexpr::parse_all(text)?;
        let tags = annotation_tags(text);
        let mut schema = Schema {
            source_text: text.to_string(),
            ..Schema::default()
        };
        for form in &forms {
            schema.declare(form, &tags)?;
        }
        Ok(schema)
    }

    fn declare(&mut self, form: &SExpr, tags: &HashMap<usize, String>) -> Result<(), SchemaError> {
        let pos = form.pos();
        let items = form
            .as_list()
            .ok_or_else(|| malformed(pos, "expected a declaration form"))?;
        match form.head() {
            Some("declare-sort") => {
                let name = self.fresh_name(items.get(1), pos)?;
                match items.get(2).and_then(SExpr::as_atom) {
                    None if items.len() == 2 => {}
                    Some("0") if items.len() == 3 => {}
                    _ => return Err(malformed(pos, "only sorts of arity 0 are supported")),
                }
                self.sorts.insert(
                    name.clone(),
                    Sort {
                        name: name.clone(),
                        kind: SortKind::Uninterpreted,
                    },
                );
                self.order.push(Decl::Sort(name));
            }
            Some("declare-datatypes") => self.declare_datatypes(items, pos)?,
            Some("declare-fun") => {
                if items.len() != 4 {
                    return Err(malformed(pos, "declare-fun expects a name, argument sorts and a result sort"));
                }
                let name = self.fresh_name(items.get(1), pos)?;
                let args = items[2]
                    .as_list()
                    .ok_or_else(|| malformed(items[2].pos(), "expected a list of argument sorts"))?;
                let arg_sorts = args
                    .iter()
                    .map(|s| self.resolve_sort(s))
                    .collect::<Result<Vec<_>, _>>()?;
                let result_sort = self.resolve_sort(&items[3])?;
                self.add_fun(name, arg_sorts, result_sort, tags.get(&pos.line));
            }
            Some("declare-const") => {
                if items.len() != 3 {
                    return Err(malformed(pos, "declare-const expects a name and a sort"));
                }
                let name = self.fresh_name(items.get(1), pos)?;
                let result_sort = self.resolve_sort(&items[2])?;
                self.add_fun(name, Vec::new(), result_sort, tags.get(&pos.line));
            }
            Some(other) => return Err(malformed(pos, format!("unsupported schema form `{other}`"))),
            None => return Err(malformed(pos, "expected a declaration form")),
        }
        Ok(())
    }

    fn add_fun(&mut self, name: String, arg_sorts: Vec<Ty>, result_sort: Ty, tag: Option<&String>) {
        if let Some(tag) = tag {
            self.annotations.insert(name.clone(), tag.clone());
        }
        self.signatures.insert(
            name.clone(),
            Signature {
                name: name.clone(),
                arg_sorts,
                result_sort,
            },
        );
        self.order.push(Decl::Fun(name));
    }

    /// Accepts both the SMT-LIB 2.6 form
    /// `(declare-datatypes ((K 0)) (((A) (B))))` and the legacy form
    /// `(declare-datatypes () ((K A B)))`.
    fn declare_datatypes(&mut self, items: &[SExpr], pos: Pos) -> Result<(), SchemaError> {
        if items.len() != 3 {
            return Err(malformed(pos, "declare-datatypes expects sort declarations and constructor lists"));
        }
        let heads = items[1]
            .as_list()
            .ok_or_else(|| malformed(items[1].pos(), "expected a list of datatype names"))?;
        let bodies = items[2]
            .as_list()
            .ok_or_else(|| malformed(items[2].pos(), "expected a list of datatype bodies"))?;
        let mut decls: Vec<(SExpr, Vec<SExpr>)> = Vec::new();
        if heads.is_empty() {
            for body in bodies {
                let parts = body
                    .as_list()
                    .filter(|p| p.len() >= 2)
                    .ok_or_else(|| malformed(body.pos(), "expected (Name Ctor ...)"))?;
                decls.push((parts[0].clone(), parts[1..].to_vec()));
            }
        } else {
            if heads.len() != bodies.len() {
                return Err(malformed(pos, "datatype names and bodies differ in number"));
            }
            for (head, body) in heads.iter().zip(bodies) {
                let head_items = head
                    .as_list()
                    .filter(|h| h.len() == 2 && h[1].as_atom() == Some("0"))
                    .ok_or_else(|| malformed(head.pos(), "expected (Name 0)"))?;
                let ctors = body
                    .as_list()
                    .ok_or_else(|| malformed(body.pos(), "expected a constructor list"))?;
                decls.push((head_items[0].clone(), ctors.to_vec()));
            }
        }
        for (name_expr, ctor_exprs) in decls {
            let name = self.fresh_name(Some(&name_expr), name_expr.pos())?;
            if ctor_exprs.is_empty() {
                return Err(malformed(name_expr.pos(), format!("datatype `{name}` has no constructors")));
            }
            // register the sort first so constructors cannot reuse its name
            self.sorts.insert(
                name.clone(),
                Sort {
                    name: name.clone(),
                    kind: SortKind::Enumerated(Vec::new()),
                },
            );
            let mut ctors = Vec::new();
            for c in &ctor_exprs {
                let atom = match c {
                    SExpr::Atom { .. } => c,
                    SExpr::List { items, .. } if items.len() == 1 => &items[0],
                    _ => {
                        return Err(malformed(
                            c.pos(),
                            "only enumerations (constructors without fields) are supported",
                        ))
                    }
                };
                let ctor = self.fresh_name(Some(atom), atom.pos())?;
                self.constructors.insert(ctor.clone(), name.clone());
                ctors.push(ctor);
            }
            self.sorts.get_mut(&name).unwrap().kind = SortKind::Enumerated(ctors);
            self.order.push(Decl::Sort(name));
        }
        Ok(())
    }

    fn fresh_name(&self, expr: Option<&SExpr>, at: Pos) -> Result<String, SchemaError> {
        let expr = expr.ok_or_else(|| malformed(at, "missing name"))?;
        let name = expr
            .as_atom()
            .ok_or_else(|| malformed(expr.pos(), "expected a name"))?;
        if !is_identifier(name) {
            return Err(SchemaError::InvalidIdentifier {
                name: name.to_string(),
                pos: expr.pos(),
            });
        }
        if RESERVED.contains(&name)
            || self.sorts.contains_key(name)
            || self.signatures.contains_key(name)
            || self.constructors.contains_key(name)
        {
            return Err(SchemaError::DuplicateName {
                name: name.to_string(),
                pos: expr.pos(),
            });
        }
        Ok(name.to_string())
    }

    fn resolve_sort(&self, expr: &SExpr) -> Result<Ty, SchemaError> {
        let name = expr
            .as_atom()
            .ok_or_else(|| malformed(expr.pos(), "expected a sort name"))?;
        self.ty(name).ok_or_else(|| SchemaError::UnknownSortReference {
            name: name.to_string(),
            pos: expr.pos(),
        })
    }

    /// Resolves a sort name, including the builtins.
    pub fn ty(&self, name: &str) -> Option<Ty> {
        builtin(name).or_else(|| self.sorts.contains_key(name).then(|| Ty::Named(name.to_string())))
    }

    pub fn sort(&self, name: &str) -> Option<&Sort> {
        self.sorts.get(name)
    }

    /// The kind of a sort; builtins map to their builtin kinds.
    pub fn kind_of(&self, ty: &Ty) -> Option<SortKind> {
        match ty {
            Ty::Bool => Some(SortKind::Bool),
            Ty::Int => Some(SortKind::Int),
            Ty::Real => Some(SortKind::Real),
            Ty::Named(n) => self.sorts.get(n).map(|s| s.kind.clone()),
        }
    }

    /// Declared (non-builtin) sorts in declaration order.
    pub fn sorts(&self) -> impl Iterator<Item = &Sort> {
        self.sorts.values()
    }

    pub fn signatures(&self) -> impl Iterator<Item = &Signature> {
        self.signatures.values()
    }

    pub fn signature(&self, name: &str) -> Option<&Signature> {
        self.signatures.get(name)
    }

    /// Sort declaring the given enumeration constructor.
    pub fn constructor_sort(&self, ctor: &str) -> Option<&str> {
        self.constructors.get(ctor).map(String::as_str)
    }

    pub fn annotations(&self) -> &BTreeMap<String, String> {
        &self.annotations
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn uninterpreted_count(&self) -> usize {
        self.sorts
            .values()
            .filter(|s| s.kind == SortKind::Uninterpreted)
            .count()
    }

    pub fn enumerated_count(&self) -> usize {
        self.sorts
            .values()
            .filter(|s| matches!(s.kind, SortKind::Enumerated(_)))
            .count()
    }

    /// Canonical declaration text, in the original declaration order, with
    /// annotation comments reproduced so that re-loading yields an equal
    /// schema.
    pub fn render_declarations(&self) -> String {
        let mut out = String::new();
        let mut current: Option<&String> = None;
        for decl in &self.order {
            let annotation = match decl {
                Decl::Fun(name) => self.annotations.get(name),
                Decl::Sort(_) => None,
            };
            if annotation != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                if let Some(a) = annotation {
                    let _ = writeln!(out, "; {a}");
                }
                current = annotation;
            }
            match decl {
                Decl::Sort(name) => match &self.sorts[name].kind {
                    SortKind::Enumerated(ctors) => {
                        let body: Vec<String> = ctors.iter().map(|c| format!("({c})")).collect();
                        let _ = writeln!(out, "(declare-datatypes (({name} 0)) (({})))", body.join(" "));
                    }
                    _ => {
                        let _ = writeln!(out, "(declare-sort {name} 0)");
                    }
                },
                Decl::Fun(name) => {
                    let sig = &self.signatures[name];
                    let args: Vec<String> = sig.arg_sorts.iter().map(Ty::to_string).collect();
                    let _ = writeln!(out, "(declare-fun {name} ({}) {})", args.join(" "), sig.result_sort);
                }
            }
        }
        out
    }
}

/// Maps each line number to the annotation tag in effect on it.
fn annotation_tags(text: &str) -> HashMap<usize, String> {
    let tag_re = Regex::new(r"^;+\s*([A-Z][A-Z_]*:.*)$").unwrap();
    let mut out = HashMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            current = None;
        } else if line.starts_with(';') {
            current = tag_re.captures(line).map(|c| c[1].trim().to_string());
        } else if let Some(tag) = &current {
            out.insert(i + 1, tag.clone());
        }
    }
    out
}
