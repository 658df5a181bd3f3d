//! Program representation for the two query languages.
//!
//! A [`Program`] is either an S-expression logical form or a query in a
//! small SPARQL subset. Both share the [`Value`] type for constants and
//! execution results, and both have a canonical single-line text form that
//! is used for deduplication and exact-match scoring.

mod convert;
mod exec;
pub mod sexpr;
pub mod sparql;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, Literal, Term};

pub use convert::{convert_sexpr, sexpr_to_sparql, ConvertError};
pub use exec::{execute, solutions, Answers, ExecutionError, Solutions, MAX_ROWS};
pub use sexpr::SExpr;
pub use sparql::SparqlQuery;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Sexpr,
    Sparql,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Sexpr => "sexpr",
            Lang::Sparql => "sparql",
        }
    }
}

/// A constant or result value. Relations only show up as bindings of
/// predicate variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Entity(String),
    Class(String),
    Literal(Literal),
    Relation(String),
}

impl Value {
    pub fn to_term(&self) -> Option<Term> {
        match self {
            Value::Entity(e) => Some(Term::Entity(e.clone())),
            Value::Class(c) => Some(Term::Class(c.clone())),
            Value::Literal(l) => Some(Term::Literal(l.clone())),
            Value::Relation(_) => None,
        }
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            Value::Entity(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Value::Literal(l) => Some(l),
            _ => None,
        }
    }
}

impl From<Term> for Value {
    fn from(t: Term) -> Self {
        match t {
            Term::Entity(e) => Value::Entity(e),
            Term::Class(c) => Value::Class(c),
            Term::Literal(l) => Value::Literal(l),
        }
    }
}

impl From<&Term> for Value {
    fn from(t: &Term) -> Self {
        t.clone().into()
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Entity(id) | Value::Class(id) | Value::Relation(id) => f.write_str(id),
            Value::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "!=",
        }
    }

    /// Operator name used inside S-expressions (`lt`, `le`, ...).
    pub fn sexpr_name(self) -> Option<&'static str> {
        match self {
            CmpOp::Lt => Some("lt"),
            CmpOp::Le => Some("le"),
            CmpOp::Gt => Some("gt"),
            CmpOp::Ge => Some("ge"),
            CmpOp::Ne => None,
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Ne => ord != Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

impl ParseError {
    pub(crate) fn new(position: usize, expected: impl Into<String>) -> Self {
        ParseError { position, expected: expected.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Sexpr(SExpr),
    Sparql(SparqlQuery),
}

/// A parsed program together with its canonical text.
#[derive(Debug, Clone)]
pub struct Program {
    ast: Ast,
    canonical: String,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl Program {
    pub fn parse(lang: Lang, text: &str) -> Result<Program, ParseError> {
        match lang {
            Lang::Sexpr => sexpr::parse(text).map(Program::from_sexpr),
            Lang::Sparql => sparql::parse(text).map(Program::from_sparql),
        }
    }

    /// Parses S-expressions (text starting with `(`) or SPARQL otherwise.
    pub fn parse_any(text: &str) -> Result<Program, ParseError> {
        Program::parse(Self::detect_lang(text), text)
    }

    pub fn detect_lang(text: &str) -> Lang {
        if text.trim_start().starts_with('(') {
            Lang::Sexpr
        } else {
            Lang::Sparql
        }
    }

    pub fn from_sexpr(expr: SExpr) -> Program {
        let canonical = expr.to_string();
        Program { ast: Ast::Sexpr(expr), canonical }
    }

    pub fn from_sparql(query: SparqlQuery) -> Program {
        let canonical = query.to_string();
        Program { ast: Ast::Sparql(query), canonical }
    }

    pub fn lang(&self) -> Lang {
        match self.ast {
            Ast::Sexpr(_) => Lang::Sexpr,
            Ast::Sparql(_) => Lang::Sparql,
        }
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn as_sexpr(&self) -> Option<&SExpr> {
        match &self.ast {
            Ast::Sexpr(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_sparql(&self) -> Option<&SparqlQuery> {
        match &self.ast {
            Ast::Sparql(q) => Some(q),
            _ => None,
        }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn execute(&self, kb: &KnowledgeBase) -> Result<Answers, ExecutionError> {
        execute(self, kb)
    }

    /// Relation constants in order of first occurrence, excluding the type predicate.
    pub fn relations(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |r: &str| {
            if r != crate::kb::TYPE_PREDICATE && !out.iter().any(|x| x == r) {
                out.push(r.to_owned());
            }
        };
        match &self.ast {
            Ast::Sexpr(e) => e.visit_relations(&mut |r| push(r)),
            Ast::Sparql(q) => {
                for p in &q.patterns {
                    if let sparql::Slot::Const(Value::Relation(r)) = &p.predicate {
                        push(r);
                    }
                }
            }
        }
        out
    }

    /// Entity constants in order of first occurrence.
    pub fn entities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |e: &str| {
            if !out.iter().any(|x| x == e) {
                out.push(e.to_owned());
            }
        };
        match &self.ast {
            Ast::Sexpr(e) => e.visit_entities(&mut |x| push(x)),
            Ast::Sparql(q) => {
                for v in q.constants() {
                    if let Value::Entity(e) = v {
                        push(e);
                    }
                }
            }
        }
        out
    }
}

/// Canonical single-space serialization of a program.
pub fn canonicalize(program: &Program) -> String {
    program.canonical.clone()
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

/// Either a constant or a named variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom<T> {
    Const(T),
    Var(String),
}

impl<T> Atom<T> {
    pub fn as_const(&self) -> Option<&T> {
        match self {
            Atom::Const(c) => Some(c),
            Atom::Var(_) => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Atom::Var(v) => Some(v),
            Atom::Const(_) => None,
        }
    }
}
