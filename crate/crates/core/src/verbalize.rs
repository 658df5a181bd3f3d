//! Rule-based program verbalization.
//!
//! Relation and class ids become words by dropping any `ns:` style prefix,
//! dropping the leading domain segment of dotted ids, and splitting on `_`.

use std::collections::HashMap;

use crate::kb::KnowledgeBase;
use crate::query::sexpr::{SExpr, Superlative};
use crate::query::sparql::Projection;
use crate::query::{Ast, Atom, CmpOp, Program};

/// Words of a relation or class id, lowercased.
pub fn relation_words(id: &str) -> Vec<String> {
    let local = id.rsplit_once(':').map_or(id, |(_, l)| l);
    let segments: Vec<&str> = local.split('.').filter(|s| !s.is_empty()).collect();
    let kept = if segments.len() > 1 { &segments[1..] } else { &segments[..] };
    kept.iter()
        .flat_map(|s| s.split(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn relation_phrase(id: &str) -> String {
    relation_words(id).join(" ")
}

/// A question fragment: plain words or a mention copied from the KB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Text(String),
    Mention(String),
}

pub fn join_pieces(pieces: &[Piece]) -> String {
    let words: Vec<&str> = pieces
        .iter()
        .map(|p| match p {
            Piece::Text(t) | Piece::Mention(t) => t.as_str(),
        })
        .filter(|t| !t.is_empty())
        .collect();
    format!("{}?", words.join(" "))
}

/// Deterministic program-to-question renderer.
#[derive(Debug, Clone)]
pub struct Verbalizer<'a> {
    kb: &'a KnowledgeBase,
    phrases: HashMap<String, String>,
}

fn text(s: impl Into<String>) -> Piece {
    Piece::Text(s.into())
}

impl<'a> Verbalizer<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Verbalizer { kb, phrases: HashMap::new() }
    }

    /// Overrides the phrase used for specific relation or class ids.
    pub fn with_phrases(mut self, phrases: HashMap<String, String>) -> Self {
        self.phrases = phrases;
        self
    }

    pub fn question(&self, program: &Program) -> String {
        join_pieces(&self.pieces(program))
    }

    pub fn pieces(&self, program: &Program) -> Vec<Piece> {
        match program.ast() {
            Ast::Sexpr(e) => self.top(e),
            Ast::Sparql(q) => {
                let rels: Vec<String> = program.relations().iter().map(|r| self.phrase(r)).collect();
                let ents: Vec<Piece> = program.entities().iter().map(|e| Piece::Mention(self.surface(e))).collect();
                let rels = rels.join(" and ");
                let mut out = match q.projection {
                    Projection::Ask => vec![text(format!("is there something with {rels} for"))],
                    Projection::Count { .. } => vec![text(format!("how many {rels} are there for"))],
                    Projection::Select { .. } => vec![text(format!("what is the {rels} of"))],
                };
                for (i, e) in ents.into_iter().enumerate() {
                    if i > 0 {
                        out.push(text("and"));
                    }
                    out.push(e);
                }
                out
            }
        }
    }

    fn phrase(&self, id: &str) -> String {
        self.phrases.get(id).cloned().unwrap_or_else(|| relation_phrase(id))
    }

    fn atom(&self, a: &Atom<String>) -> String {
        match a {
            Atom::Const(id) => self.phrase(id),
            Atom::Var(v) => format!("?{v}"),
        }
    }

    fn surface(&self, id: &str) -> String {
        self.kb.surface_name(id).unwrap_or(id).to_owned()
    }

    fn class_of(e: &SExpr) -> Option<&Atom<String>> {
        match e {
            SExpr::Class(c) => Some(c),
            _ => None,
        }
    }

    fn np(&self, e: &SExpr) -> Vec<Piece> {
        match e {
            SExpr::Entity(Atom::Const(id)) => vec![Piece::Mention(self.surface(id))],
            SExpr::Entity(Atom::Var(v)) => vec![text(format!("?{v}"))],
            SExpr::Literal(l) => vec![Piece::Mention(l.lexical.clone())],
            SExpr::Class(c) => vec![text(self.atom(c))],
            SExpr::Join { relation, reverse: true, child } => {
                let mut out = vec![text(format!("the {} of", self.atom(relation)))];
                out.extend(self.np(child));
                out
            }
            SExpr::Join { relation, reverse: false, child } => {
                let mut out = vec![text(format!("the one with {}", self.atom(relation)))];
                out.extend(self.np(child));
                out
            }
            SExpr::And(a, b) => {
                let (head, rest) = match (Self::class_of(a), Self::class_of(b)) {
                    (Some(c), _) => (vec![text(format!("the {} that", self.atom(c)))], b),
                    (None, Some(c)) => (vec![text(format!("the {} that", self.atom(c)))], a),
                    _ => {
                        let mut h = self.np(a);
                        h.push(text("that"));
                        (h, b)
                    }
                };
                let mut out = head;
                out.extend(self.clause(rest));
                out
            }
            SExpr::Superlative { kind, set, relation } => {
                let mut out = vec![text(format!("the one with the {} {} among", extreme(*kind), self.atom(relation)))];
                out.extend(self.np(set));
                out
            }
            SExpr::Compare { .. } => {
                let mut out = vec![text("the one that")];
                out.extend(self.clause(e));
                out
            }
            SExpr::Count(c) => {
                let mut out = vec![text("the number of")];
                out.extend(self.np(c));
                out
            }
        }
    }

    fn clause(&self, e: &SExpr) -> Vec<Piece> {
        let mut out = Vec::new();
        match e {
            SExpr::Join { relation, reverse: true, child } => {
                out.push(text(format!("is the {} of", self.atom(relation))));
                out.extend(self.np(child));
            }
            SExpr::Join { relation, reverse: false, child } => {
                out.push(text(format!("has {}", self.atom(relation))));
                out.extend(self.np(child));
            }
            SExpr::Compare { op, relation, value } => {
                let cmp = match op {
                    CmpOp::Lt => "less than",
                    CmpOp::Le => "at most",
                    CmpOp::Gt => "more than",
                    CmpOp::Ge => "at least",
                    CmpOp::Ne => "other than",
                };
                out.push(text(format!("has {} {cmp}", self.atom(relation))));
                out.push(match value {
                    Atom::Const(l) => Piece::Mention(l.lexical.clone()),
                    Atom::Var(v) => text(format!("?{v}")),
                });
            }
            SExpr::Class(c) => out.push(text(format!("is a {}", self.atom(c)))),
            SExpr::And(a, b) => {
                out.extend(self.clause(a));
                out.push(text("and"));
                out.extend(self.clause(b));
            }
            other => {
                out.push(text("is"));
                out.extend(self.np(other));
            }
        }
        out
    }

    fn top(&self, e: &SExpr) -> Vec<Piece> {
        let mut out = Vec::new();
        match e {
            SExpr::Join { relation, reverse: true, child } => {
                out.push(text(format!("what is the {} of", self.atom(relation))));
                out.extend(self.np(child));
            }
            SExpr::Join { relation, reverse: false, child } => {
                out.push(text(format!("what has {}", self.atom(relation))));
                out.extend(self.np(child));
            }
            SExpr::And(a, b) => match (Self::class_of(a), Self::class_of(b)) {
                (Some(c), _) => {
                    out.push(text(format!("which {}", self.atom(c))));
                    out.extend(self.clause(b));
                }
                (None, Some(c)) => {
                    out.push(text(format!("which {}", self.atom(c))));
                    out.extend(self.clause(a));
                }
                _ => {
                    out.push(text("what"));
                    out.extend(self.clause(e));
                }
            },
            SExpr::Superlative { kind, set, relation } => {
                let tail = text(format!("has the {} {}", extreme(*kind), self.atom(relation)));
                match Self::class_of(set) {
                    Some(c) => out.push(text(format!("which {}", self.atom(c)))),
                    None => {
                        out.push(text("which of"));
                        out.extend(self.np(set));
                    }
                }
                out.push(tail);
            }
            SExpr::Count(x) => match &**x {
                SExpr::And(a, b) if Self::class_of(a).is_some() || Self::class_of(b).is_some() => {
                    let (c, rest) = match Self::class_of(a) {
                        Some(c) => (c, b),
                        None => (Self::class_of(b).unwrap(), a),
                    };
                    out.push(text(format!("how many {}", self.atom(c))));
                    out.extend(self.clause(rest));
                }
                SExpr::Join { relation, reverse: true, child } => {
                    out.push(text(format!("how many {} does", self.atom(relation))));
                    out.extend(self.np(child));
                    out.push(text("have"));
                }
                SExpr::Class(c) => out.push(text(format!("how many {} are there", self.atom(c)))),
                other => {
                    out.push(text("how many things"));
                    out.extend(self.clause(other));
                }
            },
            SExpr::Compare { .. } => {
                out.push(text("what"));
                out.extend(self.clause(e));
            }
            leaf => {
                out.push(text("what is"));
                out.extend(self.np(leaf));
            }
        }
        out
    }
}

fn extreme(kind: Superlative) -> &'static str {
    match kind {
        Superlative::Max => "largest",
        Superlative::Min => "smallest",
    }
}
