//! S-expression logical forms.
//!
//! Operators: `JOIN`, `R`, `AND`, `ARGMAX`, `ARGMIN`, `COUNT` and the
//! numeric comparisons `lt`, `le`, `gt`, `ge`. Leaves are interpreted by
//! position: the first argument of `AND`/`ARGMAX`/`ARGMIN` is a class,
//! the second argument of `JOIN` is an entity (or a typed literal), and a
//! bare atom at the top level is an entity. Atoms starting with `?` are
//! template variables.

use std::fmt;

use super::{Atom, CmpOp, ParseError};
use crate::kb::{escape_quoted, parse_quoted, Datatype, Literal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Superlative {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Entity(Atom<String>),
    Class(Atom<String>),
    Literal(Literal),
    Join { relation: Atom<String>, reverse: bool, child: Box<SExpr> },
    And(Box<SExpr>, Box<SExpr>),
    Superlative { kind: Superlative, set: Box<SExpr>, relation: Atom<String> },
    Compare { op: CmpOp, relation: Atom<String>, value: Atom<Literal> },
    Count(Box<SExpr>),
}

impl SExpr {
    pub fn join(relation: &str, child: SExpr) -> SExpr {
        SExpr::Join { relation: Atom::Const(relation.to_owned()), reverse: false, child: Box::new(child) }
    }

    pub fn join_rev(relation: &str, child: SExpr) -> SExpr {
        SExpr::Join { relation: Atom::Const(relation.to_owned()), reverse: true, child: Box::new(child) }
    }

    pub fn entity(id: &str) -> SExpr {
        SExpr::Entity(Atom::Const(id.to_owned()))
    }

    pub fn class(id: &str) -> SExpr {
        SExpr::Class(Atom::Const(id.to_owned()))
    }

    pub fn and(a: SExpr, b: SExpr) -> SExpr {
        SExpr::And(Box::new(a), Box::new(b))
    }

    pub fn count(e: SExpr) -> SExpr {
        SExpr::Count(Box::new(e))
    }

    pub fn argmax(set: SExpr, relation: &str) -> SExpr {
        SExpr::Superlative { kind: Superlative::Max, set: Box::new(set), relation: Atom::Const(relation.to_owned()) }
    }

    pub fn argmin(set: SExpr, relation: &str) -> SExpr {
        SExpr::Superlative { kind: Superlative::Min, set: Box::new(set), relation: Atom::Const(relation.to_owned()) }
    }

    /// Number of relation traversals on the longest path (comparisons count as one).
    pub fn hops(&self) -> usize {
        match self {
            SExpr::Entity(_) | SExpr::Class(_) | SExpr::Literal(_) => 0,
            SExpr::Join { child, .. } => 1 + child.hops(),
            SExpr::And(a, b) => a.hops().max(b.hops()),
            SExpr::Superlative { set, .. } => set.hops(),
            SExpr::Compare { .. } => 1,
            SExpr::Count(c) => c.hops(),
        }
    }

    pub fn children(&self) -> Vec<&SExpr> {
        match self {
            SExpr::Join { child, .. } => vec![child],
            SExpr::And(a, b) => vec![a, b],
            SExpr::Superlative { set, .. } => vec![set],
            SExpr::Count(c) => vec![c],
            _ => vec![],
        }
    }

    pub(crate) fn visit_relations(&self, f: &mut dyn FnMut(&str)) {
        match self {
            SExpr::Join { relation, child, .. } => {
                if let Atom::Const(r) = relation {
                    f(r);
                }
                child.visit_relations(f);
            }
            SExpr::Superlative { set, relation, .. } => {
                set.visit_relations(f);
                if let Atom::Const(r) = relation {
                    f(r);
                }
            }
            SExpr::Compare { relation: Atom::Const(r), .. } => f(r),
            other => {
                for c in other.children() {
                    c.visit_relations(f);
                }
            }
        }
    }

    pub(crate) fn visit_entities(&self, f: &mut dyn FnMut(&str)) {
        match self {
            SExpr::Entity(Atom::Const(e)) => f(e),
            other => {
                for c in other.children() {
                    c.visit_entities(f);
                }
            }
        }
    }
}

fn fmt_literal(l: &Literal) -> String {
    match l.datatype {
        Datatype::String => format!("\"{}\"", escape_quoted(&l.lexical)),
        dt => format!("{}^^{}", l.lexical, dt.as_str()),
    }
}

fn fmt_atom(a: &Atom<String>) -> String {
    match a {
        Atom::Const(c) => c.clone(),
        Atom::Var(v) => format!("?{v}"),
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Entity(a) | SExpr::Class(a) => f.write_str(&fmt_atom(a)),
            SExpr::Literal(l) => f.write_str(&fmt_literal(l)),
            SExpr::Join { relation, reverse: true, child } => write!(f, "(JOIN (R {}) {child})", fmt_atom(relation)),
            SExpr::Join { relation, reverse: false, child } => write!(f, "(JOIN {} {child})", fmt_atom(relation)),
            SExpr::And(a, b) => write!(f, "(AND {a} {b})"),
            SExpr::Superlative { kind, set, relation } => {
                let op = match kind {
                    Superlative::Max => "ARGMAX",
                    Superlative::Min => "ARGMIN",
                };
                write!(f, "({op} {set} {})", fmt_atom(relation))
            }
            SExpr::Compare { op, relation, value } => {
                let v = match value {
                    Atom::Const(l) => fmt_literal(l),
                    Atom::Var(v) => format!("?{v}"),
                };
                write!(f, "({} {} {v})", op.sexpr_name().unwrap_or("ne"), fmt_atom(relation))
            }
            SExpr::Count(c) => write!(f, "(COUNT {c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Quoted(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
        } else if c == '(' {
            out.push((i, Tok::Open));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::Close));
            i += 1;
        } else if c == '"' {
            let (s, rest) = parse_quoted(&text[i..]).ok_or_else(|| ParseError::new(i, "closing quote"))?;
            // a typed quoted literal keeps its suffix attached
            let consumed = text.len() - i - rest.len();
            let suffix_len = rest.find(|ch: char| ch.is_whitespace() || ch == '(' || ch == ')').unwrap_or(rest.len());
            if suffix_len > 0 {
                out.push((i, Tok::Atom(format!("{s}{}", &rest[..suffix_len]))));
            } else {
                out.push((i, Tok::Quoted(s)));
            }
            i += consumed + suffix_len;
        } else {
            let start = i;
            while i < bytes.len() {
                let ch = text[i..].chars().next().unwrap();
                if ch.is_whitespace() || ch == '(' || ch == ')' {
                    break;
                }
                i += ch.len_utf8();
            }
            out.push((start, Tok::Atom(text[start..i].to_owned())));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Top,
    JoinChild,
    SetArg,
    CountChild,
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Close) => Ok(()),
            _ => Err(ParseError::new(at, "`)`")),
        }
    }

    fn relation(&mut self) -> Result<Atom<String>, ParseError> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Atom(a)) if !a.contains("^^") => Ok(atom_or_var(&a)),
            _ => Err(ParseError::new(at, "relation")),
        }
    }

    fn expr(&mut self, slot: Slot) -> Result<SExpr, ParseError> {
        let at = self.offset();
        match self.next() {
            None => Err(ParseError::new(at, "expression")),
            Some(Tok::Close) => Err(ParseError::new(at, "expression")),
            Some(Tok::Quoted(s)) => Ok(SExpr::Literal(Literal::string(s))),
            Some(Tok::Atom(a)) => leaf(&a, slot, at),
            Some(Tok::Open) => {
                let op_at = self.offset();
                let op = match self.next() {
                    Some(Tok::Atom(op)) => op,
                    _ => return Err(ParseError::new(op_at, "operator")),
                };
                let node = match op.as_str() {
                    "JOIN" => {
                        let (relation, reverse) = if self.peek() == Some(&Tok::Open) {
                            self.pos += 1;
                            let r_at = self.offset();
                            match self.next() {
                                Some(Tok::Atom(r)) if r == "R" => {}
                                _ => return Err(ParseError::new(r_at, "`R`")),
                            }
                            let rel = self.relation()?;
                            self.expect_close()?;
                            (rel, true)
                        } else {
                            (self.relation()?, false)
                        };
                        let child = self.expr(Slot::JoinChild)?;
                        SExpr::Join { relation, reverse, child: Box::new(child) }
                    }
                    "AND" => {
                        let a = self.expr(Slot::SetArg)?;
                        let b = self.expr(Slot::SetArg)?;
                        SExpr::And(Box::new(a), Box::new(b))
                    }
                    "ARGMAX" | "ARGMIN" => {
                        let set = self.expr(Slot::SetArg)?;
                        let relation = self.relation()?;
                        let kind = if op == "ARGMAX" { Superlative::Max } else { Superlative::Min };
                        SExpr::Superlative { kind, set: Box::new(set), relation }
                    }
                    "COUNT" => SExpr::Count(Box::new(self.expr(Slot::CountChild)?)),
                    "lt" | "le" | "gt" | "ge" => {
                        let cmp = match op.as_str() {
                            "lt" => CmpOp::Lt,
                            "le" => CmpOp::Le,
                            "gt" => CmpOp::Gt,
                            _ => CmpOp::Ge,
                        };
                        let relation = self.relation()?;
                        let v_at = self.offset();
                        let value = match self.next() {
                            Some(Tok::Atom(a)) if a.starts_with('?') => Atom::Var(a[1..].to_owned()),
                            Some(Tok::Atom(a)) => Atom::Const(typed_literal(&a, v_at)?),
                            Some(Tok::Quoted(s)) => Atom::Const(Literal::string(s)),
                            _ => return Err(ParseError::new(v_at, "literal")),
                        };
                        SExpr::Compare { op: cmp, relation, value }
                    }
                    _ => {
                        return Err(ParseError::new(
                            op_at,
                            "one of JOIN, AND, ARGMAX, ARGMIN, COUNT, lt, le, gt, ge",
                        ))
                    }
                };
                self.expect_close()?;
                Ok(node)
            }
        }
    }
}

fn atom_or_var(a: &str) -> Atom<String> {
    match a.strip_prefix('?') {
        Some(v) => Atom::Var(v.to_owned()),
        None => Atom::Const(a.to_owned()),
    }
}

fn typed_literal(a: &str, at: usize) -> Result<Literal, ParseError> {
    if let Some((lex, suffix)) = a.split_once("^^") {
        let dt = Datatype::from_suffix(suffix).ok_or_else(|| ParseError::new(at, "known datatype"))?;
        Literal::new(lex, dt).map_err(|e| ParseError::new(at, e))
    } else if a.parse::<i64>().is_ok() {
        Ok(Literal::integer(a.parse().unwrap()))
    } else if a.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
        Literal::new(a, Datatype::Double).map_err(|e| ParseError::new(at, e))
    } else {
        Err(ParseError::new(at, "typed literal"))
    }
}

fn leaf(a: &str, slot: Slot, at: usize) -> Result<SExpr, ParseError> {
    if a.contains("^^") {
        return match slot {
            Slot::JoinChild | Slot::Top => typed_literal(a, at).map(SExpr::Literal),
            _ => Err(ParseError::new(at, "class or expression")),
        };
    }
    if a == "R" {
        return Err(ParseError::new(at, "expression"));
    }
    let atom = atom_or_var(a);
    Ok(match slot {
        Slot::SetArg => SExpr::Class(atom),
        Slot::Top | Slot::JoinChild | Slot::CountChild => SExpr::Entity(atom),
    })
}

pub fn parse(text: &str) -> Result<SExpr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let e = p.expr(Slot::Top)?;
    if p.pos < p.toks.len() {
        return Err(ParseError::new(p.offset(), "end of input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_reverse() {
        let e = parse("(JOIN (R visual_art.visual_artist.art_forms) m.04lg6)").unwrap();
        assert_eq!(e, SExpr::join_rev("visual_art.visual_artist.art_forms", SExpr::entity("m.04lg6")));
        assert_eq!(e.to_string(), "(JOIN (R visual_art.visual_artist.art_forms) m.04lg6)");
    }

    #[test]
    fn argmax_with_class() {
        let e = parse("(ARGMAX food.food food.food.energy)").unwrap();
        assert_eq!(e, SExpr::argmax(SExpr::class("food.food"), "food.food.energy"));
    }

    #[test]
    fn unbalanced() {
        assert!(parse("(JOIN a").is_err());
        assert!(parse("(JOIN a b))").is_err());
        assert!(parse("(FOO a b)").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn literal_suffix_normalized() {
        let e = parse("(AND architecture.building (lt architecture.building.floors 9^^http://www.w3.org/2001/XMLSchema#integer))")
            .unwrap();
        assert_eq!(e.to_string(), "(AND architecture.building (lt architecture.building.floors 9^^integer))");
        let e = parse("(ge meteorology.beaufort_wind_force.wave_height 7.0^^http://www.w3.org/2001/XMLSchema#float)").unwrap();
        assert_eq!(e.to_string(), "(ge meteorology.beaufort_wind_force.wave_height 7.0^^double)");
    }

    #[test]
    fn bad_literal() {
        assert!(parse("(lt r:x abc^^integer)").is_err());
        assert!(parse("(lt r:x 5^^furlongs)").is_err());
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse("(JOIN  (R r:a)\n   e:b )").unwrap();
        let b = parse("(JOIN (R r:a) e:b)").unwrap();
        assert_eq!(a.to_string(), b.to_string());
    }

    #[test]
    fn template_vars() {
        let e = parse("(AND ?ent1 (JOIN (R ?rel0) ?ent0))").unwrap();
        match &e {
            SExpr::And(a, _) => assert_eq!(**a, SExpr::Class(Atom::Var("ent1".into()))),
            _ => panic!(),
        }
        assert_eq!(e.to_string(), "(AND ?ent1 (JOIN (R ?rel0) ?ent0))");
    }

    #[test]
    fn quoted_string_literal() {
        let e = parse("(JOIN r:name \"Eve Myles\")").unwrap();
        assert_eq!(e.to_string(), "(JOIN r:name \"Eve Myles\")");
    }

    #[test]
    fn hops() {
        assert_eq!(parse("(JOIN (R a) (JOIN b e))").unwrap().hops(), 2);
        assert_eq!(parse("(COUNT (AND c (JOIN a e)))").unwrap().hops(), 1);
    }
}
