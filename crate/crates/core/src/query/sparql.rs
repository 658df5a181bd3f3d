//! The SPARQL subset: basic graph patterns, `VALUES`, comparison
//! `FILTER`s, `SELECT` / `SELECT (COUNT ...)` / `ASK`, and a single
//! `ORDER BY ASC|DESC(?v) LIMIT 1` modifier used for superlatives.
//!
//! `ORDER BY ... LIMIT 1` keeps every solution tied at the extreme value
//! instead of an arbitrary one.

use std::collections::HashMap;
use std::fmt;

use super::{CmpOp, ParseError, Value};
use crate::kb::{escape_quoted, parse_quoted, Datatype, Literal, TYPE_PREDICATE};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Slot {
    Var(String),
    Const(Value),
}

impl Slot {
    pub fn var(name: &str) -> Slot {
        Slot::Var(name.to_owned())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Slot::Var(v) => Some(v),
            Slot::Const(_) => None,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Var(v) => write!(f, "?{v}"),
            Slot::Const(Value::Literal(l)) => match l.datatype {
                Datatype::String => write!(f, "\"{}\"", escape_quoted(&l.lexical)),
                dt => write!(f, "\"{}\"^^{}", escape_quoted(&l.lexical), dt.as_str()),
            },
            Slot::Const(v) => write!(f, "<{v}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: Slot,
    pub predicate: Slot,
    pub object: Slot,
}

impl TriplePattern {
    pub fn new(subject: Slot, predicate: Slot, object: Slot) -> Self {
        TriplePattern { subject, predicate, object }
    }

    pub fn slots(&self) -> [&Slot; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    Select { var: String, alias: Option<String>, distinct: bool },
    Count { var: String, alias: String, distinct: bool },
    Ask,
}

/// `VALUES ?var { items }`. Items are all constants, or a single variable
/// (an equality constraint between the two variables).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValuesClause {
    pub var: String,
    pub items: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Filter {
    pub left: String,
    pub op: CmpOp,
    pub right: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderLimit {
    pub var: String,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparqlQuery {
    pub projection: Projection,
    pub patterns: Vec<TriplePattern>,
    pub values: Vec<ValuesClause>,
    pub filters: Vec<Filter>,
    pub order: Option<OrderLimit>,
}

impl SparqlQuery {
    pub fn select(var: &str) -> SparqlQuery {
        SparqlQuery {
            projection: Projection::Select { var: var.to_owned(), alias: None, distinct: true },
            patterns: Vec::new(),
            values: Vec::new(),
            filters: Vec::new(),
            order: None,
        }
    }

    /// Variables in order of first occurrence in the canonical text.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |v: &str| {
            if !out.iter().any(|x| x == v) {
                out.push(v.to_owned());
            }
        };
        match &self.projection {
            Projection::Select { var, alias, .. } => {
                push(var);
                if let Some(a) = alias {
                    push(a);
                }
            }
            Projection::Count { var, alias, .. } => {
                push(var);
                push(alias);
            }
            Projection::Ask => {}
        }
        for p in &self.patterns {
            for s in p.slots() {
                if let Slot::Var(v) = s {
                    push(v);
                }
            }
        }
        for v in &self.values {
            push(&v.var);
            for i in &v.items {
                if let Slot::Var(x) = i {
                    push(x);
                }
            }
        }
        for f in &self.filters {
            push(&f.left);
            if let Slot::Var(x) = &f.right {
                push(x);
            }
        }
        if let Some(o) = &self.order {
            push(&o.var);
        }
        out
    }

    /// Variables bound by a pattern or a `VALUES` clause.
    pub fn bound_variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.patterns {
            for s in p.slots() {
                if let Slot::Var(v) = s {
                    out.push(v);
                }
            }
        }
        for v in &self.values {
            out.push(&v.var);
            for i in &v.items {
                if let Slot::Var(x) = i {
                    out.push(x);
                }
            }
        }
        out
    }

    /// Constants in canonical text order.
    pub fn constants(&self) -> Vec<&Value> {
        let mut out = Vec::new();
        for p in &self.patterns {
            for s in p.slots() {
                if let Slot::Const(c) = s {
                    out.push(c);
                }
            }
        }
        for v in &self.values {
            for i in &v.items {
                if let Slot::Const(c) = i {
                    out.push(c);
                }
            }
        }
        for f in &self.filters {
            if let Slot::Const(c) = &f.right {
                out.push(c);
            }
        }
        out
    }

    /// Replaces variables with constants wherever `binding` has a value.
    pub fn substitute(&self, binding: &dyn Fn(&str) -> Option<Value>) -> SparqlQuery {
        let sub = |s: &Slot| match s {
            Slot::Var(v) => binding(v).map(Slot::Const).unwrap_or_else(|| s.clone()),
            c => c.clone(),
        };
        SparqlQuery {
            projection: self.projection.clone(),
            patterns: self
                .patterns
                .iter()
                .map(|p| TriplePattern::new(sub(&p.subject), sub(&p.predicate), sub(&p.object)))
                .collect(),
            values: self
                .values
                .iter()
                .map(|v| ValuesClause { var: v.var.clone(), items: v.items.iter().map(sub).collect() })
                .collect(),
            filters: self
                .filters
                .iter()
                .map(|f| Filter { left: f.left.clone(), op: f.op, right: sub(&f.right) })
                .collect(),
            order: self.order.clone(),
        }
    }
}

impl fmt::Display for SparqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let distinct = |d: bool| if d { "DISTINCT " } else { "" };
        match &self.projection {
            Projection::Select { var, alias: None, distinct: d } => write!(f, "SELECT {}?{var}", distinct(*d))?,
            Projection::Select { var, alias: Some(a), distinct: d } => {
                write!(f, "SELECT {}( ?{var} AS ?{a} )", distinct(*d))?
            }
            Projection::Count { var, alias, distinct: d } => {
                write!(f, "SELECT ( COUNT( {}?{var} ) AS ?{alias} )", distinct(*d))?
            }
            Projection::Ask => f.write_str("ASK")?,
        }
        if !matches!(self.projection, Projection::Ask) {
            f.write_str(" WHERE")?;
        }
        f.write_str(" {")?;
        for p in &self.patterns {
            write!(f, " {} {} {} .", p.subject, p.predicate, p.object)?;
        }
        for v in &self.values {
            write!(f, " VALUES ?{} {{", v.var)?;
            for i in &v.items {
                write!(f, " {i}")?;
            }
            f.write_str(" }")?;
        }
        for flt in &self.filters {
            write!(f, " FILTER ( ?{} {} {} )", flt.left, flt.op.symbol(), flt.right)?;
        }
        f.write_str(" }")?;
        if let Some(o) = &self.order {
            let dir = if o.descending { "DESC" } else { "ASC" };
            write!(f, " ORDER BY {dir}( ?{} ) LIMIT 1", o.var)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    Iri(String),
    Name(String),
    Word(String),
    Str(String, Option<String>),
    Num(String),
    Punct(&'static str),
}

const PUNCT: [&str; 13] = ["<=", ">=", "!=", "{", "}", "(", ")", ".", ",", ";", "<", ">", "="];

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut i = 0;
    let is_name_char = |c: char| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '#');
    while i < text.len() {
        let rest = &text[i..];
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '?' || c == '$' {
            let len: usize = rest[1..].chars().take_while(|c| c.is_alphanumeric() || *c == '_').map(char::len_utf8).sum();
            if len == 0 {
                return Err(ParseError::new(i, "variable name"));
            }
            out.push((i, Tok::Var(rest[1..1 + len].to_owned())));
            i += 1 + len;
            continue;
        }
        if c == '<' {
            if let Some(end) = rest.find('>') {
                let inner = &rest[1..end];
                if !inner.is_empty() && !inner.contains(|ch: char| ch.is_whitespace() || "\"{}<|^`".contains(ch)) {
                    out.push((i, Tok::Iri(inner.to_owned())));
                    i += end + 1;
                    continue;
                }
            }
        }
        if c == '"' {
            let (s, after) = parse_quoted(rest).ok_or_else(|| ParseError::new(i, "closing quote"))?;
            let mut consumed = rest.len() - after.len();
            let mut suffix = None;
            if let Some(dt) = after.strip_prefix("^^") {
                let dt_len = if dt.starts_with('<') {
                    dt.find('>').map(|e| e + 1).ok_or_else(|| ParseError::new(i + consumed, "datatype IRI"))?
                } else {
                    dt.chars().take_while(|&c| is_name_char(c)).map(char::len_utf8).sum()
                };
                suffix = Some(dt[..dt_len].to_owned());
                consumed += 2 + dt_len;
            } else if after.starts_with('@') {
                return Err(ParseError::new(i + consumed, "plain or typed literal (language tags unsupported)"));
            }
            out.push((i, Tok::Str(s, suffix)));
            i += consumed;
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
            let len = 1 + rest[1..].chars().take_while(|c| c.is_ascii_digit() || *c == '.' || *c == 'e' || *c == 'E').count();
            let mut num = &rest[..len];
            // a trailing dot ends the triple
            while num.ends_with('.') {
                num = &num[..num.len() - 1];
            }
            out.push((i, Tok::Num(num.to_owned())));
            i += num.len();
            continue;
        }
        if c.is_alphabetic() || c == ':' || c == '_' {
            let len: usize = rest.chars().take_while(|&c| is_name_char(c)).map(char::len_utf8).sum();
            let mut word = &rest[..len];
            while word.ends_with('.') {
                word = &word[..word.len() - 1];
            }
            let tok = if word.contains(':') { Tok::Name(word.to_owned()) } else { Tok::Word(word.to_owned()) };
            out.push((i, tok));
            i += word.len();
            continue;
        }
        if let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) {
            out.push((i, Tok::Punct(p)));
            i += p.len();
            continue;
        }
        return Err(ParseError::new(i, format!("token (unexpected `{c}`)")));
    }
    Ok(out)
}

const UNSUPPORTED: [&str; 14] = [
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "GROUP", "HAVING", "OFFSET", "FROM", "CONSTRUCT",
    "DESCRIBE", "EXISTS", "NOT",
];

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    prefixes: HashMap<String, String>,
}

#[derive(Clone, Copy)]
enum Position {
    Subject,
    Predicate,
    Object { typed: bool },
    Operand,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x.eq_ignore_ascii_case(w))
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), ParseError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.unexpected(w))
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(x)) if *x == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        if let Some(Tok::Word(w)) = self.peek() {
            if UNSUPPORTED.iter().any(|u| u.eq_ignore_ascii_case(w)) {
                return ParseError::new(self.offset(), format!("{expected} (`{w}` is outside the supported subset)"));
            }
        }
        ParseError::new(self.offset(), expected)
    }

    fn var(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.unexpected("variable")),
        }
    }

    fn resolve_name(&self, name: &str) -> String {
        let (pfx, local) = name.split_once(':').unwrap();
        if pfx.is_empty() || self.prefixes.contains_key(pfx) {
            local.to_owned()
        } else {
            name.to_owned()
        }
    }

    fn resolve_iri(&self, iri: &str) -> String {
        for ns in self.prefixes.values() {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                if !local.is_empty() {
                    return local.to_owned();
                }
            }
        }
        iri.to_owned()
    }

    fn literal(&self, s: String, suffix: Option<String>, at: usize) -> Result<Literal, ParseError> {
        let dt = match suffix {
            None => Datatype::String,
            Some(sfx) => Datatype::from_suffix(&sfx).ok_or_else(|| ParseError::new(at, "known datatype"))?,
        };
        Literal::new(s, dt).map_err(|e| ParseError::new(at, e))
    }

    fn slot(&mut self, pos: Position) -> Result<Slot, ParseError> {
        let at = self.offset();
        let id = match self.peek().cloned() {
            Some(Tok::Var(v)) => {
                self.pos += 1;
                return Ok(Slot::Var(v));
            }
            Some(Tok::Iri(i)) => self.resolve_iri(&i),
            Some(Tok::Name(n)) => self.resolve_name(&n),
            Some(Tok::Word(w)) if w == "a" && matches!(pos, Position::Predicate) => TYPE_PREDICATE.to_owned(),
            Some(Tok::Str(s, sfx)) if !matches!(pos, Position::Subject | Position::Predicate) => {
                self.pos += 1;
                return Ok(Slot::Const(Value::Literal(self.literal(s, sfx, at)?)));
            }
            Some(Tok::Num(n)) if !matches!(pos, Position::Subject | Position::Predicate) => {
                self.pos += 1;
                let dt = if n.contains(['.', 'e', 'E']) { Datatype::Double } else { Datatype::Integer };
                return Ok(Slot::Const(Value::Literal(Literal::new(n, dt).map_err(|e| ParseError::new(at, e))?)));
            }
            _ => {
                let what = match pos {
                    Position::Subject => "subject",
                    Position::Predicate => "predicate",
                    Position::Object { .. } => "object",
                    Position::Operand => "operand",
                };
                return Err(self.unexpected(what));
            }
        };
        self.pos += 1;
        Ok(Slot::Const(match pos {
            Position::Predicate => Value::Relation(id),
            Position::Object { typed: true } => Value::Class(id),
            _ => Value::Entity(id),
        }))
    }

    fn group(&mut self, q: &mut SparqlQuery) -> Result<(), ParseError> {
        self.expect_punct("{")?;
        loop {
            if self.eat_punct("}") {
                return Ok(());
            }
            if self.eat_punct(".") {
                continue;
            }
            if self.eat_word("VALUES") {
                let var = self.var()?;
                self.expect_punct("{")?;
                let mut items = Vec::new();
                while !self.eat_punct("}") {
                    items.push(self.slot(Position::Operand)?);
                }
                let vars = items.iter().filter(|i| matches!(i, Slot::Var(_))).count();
                if items.is_empty() || (vars > 0 && items.len() > 1) {
                    return Err(ParseError::new(self.offset(), "constants or exactly one variable in VALUES"));
                }
                q.values.push(ValuesClause { var, items });
                continue;
            }
            if self.eat_word("FILTER") {
                self.expect_punct("(")?;
                let left = self.var()?;
                let at = self.offset();
                let op = match self.next() {
                    Some(Tok::Punct("<")) => CmpOp::Lt,
                    Some(Tok::Punct("<=")) => CmpOp::Le,
                    Some(Tok::Punct(">")) => CmpOp::Gt,
                    Some(Tok::Punct(">=")) => CmpOp::Ge,
                    Some(Tok::Punct("!=")) => CmpOp::Ne,
                    _ => return Err(ParseError::new(at, "comparison operator")),
                };
                let right = self.slot(Position::Operand)?;
                self.expect_punct(")")?;
                q.filters.push(Filter { left, op, right });
                continue;
            }
            let subject = self.slot(Position::Subject)?;
            let predicate = self.slot(Position::Predicate)?;
            let typed = matches!(&predicate, Slot::Const(Value::Relation(r)) if r == TYPE_PREDICATE);
            let object = self.slot(Position::Object { typed })?;
            q.patterns.push(TriplePattern { subject, predicate, object });
            if !self.eat_punct(".") && !matches!(self.peek(), Some(Tok::Punct("}"))) && !self.is_word("FILTER") && !self.is_word("VALUES") {
                return Err(self.unexpected("`.` or `}`"));
            }
        }
    }

    fn query(&mut self) -> Result<SparqlQuery, ParseError> {
        while self.eat_word("PREFIX") {
            let at = self.offset();
            let pfx = match self.next() {
                Some(Tok::Name(n)) if n.ends_with(':') && n.matches(':').count() == 1 => n[..n.len() - 1].to_owned(),
                _ => return Err(ParseError::new(at, "prefix name")),
            };
            let at = self.offset();
            let iri = match self.next() {
                Some(Tok::Iri(i)) => i,
                _ => return Err(ParseError::new(at, "namespace IRI")),
            };
            self.prefixes.insert(pfx, iri);
        }
        let projection = if self.eat_word("ASK") {
            Projection::Ask
        } else if self.eat_word("SELECT") {
            let distinct = self.eat_word("DISTINCT");
            if self.eat_punct("(") {
                if self.eat_word("COUNT") {
                    self.expect_punct("(")?;
                    let inner_distinct = self.eat_word("DISTINCT");
                    let var = self.var()?;
                    self.expect_punct(")")?;
                    self.expect_word("AS")?;
                    let alias = self.var()?;
                    self.expect_punct(")")?;
                    Projection::Count { var, alias, distinct: inner_distinct }
                } else {
                    let var = self.var()?;
                    self.expect_word("AS")?;
                    let alias = self.var()?;
                    self.expect_punct(")")?;
                    Projection::Select { var, alias: Some(alias), distinct }
                }
            } else {
                let var = self.var()?;
                if matches!(self.peek(), Some(Tok::Var(_))) {
                    return Err(ParseError::new(self.offset(), "a single projected variable"));
                }
                Projection::Select { var, alias: None, distinct }
            }
        } else {
            return Err(self.unexpected("SELECT or ASK"));
        };
        self.eat_word("WHERE");
        let mut q = SparqlQuery { projection, patterns: Vec::new(), values: Vec::new(), filters: Vec::new(), order: None };
        self.group(&mut q)?;
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            let descending = if self.eat_word("DESC") {
                true
            } else if self.eat_word("ASC") {
                false
            } else {
                return Err(self.unexpected("ASC or DESC"));
            };
            self.expect_punct("(")?;
            let var = self.var()?;
            self.expect_punct(")")?;
            self.expect_word("LIMIT")?;
            let at = self.offset();
            match self.next() {
                Some(Tok::Num(n)) if n == "1" => {}
                _ => return Err(ParseError::new(at, "LIMIT 1")),
            }
            q.order = Some(OrderLimit { var, descending });
        }
        if self.pos < self.toks.len() {
            return Err(self.unexpected("end of query"));
        }
        Ok(q)
    }
}

pub fn parse(text: &str) -> Result<SparqlQuery, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), prefixes: HashMap::new() };
    p.query()
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPENDIX_TEMPLATE: &str = "SELECT ( ?x0 AS ?value ) WHERE { ?x0 :type.object.type ?ent1 . \
        VALUES ?x1 { ?ent0 } ?x0 ?rel0 ?x1 . FILTER ( ?x0 != ?x1 ) }";

    #[test]
    fn appendix_template_shape() {
        let q = parse(APPENDIX_TEMPLATE).unwrap();
        assert_eq!(q.patterns.len(), 2);
        assert_eq!(q.values.len(), 1);
        assert_eq!(q.filters.len(), 1);
        assert_eq!(q.filters[0].op, CmpOp::Ne);
        assert_eq!(q.patterns[0].predicate, Slot::Const(Value::Relation(TYPE_PREDICATE.into())));
        assert_eq!(q.values[0].items, vec![Slot::var("ent0")]);
        assert!(matches!(&q.projection, Projection::Select { var, alias: Some(a), .. } if var == "x0" && a == "value"));
    }

    #[test]
    fn minimal_ask() {
        let q = parse("ASK { ?x r:art_forms e:painting . }").unwrap();
        assert_eq!(q.projection, Projection::Ask);
        assert_eq!(q.patterns.len(), 1);
        assert_eq!(q.patterns[0].object, Slot::Const(Value::Entity("e:painting".into())));
        assert_eq!(q.to_string(), "ASK { ?x <r:art_forms> <e:painting> . }");
    }

    #[test]
    fn outside_subset() {
        let err = parse("SELECT ?x WHERE { ?x OPTIONAL }").unwrap_err();
        assert!(err.expected.contains("OPTIONAL"), "{err}");
        assert!(parse("SELECT ?x WHERE { ?x r:a/r:b ?y }").is_err());
        assert!(parse("SELECT ?x WHERE { ?x ?p ?y } LIMIT 5").is_err());
        assert!(parse("SELECT ?x ?y WHERE { ?x ?p ?y }").is_err());
    }

    #[test]
    fn count_with_typed_filter() {
        let q = parse(
            "SELECT (COUNT(DISTINCT ?e) AS ?count) WHERE { ?e <pred:instance_of> ?c . ?c <pred:name> \"town\" . \
             ?e <area> ?pv_1 . ?pv_1 <pred:value> ?v . FILTER ( ?v < \"530\"^^xsd:double ) . }",
        )
        .unwrap();
        assert!(matches!(q.projection, Projection::Count { distinct: true, .. }));
        let f = &q.filters[0];
        assert_eq!(f.right, Slot::Const(Value::Literal(Literal::new("530", Datatype::Double).unwrap())));
        assert!(q.to_string().contains("FILTER ( ?v < \"530\"^^double )"));
    }

    #[test]
    fn full_iri_datatype() {
        let q = parse("SELECT ?x { ?x <r:n> ?v FILTER (?v >= \"7\"^^<http://www.w3.org/2001/XMLSchema#integer>) }").unwrap();
        assert!(q.to_string().ends_with("FILTER ( ?v >= \"7\"^^integer ) }"));
    }

    #[test]
    fn prefixes_resolved() {
        let q = parse("PREFIX ns: <http://rdf.freebase.com/ns/> SELECT DISTINCT ?x WHERE { ns:m.04lg6 ns:visual_art.visual_artist.art_forms ?x . }")
            .unwrap();
        assert_eq!(q.to_string(), "SELECT DISTINCT ?x WHERE { <m.04lg6> <visual_art.visual_artist.art_forms> ?x . }");
        let q = parse("SELECT ?x { <http://rdf.freebase.com/ns/m.1> ?p ?x }").unwrap();
        assert_eq!(q.patterns[0].subject, Slot::Const(Value::Entity("http://rdf.freebase.com/ns/m.1".into())));
    }

    #[test]
    fn order_limit() {
        let q = parse("SELECT DISTINCT ?x WHERE { ?x a <food.food> . ?x <food.food.energy> ?v . } ORDER BY DESC(?v) LIMIT 1")
            .unwrap();
        assert_eq!(q.order, Some(OrderLimit { var: "v".into(), descending: true }));
        assert_eq!(q.patterns[0].object, Slot::Const(Value::Class("food.food".into())));
        let again = parse(&q.to_string()).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn canonical_fixpoint() {
        let q = parse(APPENDIX_TEMPLATE).unwrap();
        let text = q.to_string();
        assert_eq!(parse(&text).unwrap(), q);
        assert_eq!(parse(&text).unwrap().to_string(), text);
    }

    #[test]
    fn attached_dots() {
        let q = parse("SELECT ?x WHERE { e:a r:b ?x. ?x r:c 5. }").unwrap();
        assert_eq!(q.patterns.len(), 2);
    }
}
