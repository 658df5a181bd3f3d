//! Reference evaluators for the integration tests. Both scan every triple on
//! every step and share no code with the engine.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeSet;

use kbqa::kb::{Datatype, KnowledgeBase, Literal, Term, TYPE_PREDICATE};
use kbqa::query::sexpr::{SExpr, Superlative};
use kbqa::query::sparql::{Projection, Slot, SparqlQuery};
use kbqa::query::{Answers, Atom, CmpOp, Value};

/// Raised on type errors and unbound variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleError;

fn term_value(t: &Term) -> Value {
    match t {
        Term::Entity(e) => Value::Entity(e.clone()),
        Term::Class(c) => Value::Class(c.clone()),
        Term::Literal(l) => Value::Literal(l.clone()),
    }
}

fn node(v: &Value) -> Option<&str> {
    match v {
        Value::Entity(x) | Value::Class(x) => Some(x),
        _ => None,
    }
}

/// Equality with entity and class ids interchangeable.
pub fn same(a: &Value, b: &Value) -> bool {
    match (node(a), node(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn numeric(l: &Literal) -> Option<f64> {
    match l.datatype {
        Datatype::Integer | Datatype::Double => l.lexical.parse().ok(),
        _ => None,
    }
}

pub fn order(a: &Value, b: &Value) -> Result<Ordering, OracleError> {
    let (Value::Literal(x), Value::Literal(y)) = (a, b) else { return Err(OracleError) };
    if let (Some(p), Some(q)) = (numeric(x), numeric(y)) {
        return p.partial_cmp(&q).ok_or(OracleError);
    }
    if x.datatype == Datatype::Date && y.datatype == Datatype::Date {
        return Ok(x.lexical.cmp(&y.lexical));
    }
    Err(OracleError)
}

pub fn holds(left: &Value, op: CmpOp, right: &Value) -> Result<bool, OracleError> {
    Ok(match op {
        CmpOp::Ne => {
            let right_numeric = matches!(right, Value::Literal(l) if numeric(l).is_some());
            if right_numeric {
                order(left, right)? != Ordering::Equal
            } else {
                !same(left, right)
            }
        }
        CmpOp::Lt => order(left, right)? == Ordering::Less,
        CmpOp::Le => order(left, right)? != Ordering::Greater,
        CmpOp::Gt => order(left, right)? == Ordering::Greater,
        CmpOp::Ge => order(left, right)? != Ordering::Less,
    })
}

fn konst<T>(a: &Atom<T>) -> Result<&T, OracleError> {
    match a {
        Atom::Const(c) => Ok(c),
        Atom::Var(_) => Err(OracleError),
    }
}

fn set_of(e: &SExpr, kb: &KnowledgeBase) -> Result<Vec<Value>, OracleError> {
    let mut out: Vec<Value> = Vec::new();
    let mut push = |v: Value| {
        if !out.contains(&v) {
            out.push(v);
        }
    };
    match e {
        SExpr::Entity(a) => push(Value::Entity(konst(a)?.clone())),
        SExpr::Literal(l) => push(Value::Literal(l.clone())),
        SExpr::Class(a) => {
            let c = konst(a)?;
            for t in kb.triples() {
                if t.predicate == TYPE_PREDICATE && node(&term_value(&t.object)) == Some(c.as_str()) {
                    push(Value::Entity(t.subject.clone()));
                }
            }
        }
        SExpr::Join { relation, reverse, child } => {
            let r = konst(relation)?;
            let inner = set_of(child, kb)?;
            for t in kb.triples().iter().filter(|t| &t.predicate == r) {
                let subject = Value::Entity(t.subject.clone());
                let object = term_value(&t.object);
                if *reverse {
                    if inner.iter().any(|x| same(x, &subject)) {
                        push(object);
                    }
                } else if inner.iter().any(|x| same(x, &object)) {
                    push(subject);
                }
            }
        }
        SExpr::And(a, b) => {
            let b = set_of(b, kb)?;
            for x in set_of(a, kb)? {
                if b.contains(&x) {
                    push(x);
                }
            }
        }
        SExpr::Compare { op, relation, value } => {
            let r = konst(relation)?;
            let v = Value::Literal(konst(value)?.clone());
            for t in kb.triples().iter().filter(|t| &t.predicate == r) {
                if holds(&term_value(&t.object), *op, &v)? {
                    push(Value::Entity(t.subject.clone()));
                }
            }
        }
        SExpr::Superlative { kind, set, relation } => {
            let r = konst(relation)?;
            let members = set_of(set, kb)?;
            let mut keyed = Vec::new();
            for t in kb.triples().iter().filter(|t| &t.predicate == r) {
                let s = Value::Entity(t.subject.clone());
                if let Some(m) = members.iter().find(|m| same(m, &s)) {
                    keyed.push((m.clone(), term_value(&t.object)));
                }
            }
            let mut best: Option<Value> = None;
            for (_, k) in &keyed {
                order(k, k)?;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let o = order(k, b)?;
                        (*kind == Superlative::Max && o == Ordering::Greater) || (*kind == Superlative::Min && o == Ordering::Less)
                    }
                };
                if better {
                    best = Some(k.clone());
                }
            }
            if let Some(b) = best {
                for (m, k) in keyed {
                    if order(&k, &b)? == Ordering::Equal {
                        push(m);
                    }
                }
            }
        }
        SExpr::Count(c) => push(Value::Literal(Literal::integer(set_of(c, kb)?.len() as i64))),
    }
    Ok(out)
}

fn sorted(v: Vec<Value>) -> Vec<Value> {
    v.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn brute_sexpr(e: &SExpr, kb: &KnowledgeBase) -> Result<Answers, OracleError> {
    match e {
        SExpr::Count(c) => Ok(Answers::Count(set_of(c, kb)?.len() as u64)),
        other => Ok(Answers::Set(sorted(set_of(other, kb)?))),
    }
}

type Row = Vec<(String, Value)>;

fn lookup<'a>(row: &'a Row, var: &str) -> Option<&'a Value> {
    row.iter().find(|(k, _)| k == var).map(|(_, v)| v)
}

fn unify(row: &Row, slot: &Slot, v: Value) -> Option<Row> {
    match slot {
        Slot::Const(c) => same(c, &v).then(|| row.clone()),
        Slot::Var(name) => match lookup(row, name) {
            Some(x) => same(x, &v).then(|| row.clone()),
            None => {
                let mut r = row.clone();
                r.push((name.clone(), v));
                Some(r)
            }
        },
    }
}

fn rows(q: &SparqlQuery, kb: &KnowledgeBase) -> Result<Vec<Row>, OracleError> {
    let mut current: Vec<Row> = vec![Vec::new()];
    for p in &q.patterns {
        let mut next = Vec::new();
        for row in &current {
            for t in kb.triples() {
                let Some(r) = unify(row, &p.subject, Value::Entity(t.subject.clone())) else { continue };
                let Some(r) = unify(&r, &p.predicate, Value::Relation(t.predicate.clone())) else { continue };
                if let Some(r) = unify(&r, &p.object, term_value(&t.object)) {
                    next.push(r);
                }
            }
        }
        current = next;
    }
    for clause in &q.values {
        let mut next = Vec::new();
        for row in current {
            for item in &clause.items {
                let v = match item {
                    Slot::Const(c) => Some(c.clone()),
                    Slot::Var(other) => lookup(&row, other).cloned(),
                };
                let own = lookup(&row, &clause.var).cloned();
                match (v, own) {
                    (Some(v), _) => {
                        let mut r = unify(&row, &Slot::Var(clause.var.clone()), v.clone());
                        if let (Some(rr), Slot::Var(other)) = (&r, item) {
                            r = unify(rr, &Slot::Var(other.clone()), v);
                        }
                        next.extend(r);
                    }
                    (None, Some(own)) => next.extend(unify(&row, item, own)),
                    (None, None) => return Err(OracleError),
                }
            }
        }
        current = next;
    }
    for f in &q.filters {
        let mut next = Vec::new();
        for row in current {
            let left = lookup(&row, &f.left).ok_or(OracleError)?;
            let right = match &f.right {
                Slot::Const(c) => c,
                Slot::Var(v) => lookup(&row, v).ok_or(OracleError)?,
            };
            if holds(left, f.op, right)? {
                next.push(row);
            }
        }
        current = next;
    }
    if let Some(o) = &q.order {
        let keys: Vec<Value> = current.iter().map(|r| lookup(r, &o.var).cloned().ok_or(OracleError)).collect::<Result<_, _>>()?;
        let mut best: Option<&Value> = None;
        for k in &keys {
            order(k, k)?;
            let better = match best {
                None => true,
                Some(b) => {
                    let ord = order(k, b)?;
                    (o.descending && ord == Ordering::Greater) || (!o.descending && ord == Ordering::Less)
                }
            };
            if better {
                best = Some(k);
            }
        }
        if let Some(b) = best.cloned() {
            current.retain(|r| order(lookup(r, &o.var).unwrap(), &b) == Ok(Ordering::Equal));
        }
    }
    Ok(current)
}

pub fn brute_sparql(q: &SparqlQuery, kb: &KnowledgeBase) -> Result<Answers, OracleError> {
    let rows = rows(q, kb)?;
    let column = |var: &str| rows.iter().map(|r| lookup(r, var).cloned().ok_or(OracleError)).collect::<Result<Vec<_>, _>>();
    Ok(match &q.projection {
        Projection::Ask => Answers::Boolean(!rows.is_empty()),
        Projection::Select { var, .. } => Answers::Set(sorted(column(var)?)),
        Projection::Count { var, distinct, .. } => {
            let col = column(var)?;
            Answers::Count(if *distinct { sorted(col).len() } else { col.len() } as u64)
        }
    })
}

/// Hand-written programs touching every construct of both languages, over
/// the fixture domain. Entity ids refer to the default 1000-entity layout.
pub fn corpus() -> Vec<String> {
    let film = "m.000005";
    let film2 = "m.00002a";
    let person = "m.0001f4";
    let genre = "m.0002c0";
    let city = "m.0002d0";
    let book = "m.000300";
    let mut out: Vec<String> = [
        format!("(JOIN (R film.directed_by) {film})"),
        format!("(JOIN (R film.produced_by) {film})"),
        format!("(JOIN (R film.written_by) {film2})"),
        format!("(JOIN (R film.genre) {film})"),
        format!("(JOIN (R film.runtime) {film})"),
        format!("(JOIN (R film.release_year) {film2})"),
        format!("(JOIN (R person.born_in) {person})"),
        format!("(JOIN (R book.author) {book})"),
        format!("(JOIN (R city.population) {city})"),
        format!("(JOIN film.genre {genre})"),
        format!("(JOIN book.genre {genre})"),
        format!("(JOIN person.born_in {city})"),
        format!("(JOIN film.directed_by {person})"),
        format!("(JOIN book.author {person})"),
        format!("(COUNT (JOIN film.genre {genre}))"),
        format!("(COUNT (JOIN person.born_in {city}))"),
        "(COUNT media.book)".to_string(),
        format!("(AND media.film (JOIN film.genre {genre}))"),
        format!("(AND media.person (JOIN person.born_in {city}))"),
        format!("(AND people.person (JOIN person.born_in {city}))"),
        format!("(AND (JOIN film.genre {genre}) (lt film.runtime 120^^integer))"),
        "(AND media.film (le film.release_year 1970^^integer))".to_string(),
        "(AND media.film (gt film.release_year 2010^^integer))".to_string(),
        "(AND people.person (ge person.birth_year 1990^^integer))".to_string(),
        "(lt city.population 20000^^integer)".to_string(),
        "(gt book.pages 880^^integer)".to_string(),
        format!("(ARGMAX (JOIN film.genre {genre}) film.runtime)"),
        format!("(ARGMIN (JOIN film.genre {genre}) film.release_year)"),
        "(ARGMAX media.book book.pages)".to_string(),
        "(ARGMIN location.city city.population)".to_string(),
        format!("(ARGMAX (JOIN person.born_in {city}) person.birth_year)"),
        format!("(JOIN (R person.born_in) (JOIN (R film.directed_by) {film}))"),
        format!("(JOIN (R film.genre) (JOIN film.directed_by {person}))"),
        format!("(JOIN (R person.birth_year) (JOIN (R book.author) {book}))"),
        format!("(JOIN film.directed_by (JOIN person.born_in {city}))"),
        format!("(COUNT (JOIN film.directed_by (JOIN person.born_in {city})))"),
        format!("(AND media.film (JOIN film.directed_by (JOIN person.born_in {city})))"),
        "(JOIN (R film.directed_by) (AND media.film (lt film.runtime 95^^integer)))".to_string(),
        "(COUNT (AND media.film (lt film.runtime 90^^integer)))".to_string(),
        "(JOIN film.release_year 1999^^integer)".to_string(),
        format!("(AND {film} (JOIN film.genre {genre}))"),
        "(JOIN (R film.directed_by) (AND media.film (gt film.runtime 178^^integer)))".to_string(),
    ]
    .into();
    out.extend(
        [
            format!("SELECT DISTINCT ?x WHERE {{ <{film}> <film.directed_by> ?x . }}"),
            format!("SELECT ?x WHERE {{ ?f <film.genre> <{genre}> . ?f <film.directed_by> ?x . }}"),
            format!("SELECT (COUNT(DISTINCT ?f) AS ?n) WHERE {{ ?f <film.genre> <{genre}> . }}"),
            format!("SELECT (COUNT(?f) AS ?n) WHERE {{ ?f <film.directed_by> ?p . ?p <person.born_in> <{city}> . }}"),
            format!("ASK {{ <{film}> <film.genre> <{genre}> . }}"),
            format!("ASK {{ ?p <person.born_in> <{city}> . ?p <person.birth_year> ?y . FILTER (?y >= 1990) }}"),
            "SELECT DISTINCT ?f WHERE { ?f <film.runtime> ?r . FILTER (?r < 85) }".to_string(),
            "SELECT DISTINCT ?f WHERE { ?f a <media.film> . ?f <film.release_year> ?y . FILTER (?y > 2015) . FILTER (?y <= 2018) }".to_string(),
            format!("SELECT DISTINCT ?f WHERE {{ ?f <film.directed_by> ?d . ?f <film.written_by> ?w . FILTER (?d != ?w) . ?f <film.genre> <{genre}> }}"),
            format!("SELECT DISTINCT ?y WHERE {{ ?f <film.release_year> ?y . VALUES ?f {{ <{film}> <{film2}> }} }}"),
            format!("SELECT DISTINCT ?g WHERE {{ ?f <film.genre> ?g . ?f <film.directed_by> ?p . VALUES ?p {{ <{person}> }} }}"),
            format!("SELECT DISTINCT ?f WHERE {{ ?f <film.genre> <{genre}> . ?f <film.runtime> ?r . }} ORDER BY DESC(?r) LIMIT 1"),
            format!("SELECT DISTINCT ?f WHERE {{ ?f <film.genre> <{genre}> . ?f <film.runtime> ?r . }} ORDER BY ASC(?r) LIMIT 1"),
            format!("SELECT DISTINCT ?c WHERE {{ <{person}> <person.born_in> ?c . ?c <city.population> ?n . FILTER (?n != 0) }}"),
        ],
    );
    out
}

pub struct FilterCase {
    pub kb: KnowledgeBase,
    pub pairs: Vec<kbqa::data::DataPair>,
    pub ir: std::collections::HashMap<String, kbqa::ir::DirectAnswer>,
    /// Questions of the pairs that should survive every filter.
    pub clean: Vec<String>,
}

const GIVEN: [&str; 10] = ["Ada", "Bruno", "Clara", "Dmitri", "Elena", "Felix", "Greta", "Hugo", "Ines", "Jonas"];
const FAMILY: [&str; 10] = ["Abbott", "Brandt", "Castell", "Dorn", "Eller", "Falk", "Gerber", "Holm", "Ivers", "Jansen"];

/// 100 pairs in four groups of 25: programs that fail or return nothing,
/// questions unrelated to the program's relation, pairs whose direct answer
/// names someone else, and clean pairs. Each bad pair fails exactly one filter.
pub fn filter_case() -> FilterCase {
    use kbqa::data::{DataPair, Source};
    use kbqa::ir::{extract_entities, DirectAnswer};

    let mut text = String::new();
    for i in 0..100 {
        let (film, person) = (format!("m.f{i:03}"), format!("m.p{i:03}"));
        text.push_str(&format!("{film}\tfilm.directed_by\t{person}\n"));
        text.push_str(&format!("{film}\tfilm.runtime\t\"{}\"^^integer\n", 80 + i));
        text.push_str(&format!("@name\t{film}\t\"Picture {}\"\n", i));
        text.push_str(&format!("@name\t{person}\t\"{} {}\"\n", GIVEN[i % 10], FAMILY[i / 10]));
    }
    let kb = KnowledgeBase::parse(&text).expect("filter case kb");
    let name = |id: &str| kb.surface_name(id).unwrap().to_owned();

    let mut pairs = Vec::new();
    let mut responses = Vec::new();
    let mut clean = Vec::new();
    for i in 0..100 {
        let film = format!("m.f{i:03}");
        let group = i / 25;
        let (question, program) = match group {
            0 if i % 2 == 0 => (format!("who directed by picture {i}"), "(JOIN (R film.directed_by) m.nosuch)".to_owned()),
            0 => (format!("who directed by picture {i}"), "(lt film.directed_by 5^^integer)".to_owned()),
            1 => (format!("tell me something about picture {i}"), format!("(JOIN (R film.directed_by) {film})")),
            _ => (format!("who directed by picture {i}"), format!("(JOIN (R film.directed_by) {film})")),
        };
        let program = kbqa::query::Program::parse(kbqa::query::Lang::Sexpr, &program).unwrap();
        let answers = program.execute(&kb).unwrap_or(Answers::Set(Vec::new()));
        let gold = format!("m.p{i:03}");
        let response = if group == 2 {
            format!("It was {}.", name(&format!("m.p{:03}", (i + 1) % 100)))
        } else {
            format!("It was {}.", name(&gold))
        };
        if group == 3 {
            clean.push(question.clone());
        }
        responses.push((question.clone(), response));
        pairs.push(DataPair::new(question, &program, &answers, Source::Pseudo));
    }
    let ir = responses
        .into_iter()
        .map(|(q, r)| {
            let extracted = extract_entities(&r, &kb);
            (q.clone(), DirectAnswer { question: q, response_text: r, extracted })
        })
        .collect();
    FilterCase { kb, pairs, ir, clean }
}
