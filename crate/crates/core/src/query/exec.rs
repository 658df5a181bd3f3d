//! Program execution over a frozen [`KnowledgeBase`].
//!
//! SPARQL-subset queries are evaluated as a sequence of index-backed
//! pattern joins over rows of optional bindings. S-expressions are
//! evaluated directly as set operations.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use super::sexpr::{SExpr, Superlative};
use super::sparql::{Projection, Slot, SparqlQuery, TriplePattern};
use super::{Ast, Atom, CmpOp, Program, Value};
use crate::kb::{Datatype, KnowledgeBase, Literal, Term, Triple, TYPE_PREDICATE};

/// Intermediate results larger than this abort the query.
pub const MAX_ROWS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("execution error: {reason}")]
pub struct ExecutionError {
    pub reason: String,
}

impl ExecutionError {
    pub(crate) fn new(reason: impl Into<String>) -> Self {
        ExecutionError { reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answers {
    /// Sorted, duplicate-free.
    Set(Vec<Value>),
    Count(u64),
    Boolean(bool),
}

impl Answers {
    /// Answers as a flat value list; counts and booleans become one literal.
    pub fn values(&self) -> Vec<Value> {
        match self {
            Answers::Set(v) => v.clone(),
            Answers::Count(n) => vec![Value::Literal(Literal::integer(*n as i64))],
            Answers::Boolean(b) => vec![Value::Literal(Literal::boolean(*b))],
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Answers::Set(v) if v.is_empty())
    }

    pub fn len(&self) -> usize {
        match self {
            Answers::Set(v) => v.len(),
            _ => 1,
        }
    }
}

/// Solution rows of a query's graph pattern before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Solutions {
    pub vars: Vec<String>,
    pub rows: Vec<Vec<Option<Value>>>,
}

impl Solutions {
    /// Sorted distinct bound values of `var`.
    pub fn distinct_values(&self, var: &str) -> Vec<Value> {
        let Some(i) = self.vars.iter().position(|v| v == var) else {
            return Vec::new();
        };
        let set: BTreeSet<&Value> = self.rows.iter().filter_map(|r| r[i].as_ref()).collect();
        set.into_iter().cloned().collect()
    }
}

pub fn execute(program: &Program, kb: &KnowledgeBase) -> Result<Answers, ExecutionError> {
    match program.ast() {
        Ast::Sparql(q) => execute_sparql(q, kb),
        Ast::Sexpr(e) => execute_sexpr(e, kb),
    }
}

/// Orders two values: numbers numerically, dates lexicographically.
pub(crate) fn compare_values(a: &Value, b: &Value) -> Result<Ordering, ExecutionError> {
    let (Value::Literal(la), Value::Literal(lb)) = (a, b) else {
        return Err(ExecutionError::new("non-numeric operand"));
    };
    if let (Some(x), Some(y)) = (la.as_f64(), lb.as_f64()) {
        return x.partial_cmp(&y).ok_or_else(|| ExecutionError::new("non-numeric operand"));
    }
    if la.datatype == Datatype::Date && lb.datatype == Datatype::Date {
        return Ok(la.lexical.cmp(&lb.lexical));
    }
    Err(ExecutionError::new("non-numeric operand"))
}

fn is_numeric(v: &Value) -> bool {
    matches!(v, Value::Literal(l) if l.datatype.is_numeric())
}

fn filter_holds(left: &Value, op: CmpOp, right: &Value) -> Result<bool, ExecutionError> {
    if op == CmpOp::Ne {
        if is_numeric(right) {
            return Ok(compare_values(left, right)? != Ordering::Equal);
        }
        return Ok(left != right);
    }
    Ok(op.holds(compare_values(left, right)?))
}

/// Triples whose object is the given value; entity and class ids are interchangeable here.
fn object_terms(v: &Value) -> Vec<Term> {
    match v {
        Value::Entity(id) | Value::Class(id) => vec![Term::Entity(id.clone()), Term::Class(id.clone())],
        Value::Literal(l) => vec![Term::Literal(l.clone())],
        Value::Relation(_) => Vec::new(),
    }
}

fn node_id(v: &Value) -> Option<&str> {
    match v {
        Value::Entity(id) | Value::Class(id) => Some(id),
        _ => None,
    }
}

fn match_values<'kb>(
    kb: &'kb KnowledgeBase,
    s: Option<&Value>,
    p: Option<&Value>,
    o: Option<&Value>,
) -> Vec<&'kb Triple> {
    let s = match s {
        Some(v) => match node_id(v) {
            Some(id) => Some(id),
            None => return Vec::new(),
        },
        None => None,
    };
    let p = match p {
        Some(Value::Relation(r)) => Some(r.as_str()),
        Some(_) => return Vec::new(),
        None => None,
    };
    match o {
        None => kb.matching(s, p, None),
        Some(v) => {
            let mut out = Vec::new();
            for t in object_terms(v) {
                out.extend(kb.matching(s, p, Some(&t)));
            }
            out
        }
    }
}

fn count_values(kb: &KnowledgeBase, s: Option<&Value>, p: Option<&Value>, o: Option<&Value>) -> usize {
    // cheap estimate when the object is unbound, exact otherwise
    if o.is_none() {
        let s = match s.map(node_id) {
            Some(Some(id)) => Some(id),
            Some(None) => return 0,
            None => None,
        };
        let p = match p {
            Some(Value::Relation(r)) => Some(r.as_str()),
            Some(_) => return 0,
            None => None,
        };
        return kb.count(s, p, None);
    }
    match_values(kb, s, p, o).len()
}

struct Frame<'q> {
    index: HashMap<&'q str, usize>,
}

impl<'q> Frame<'q> {
    fn slot<'a>(&self, slot: &'a Slot, row: &'a [Option<Value>]) -> Option<&'a Value> {
        match slot {
            Slot::Const(c) => Some(c),
            Slot::Var(v) => row[self.index[v.as_str()]].as_ref(),
        }
    }
}

fn same_value(a: &Value, b: &Value) -> bool {
    a == b || (node_id(a).is_some() && node_id(a) == node_id(b))
}

fn bind(row: &mut [Option<Value>], i: usize, v: Value) -> bool {
    match &row[i] {
        Some(existing) => same_value(existing, &v),
        None => {
            row[i] = Some(v);
            true
        }
    }
}

fn join_pattern(
    frame: &Frame<'_>,
    kb: &KnowledgeBase,
    pattern: &TriplePattern,
    rows: Vec<Vec<Option<Value>>>,
) -> Result<Vec<Vec<Option<Value>>>, ExecutionError> {
    let mut out = Vec::new();
    for row in rows {
        let s = frame.slot(&pattern.subject, &row);
        let p = frame.slot(&pattern.predicate, &row);
        let o = frame.slot(&pattern.object, &row);
        for t in match_values(kb, s, p, o) {
            let mut next = row.clone();
            let mut ok = true;
            if let Slot::Var(v) = &pattern.subject {
                ok &= bind(&mut next, frame.index[v.as_str()], Value::Entity(t.subject.clone()));
            }
            if let Slot::Var(v) = &pattern.predicate {
                ok &= bind(&mut next, frame.index[v.as_str()], Value::Relation(t.predicate.clone()));
            }
            if let Slot::Var(v) = &pattern.object {
                ok &= bind(&mut next, frame.index[v.as_str()], Value::from(&t.object));
            }
            if ok {
                out.push(next);
            }
        }
        if out.len() > MAX_ROWS {
            return Err(ExecutionError::new(format!("intermediate result exceeds {MAX_ROWS} rows")));
        }
    }
    Ok(out)
}

/// Evaluates the graph pattern, `VALUES`, filters and the order modifier.
pub fn solutions(q: &SparqlQuery, kb: &KnowledgeBase) -> Result<Solutions, ExecutionError> {
    let vars = q.variables();
    let frame = Frame { index: vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect() };
    let mut rows: Vec<Vec<Option<Value>>> = vec![vec![None; vars.len()]];

    let (const_values, var_values): (Vec<_>, Vec<_>) =
        q.values.iter().partition(|v| v.items.iter().all(|i| matches!(i, Slot::Const(_))));
    for clause in const_values {
        let i = frame.index[clause.var.as_str()];
        let mut next = Vec::new();
        for row in &rows {
            for item in &clause.items {
                if let Slot::Const(c) = item {
                    let mut r = row.clone();
                    if bind(&mut r, i, c.clone()) {
                        next.push(r);
                    }
                }
            }
        }
        rows = next;
    }

    // greedy join order: most bound slots first, then smallest index hit count
    let mut bound: HashSet<&str> = q.values.iter().filter(|v| !var_values.contains(v)).map(|v| v.var.as_str()).collect();
    let mut remaining: Vec<&TriplePattern> = q.patterns.iter().collect();
    while !remaining.is_empty() && !rows.is_empty() {
        let score = |p: &TriplePattern| {
            let n_bound = p
                .slots()
                .iter()
                .filter(|s| match s {
                    Slot::Const(_) => true,
                    Slot::Var(v) => bound.contains(v.as_str()),
                })
                .count();
            let konst = |s: &Slot| match s {
                Slot::Const(c) => Some(c.clone()),
                Slot::Var(_) => None,
            };
            let (s, pr, o) = (konst(&p.subject), konst(&p.predicate), konst(&p.object));
            let card = count_values(kb, s.as_ref(), pr.as_ref(), o.as_ref());
            (n_bound, card)
        };
        let mut best = 0;
        let mut best_score = score(remaining[0]);
        for (i, p) in remaining.iter().enumerate().skip(1) {
            let sc = score(p);
            if sc.0 > best_score.0 || (sc.0 == best_score.0 && sc.1 < best_score.1) {
                best = i;
                best_score = sc;
            }
        }
        let pattern = remaining.remove(best);
        rows = join_pattern(&frame, kb, pattern, rows)?;
        for s in pattern.slots() {
            if let Slot::Var(v) = s {
                bound.insert(v);
            }
        }
    }
    if !remaining.is_empty() {
        // an earlier pattern produced no rows
        rows.clear();
    }

    for clause in var_values {
        let i = frame.index[clause.var.as_str()];
        let Some(Slot::Var(other)) = clause.items.first() else { unreachable!() };
        let j = frame.index[other.as_str()];
        let mut next = Vec::with_capacity(rows.len());
        for mut row in rows {
            match (row[i].clone(), row[j].clone()) {
                (Some(a), Some(b)) => {
                    if same_value(&a, &b) {
                        next.push(row);
                    }
                }
                (Some(a), None) => {
                    row[j] = Some(a);
                    next.push(row);
                }
                (None, Some(b)) => {
                    row[i] = Some(b);
                    next.push(row);
                }
                (None, None) => {
                    return Err(ExecutionError::new(format!("unbound variable ?{} in VALUES", clause.var)))
                }
            }
        }
        rows = next;
    }

    for f in &q.filters {
        let li = frame.index[f.left.as_str()];
        let mut next = Vec::with_capacity(rows.len());
        for row in rows {
            let left = row[li].as_ref().ok_or_else(|| ExecutionError::new(format!("unbound variable ?{} in FILTER", f.left)))?;
            let right = frame
                .slot(&f.right, &row)
                .ok_or_else(|| ExecutionError::new(format!("unbound variable {} in FILTER", f.right)))?;
            if filter_holds(left, f.op, right)? {
                next.push(row);
            }
        }
        rows = next;
    }

    if let Some(order) = &q.order {
        let i = frame.index[order.var.as_str()];
        let mut best: Option<Value> = None;
        for row in &rows {
            let v = row[i].as_ref().ok_or_else(|| ExecutionError::new(format!("unbound order key ?{}", order.var)))?;
            best = Some(match best {
                None => {
                    compare_values(v, v)?;
                    v.clone()
                }
                Some(b) => {
                    let ord = compare_values(v, &b)?;
                    if (order.descending && ord == Ordering::Greater) || (!order.descending && ord == Ordering::Less) {
                        v.clone()
                    } else {
                        b
                    }
                }
            });
        }
        if let Some(b) = best {
            rows.retain(|r| compare_values(r[i].as_ref().unwrap(), &b) == Ok(Ordering::Equal));
        }
    }

    Ok(Solutions { vars, rows })
}

fn execute_sparql(q: &SparqlQuery, kb: &KnowledgeBase) -> Result<Answers, ExecutionError> {
    let projected = match &q.projection {
        Projection::Select { var, .. } | Projection::Count { var, .. } => Some(var.as_str()),
        Projection::Ask => None,
    };
    if let Some(v) = projected {
        if !q.bound_variables().contains(&v) {
            return Err(ExecutionError::new(format!("unbound projected variable ?{v}")));
        }
    }
    let sol = solutions(q, kb)?;
    let column = |var: &str| -> Result<Vec<Value>, ExecutionError> {
        let i = sol.vars.iter().position(|v| v == var).unwrap();
        sol.rows
            .iter()
            .map(|r| r[i].clone().ok_or_else(|| ExecutionError::new(format!("unbound projected variable ?{var}"))))
            .collect()
    };
    Ok(match &q.projection {
        Projection::Ask => Answers::Boolean(!sol.rows.is_empty()),
        Projection::Select { var, .. } => {
            let set: BTreeSet<Value> = column(var)?.into_iter().collect();
            Answers::Set(set.into_iter().collect())
        }
        Projection::Count { var, distinct, .. } => {
            let col = column(var)?;
            let n = if *distinct { col.into_iter().collect::<BTreeSet<_>>().len() } else { col.len() };
            Answers::Count(n as u64)
        }
    })
}

fn execute_sexpr(e: &SExpr, kb: &KnowledgeBase) -> Result<Answers, ExecutionError> {
    match e {
        SExpr::Count(child) => Ok(Answers::Count(eval(child, kb)?.len() as u64)),
        other => Ok(Answers::Set(eval(other, kb)?.into_iter().collect())),
    }
}

fn constant<T>(a: &Atom<T>) -> Result<&T, ExecutionError> {
    match a {
        Atom::Const(c) => Ok(c),
        Atom::Var(v) => Err(ExecutionError::new(format!("unbound template variable ?{v}"))),
    }
}

fn eval(e: &SExpr, kb: &KnowledgeBase) -> Result<BTreeSet<Value>, ExecutionError> {
    Ok(match e {
        SExpr::Entity(a) => BTreeSet::from([Value::Entity(constant(a)?.clone())]),
        SExpr::Literal(l) => BTreeSet::from([Value::Literal(l.clone())]),
        SExpr::Class(a) => kb
            .matching(None, Some(TYPE_PREDICATE), Some(&Term::Class(constant(a)?.clone())))
            .into_iter()
            .map(|t| Value::Entity(t.subject.clone()))
            .collect(),
        SExpr::Join { relation, reverse, child } => {
            let r = Value::Relation(constant(relation)?.clone());
            let mut out = BTreeSet::new();
            for x in eval(child, kb)? {
                if *reverse {
                    for t in match_values(kb, Some(&x), Some(&r), None) {
                        out.insert(Value::from(&t.object));
                    }
                } else {
                    for t in match_values(kb, None, Some(&r), Some(&x)) {
                        out.insert(Value::Entity(t.subject.clone()));
                    }
                }
            }
            out
        }
        SExpr::And(a, b) => {
            let a = eval(a, kb)?;
            let b = eval(b, kb)?;
            a.intersection(&b).cloned().collect()
        }
        SExpr::Compare { op, relation, value } => {
            let r = constant(relation)?;
            let v = Value::Literal(constant(value)?.clone());
            let mut out = BTreeSet::new();
            for t in kb.matching(None, Some(r), None) {
                if filter_holds(&Value::from(&t.object), *op, &v)? {
                    out.insert(Value::Entity(t.subject.clone()));
                }
            }
            out
        }
        SExpr::Superlative { kind, set, relation } => {
            let r = Value::Relation(constant(relation)?.clone());
            let mut keyed: Vec<(Value, Value)> = Vec::new();
            for x in eval(set, kb)? {
                for t in match_values(kb, Some(&x), Some(&r), None) {
                    keyed.push((x.clone(), Value::from(&t.object)));
                }
            }
            let mut best: Option<Value> = None;
            for (_, k) in &keyed {
                compare_values(k, k)?;
                best = match best {
                    None => Some(k.clone()),
                    Some(b) => {
                        let ord = compare_values(k, &b)?;
                        let better = match kind {
                            Superlative::Max => ord == Ordering::Greater,
                            Superlative::Min => ord == Ordering::Less,
                        };
                        Some(if better { k.clone() } else { b })
                    }
                };
            }
            match best {
                None => BTreeSet::new(),
                Some(b) => keyed
                    .into_iter()
                    .filter(|(_, k)| compare_values(k, &b) == Ok(Ordering::Equal))
                    .map(|(x, _)| x)
                    .collect(),
            }
        }
        SExpr::Count(child) => BTreeSet::from([Value::Literal(Literal::integer(eval(child, kb)?.len() as i64))]),
    })
}
