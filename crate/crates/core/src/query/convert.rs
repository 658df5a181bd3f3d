//! S-expression to SPARQL-subset conversion.
//!
//! Each S-expression node is compiled against a target variable whose
//! bindings are the node's denotation. `COUNT` and `ARGMAX`/`ARGMIN` only
//! have an encoding at the root, where they become the `COUNT` projection
//! and the `ORDER BY ... LIMIT 1` modifier respectively.

use thiserror::Error;

use super::sexpr::{SExpr, Superlative};
use super::sparql::{Filter, OrderLimit, Projection, Slot, SparqlQuery, TriplePattern, ValuesClause};
use super::{Atom, Program, Value};
use crate::kb::TYPE_PREDICATE;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConvertError {
    #[error("program is not an S-expression")]
    NotSexpr,
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
}

pub fn sexpr_to_sparql(program: &Program) -> Result<Program, ConvertError> {
    let e = program.as_sexpr().ok_or(ConvertError::NotSexpr)?;
    convert_sexpr(e).map(Program::from_sparql)
}

pub fn convert_sexpr(e: &SExpr) -> Result<SparqlQuery, ConvertError> {
    let mut c = Compiler { q: SparqlQuery::select("x0"), next_var: 1 };
    match e {
        SExpr::Count(child) => {
            c.compile(child, "x0")?;
            c.q.projection = Projection::Count { var: "x0".into(), alias: "count".into(), distinct: true };
        }
        SExpr::Superlative { kind, set, relation } => {
            c.compile(set, "x0")?;
            let v = c.fresh();
            c.pattern(Slot::var("x0"), relation_slot(relation), Slot::var(&v));
            c.q.order = Some(OrderLimit { var: v, descending: *kind == Superlative::Max });
        }
        other => c.compile(other, "x0")?,
    }
    Ok(c.q)
}

fn relation_slot(r: &Atom<String>) -> Slot {
    match r {
        Atom::Const(r) => Slot::Const(Value::Relation(r.clone())),
        Atom::Var(v) => Slot::Var(v.clone()),
    }
}

struct Compiler {
    q: SparqlQuery,
    next_var: usize,
}

impl Compiler {
    fn fresh(&mut self) -> String {
        let v = format!("x{}", self.next_var);
        self.next_var += 1;
        v
    }

    fn pattern(&mut self, s: Slot, p: Slot, o: Slot) {
        self.q.patterns.push(TriplePattern::new(s, p, o));
    }

    /// A constant leaf that can be written directly into a pattern.
    fn inline(e: &SExpr) -> Option<Slot> {
        match e {
            SExpr::Entity(Atom::Const(id)) => Some(Slot::Const(Value::Entity(id.clone()))),
            SExpr::Literal(l) => Some(Slot::Const(Value::Literal(l.clone()))),
            _ => None,
        }
    }

    fn node(&mut self, e: &SExpr) -> Result<Slot, ConvertError> {
        if let Some(s) = Self::inline(e) {
            return Ok(s);
        }
        let v = self.fresh();
        self.compile(e, &v)?;
        Ok(Slot::Var(v))
    }

    fn compile(&mut self, e: &SExpr, target: &str) -> Result<(), ConvertError> {
        let t = Slot::var(target);
        match e {
            SExpr::Entity(_) | SExpr::Literal(_) => {
                let item = match e {
                    SExpr::Entity(Atom::Var(v)) => Slot::Var(v.clone()),
                    other => Self::inline(other).unwrap(),
                };
                self.q.values.push(ValuesClause { var: target.to_owned(), items: vec![item] });
            }
            SExpr::Class(c) => {
                let c = match c {
                    Atom::Const(c) => Slot::Const(Value::Class(c.clone())),
                    Atom::Var(v) => Slot::Var(v.clone()),
                };
                self.pattern(t, Slot::Const(Value::Relation(TYPE_PREDICATE.into())), c);
            }
            SExpr::Join { relation, reverse, child } => {
                let other = self.node(child)?;
                if *reverse {
                    self.pattern(other, relation_slot(relation), t);
                } else {
                    self.pattern(t, relation_slot(relation), other);
                }
            }
            SExpr::And(a, b) => {
                self.compile(a, target)?;
                self.compile(b, target)?;
            }
            SExpr::Compare { op, relation, value } => {
                let v = self.fresh();
                self.pattern(t, relation_slot(relation), Slot::var(&v));
                let right = match value {
                    Atom::Const(l) => Slot::Const(Value::Literal(l.clone())),
                    Atom::Var(x) => Slot::Var(x.clone()),
                };
                self.q.filters.push(Filter { left: v, op: *op, right });
            }
            SExpr::Count(_) => return Err(ConvertError::UnsupportedConstruct(format!("nested COUNT in {e}"))),
            SExpr::Superlative { .. } => {
                return Err(ConvertError::UnsupportedConstruct(format!("nested superlative {e}")))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::KnowledgeBase;
    use crate::query::{Answers, Lang};

    fn convert(text: &str) -> String {
        sexpr_to_sparql(&Program::parse(Lang::Sexpr, text).unwrap()).unwrap().canonical().to_owned()
    }

    #[test]
    fn reverse_join_inlines_entity() {
        assert_eq!(
            convert("(JOIN (R r:art_forms) e:davinci)"),
            "SELECT DISTINCT ?x0 WHERE { <e:davinci> <r:art_forms> ?x0 . }"
        );
    }

    #[test]
    fn count_form() {
        assert_eq!(
            convert("(COUNT (JOIN (R r:art_forms) e:davinci))"),
            "SELECT ( COUNT( DISTINCT ?x0 ) AS ?count ) WHERE { <e:davinci> <r:art_forms> ?x0 . }"
        );
    }

    #[test]
    fn template_shape() {
        assert_eq!(
            convert("(AND ?ent1 (JOIN (R ?rel0) ?ent0))"),
            "SELECT DISTINCT ?x0 WHERE { ?x0 <type.object.type> ?ent1 . ?x1 ?rel0 ?x0 . VALUES ?x1 { ?ent0 } }"
        );
    }

    #[test]
    fn comparison_and_superlative() {
        assert_eq!(
            convert("(AND c:b (lt r:floors 9^^integer))"),
            "SELECT DISTINCT ?x0 WHERE { ?x0 <type.object.type> <c:b> . ?x0 <r:floors> ?x1 . FILTER ( ?x1 < \"9\"^^integer ) }"
        );
        assert_eq!(
            convert("(ARGMAX food.food food.food.energy)"),
            "SELECT DISTINCT ?x0 WHERE { ?x0 <type.object.type> <food.food> . ?x0 <food.food.energy> ?x1 . } ORDER BY DESC( ?x1 ) LIMIT 1"
        );
    }

    #[test]
    fn nested_superlative_unsupported() {
        let p = Program::parse(Lang::Sexpr, "(JOIN r:spouse (ARGMAX c:person r:age))").unwrap();
        assert!(matches!(sexpr_to_sparql(&p), Err(ConvertError::UnsupportedConstruct(_))));
    }

    #[test]
    fn output_reparses() {
        for text in ["(AND ?ent1 (JOIN (R ?rel0) ?ent0))", "(COUNT (AND c (JOIN r (JOIN (R q) e))))", "(ARGMIN c r)"] {
            let s = convert(text);
            assert_eq!(Program::parse(Lang::Sparql, &s).unwrap().canonical(), s);
        }
    }

    #[test]
    fn empty_result_propagates() {
        let kb = KnowledgeBase::parse("e:davinci\tr:art_forms\te:painting\ne:davinci\ttype.object.type\tc:artist\n").unwrap();
        let p = Program::parse(Lang::Sexpr, "(AND c:artist (JOIN (R r:art_forms) e:nosuch))").unwrap();
        let q = sexpr_to_sparql(&p).unwrap();
        assert_eq!(q.execute(&kb).unwrap(), Answers::Set(vec![]));
        assert_eq!(p.execute(&kb).unwrap(), Answers::Set(vec![]));
    }
}
