//! Bounded candidate enumeration around linked topic entities.

use std::collections::{BTreeMap, BTreeSet};

use crate::kb::{KnowledgeBase, Term, TYPE_PREDICATE};
use crate::query::{Answers, Program, SExpr, Value};

use super::link::Question;
use super::ModelError;

pub const DEFAULT_CAP: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub program: Program,
    pub answers: Answers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub question: Question,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn position(&self, canonical: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.program.canonical() == canonical)
    }
}

struct Collector<'a> {
    kb: &'a KnowledgeBase,
    found: BTreeMap<(usize, String), Candidate>,
    seen: BTreeSet<String>,
}

impl<'a> Collector<'a> {
    /// Executes `expr` and records it when the answer set is non-empty.
    fn add(&mut self, expr: SExpr) -> Option<Answers> {
        let program = Program::from_sexpr(expr);
        if !self.seen.insert(program.canonical().to_owned()) {
            return None;
        }
        let answers = program.execute(self.kb).ok()?;
        if answers.is_empty() || answers == Answers::Count(0) {
            return None;
        }
        let key = (program.as_sexpr().map_or(0, SExpr::hops), program.canonical().to_owned());
        self.found.insert(key, Candidate { program, answers: answers.clone() });
        Some(answers)
    }

    fn adjacent(&self, entity: &str) -> (BTreeSet<&'a str>, BTreeSet<&'a str>) {
        let out = self
            .kb
            .matching(Some(entity), None, None)
            .into_iter()
            .filter(|t| t.predicate != TYPE_PREDICATE)
            .map(|t| t.predicate.as_str())
            .collect();
        let inc = self
            .kb
            .matching(None, None, Some(&Term::entity(entity)))
            .into_iter()
            .filter(|t| t.predicate != TYPE_PREDICATE)
            .map(|t| t.predicate.as_str())
            .collect();
        (out, inc)
    }

    fn numeric_relations(&self, entity: &str) -> BTreeSet<&'a str> {
        self.kb
            .matching(Some(entity), None, None)
            .into_iter()
            .filter(|t| matches!(&t.object, Term::Literal(l) if l.datatype.is_numeric()))
            .map(|t| t.predicate.as_str())
            .collect()
    }

    /// Class, COUNT and superlative variants of a set-valued program.
    fn variants(&mut self, base: &SExpr, answers: &Answers, with_ops: bool) {
        let entities: Vec<String> = answers.values().iter().filter_map(|v| v.as_entity().map(str::to_owned)).collect();
        let classes: BTreeSet<&str> = entities.iter().flat_map(|e| self.kb.classes_of(e)).collect();
        let mut sets = vec![(base.clone(), entities.clone())];
        for c in classes {
            let expr = SExpr::and(SExpr::class(c), base.clone());
            if let Some(a) = self.add(expr.clone()) {
                sets.push((expr, a.values().iter().filter_map(|v| v.as_entity().map(str::to_owned)).collect()));
            }
        }
        if !with_ops {
            return;
        }
        for (set, ents) in sets {
            self.add(SExpr::count(set.clone()));
            if ents.len() < 2 {
                continue;
            }
            let numeric: BTreeSet<&str> = ents.iter().flat_map(|e| self.numeric_relations(e)).collect();
            for r in numeric {
                self.add(SExpr::argmax(set.clone(), r));
                self.add(SExpr::argmin(set.clone(), r));
            }
        }
    }

    fn around(&mut self, topic: &str) {
        let (out, inc) = self.adjacent(topic);
        let mut bases = Vec::new();
        for r in out {
            bases.push(SExpr::join_rev(r, SExpr::entity(topic)));
        }
        for r in inc {
            bases.push(SExpr::join(r, SExpr::entity(topic)));
        }
        let only_topic = Answers::Set(vec![Value::Entity(topic.to_owned())]);
        for base in bases {
            let Some(answers) = self.add(base.clone()) else { continue };
            self.variants(&base, &answers, true);
            let mut second_out = BTreeSet::new();
            let mut second_in = BTreeSet::new();
            for v in answers.values() {
                if let Some(e) = v.as_entity() {
                    let (o, i) = self.adjacent(e);
                    second_out.extend(o);
                    second_in.extend(i);
                }
            }
            let hop2 = second_out
                .into_iter()
                .map(|r| SExpr::join_rev(r, base.clone()))
                .chain(second_in.into_iter().map(|r| SExpr::join(r, base.clone())));
            for expr in hop2 {
                let program = Program::from_sexpr(expr.clone());
                if self.seen.contains(program.canonical()) {
                    continue;
                }
                if program.execute(self.kb).ok().as_ref() == Some(&only_topic) {
                    self.seen.insert(program.canonical().to_owned());
                    continue;
                }
                if let Some(a) = self.add(expr.clone()) {
                    self.variants(&expr, &a, false);
                }
            }
        }
    }
}

/// All candidate programs rooted at the question's linked entities, ordered
/// by hop count then canonical text and truncated to `cap`.
pub fn enumerate_candidates(question: &Question, kb: &KnowledgeBase, cap: usize) -> Result<CandidateSet, ModelError> {
    let topics = question.entity_ids();
    if topics.is_empty() {
        return Err(ModelError::NoTopicEntity(question.text.clone()));
    }
    let mut c = Collector { kb, found: BTreeMap::new(), seen: BTreeSet::new() };
    for t in topics {
        c.around(t);
    }
    let candidates: Vec<Candidate> = c.found.into_values().take(cap.max(1)).collect();
    if candidates.is_empty() {
        return Err(ModelError::NoTopicEntity(question.text.clone()));
    }
    Ok(CandidateSet { question: question.clone(), candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::link::link_entities;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::parse(
            "m.04lg6\tvisual_art.visual_artist.art_forms\tm.05qdh\n\
             m.04lg6\tvisual_art.visual_artist.art_forms\tm.02csf\n\
             m.04lg6\ttype.object.type\tvisual_art.visual_artist\n\
             m.05qdh\ttype.object.type\tvisual_art.art_form\n\
             m.02csf\ttype.object.type\tvisual_art.art_form\n\
             m.05qdh\tvisual_art.art_form.year\t\"1400\"^^integer\n\
             m.02csf\tvisual_art.art_form.year\t\"1300\"^^integer\n\
             e:y\tpeople.person.born\te:z\n\
             @name\tm.04lg6\t\"Leonardo da Vinci\"\n\
             @name\tm.05qdh\t\"Painting\"\n\
             @name\tm.02csf\t\"Drawing\"\n\
             @name\te:y\t\"Yorick\"\n",
        )
        .unwrap()
    }

    #[test]
    fn contains_table_program() {
        let kb = kb();
        let q = link_entities("what type of art leonardo da vinci do?", &kb);
        let set = enumerate_candidates(&q, &kb, 100).unwrap();
        let canon: Vec<&str> = set.candidates.iter().map(|c| c.program.canonical()).collect();
        assert!(canon.contains(&"(JOIN (R visual_art.visual_artist.art_forms) m.04lg6)"));
        assert!(canon.contains(&"(COUNT (JOIN (R visual_art.visual_artist.art_forms) m.04lg6))"));
        assert!(canon.contains(&"(ARGMAX (JOIN (R visual_art.visual_artist.art_forms) m.04lg6) visual_art.art_form.year)"));
        assert!(canon.contains(&"(AND visual_art.art_form (JOIN (R visual_art.visual_artist.art_forms) m.04lg6))"));
        // 2-hop back to the topic is dropped
        assert!(!canon.iter().any(|c| c.starts_with("(JOIN visual_art.visual_artist.art_forms (JOIN (R")));
        let hops: Vec<usize> = set.candidates.iter().map(|c| c.program.as_sexpr().unwrap().hops()).collect();
        assert!(hops.windows(2).all(|w| w[0] <= w[1]));
        for c in &set.candidates {
            assert!(!c.program.execute(&kb).unwrap().is_empty());
        }
    }

    #[test]
    fn single_relation_bound() {
        let kb = kb();
        let q = link_entities("who is yorick", &kb);
        let set = enumerate_candidates(&q, &kb, 10).unwrap();
        assert!(set.candidates.len() <= 4);
        assert_eq!(set.candidates[0].program.canonical(), "(COUNT (JOIN (R people.person.born) e:y))");
        assert_eq!(set.candidates[1].program.canonical(), "(JOIN (R people.person.born) e:y)");
    }

    #[test]
    fn cap_and_unlinked() {
        let kb = kb();
        let q = link_entities("leonardo da vinci", &kb);
        assert_eq!(enumerate_candidates(&q, &kb, 2).unwrap().candidates.len(), 2);
        let q = link_entities("who knows", &kb);
        assert!(matches!(enumerate_candidates(&q, &kb, 10), Err(ModelError::NoTopicEntity(_))));
    }
}
