//! Sparse features of a (question, program) pair.
//!
//! Dense part: `bias`, `rel_jaccard`, `verb_jaccard`, `q_coverage`, `hops`,
//! `op:*` indicators, `entity_match` and optionally `embed_cos`. Lexical
//! part: `lex:<q>|<w>` for content token `q` and relation word `w`,
//! `cls:<q>|<w>` for class words, `shape:<q>|<skeleton>` and `skel:<skeleton>`.

use std::collections::{BTreeMap, BTreeSet};

use crate::embed::{cosine, Embedder};
use crate::kb::{tokenize, KnowledgeBase, TYPE_PREDICATE};
use crate::query::sexpr::Superlative;
use crate::query::sparql::{Projection, Slot};
use crate::query::{Ast, Atom, Program, SExpr, Value};
use crate::sampler::extract_template;
use crate::verbalize::{relation_words, Verbalizer};

use super::link::Question;

pub type FeatureVector = BTreeMap<String, f64>;

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Clone, Copy)]
pub struct Featurizer<'a> {
    kb: &'a KnowledgeBase,
    embedder: Option<&'a dyn Embedder>,
}

fn classes(program: &Program) -> Vec<String> {
    let mut out = Vec::new();
    match program.ast() {
        Ast::Sexpr(e) => sexpr_classes(e, &mut out),
        Ast::Sparql(q) => {
            for p in &q.patterns {
                if let (Slot::Const(Value::Relation(r)), Slot::Const(Value::Class(c) | Value::Entity(c))) = (&p.predicate, &p.object)
                {
                    if r == TYPE_PREDICATE {
                        out.push(c.clone());
                    }
                }
            }
        }
    }
    out
}

fn sexpr_classes(e: &SExpr, out: &mut Vec<String>) {
    if let SExpr::Class(Atom::Const(c)) = e {
        out.push(c.clone());
    }
    for c in e.children() {
        sexpr_classes(c, out);
    }
}

fn operators(program: &Program) -> Vec<&'static str> {
    let mut ops = BTreeSet::new();
    match program.ast() {
        Ast::Sexpr(e) => sexpr_ops(e, &mut ops),
        Ast::Sparql(q) => {
            if matches!(q.projection, Projection::Count { .. }) {
                ops.insert("op:count");
            }
            if let Some(o) = &q.order {
                ops.insert(if o.descending { "op:argmax" } else { "op:argmin" });
            }
            if !q.filters.is_empty() {
                ops.insert("op:cmp");
            }
        }
    }
    if !classes(program).is_empty() {
        ops.insert("op:class");
    }
    ops.into_iter().collect()
}

fn sexpr_ops(e: &SExpr, ops: &mut BTreeSet<&'static str>) {
    match e {
        SExpr::Count(_) => {
            ops.insert("op:count");
        }
        SExpr::Superlative { kind: Superlative::Max, .. } => {
            ops.insert("op:argmax");
        }
        SExpr::Superlative { kind: Superlative::Min, .. } => {
            ops.insert("op:argmin");
        }
        SExpr::Compare { .. } => {
            ops.insert("op:cmp");
        }
        _ => {}
    }
    for c in e.children() {
        sexpr_ops(c, ops);
    }
}

fn hops(program: &Program) -> usize {
    match program.ast() {
        Ast::Sexpr(e) => e.hops(),
        Ast::Sparql(q) => q.patterns.len(),
    }
}

impl<'a> Featurizer<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Featurizer { kb, embedder: None }
    }

    pub fn with_embedder(mut self, embedder: &'a dyn Embedder) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn kb(&self) -> &'a KnowledgeBase {
        self.kb
    }

    pub fn featurize(&self, question: &Question, program: &Program) -> FeatureVector {
        let mut fv = FeatureVector::new();
        fv.insert("bias".into(), 1.0);

        let q_all: BTreeSet<&str> = question.tokens.iter().map(String::as_str).collect();
        let content: BTreeSet<&str> = question.content_tokens().into_iter().collect();
        let verbalized = Verbalizer::new(self.kb).question(program);
        let v_tokens = tokenize(&verbalized);
        let v_set: BTreeSet<&str> = v_tokens.iter().map(String::as_str).collect();

        let rels = program.relations();
        let rel_words: Vec<Vec<String>> = rels.iter().map(|r| relation_words(r)).collect();
        if !rels.is_empty() {
            let total: f64 = rel_words
                .iter()
                .map(|w| jaccard(&content, &w.iter().map(String::as_str).collect::<BTreeSet<_>>()))
                .sum();
            fv.insert("rel_jaccard".into(), total / rels.len() as f64);
        }
        fv.insert("verb_jaccard".into(), jaccard(&q_all, &v_set));
        if !q_all.is_empty() {
            fv.insert("q_coverage".into(), q_all.intersection(&v_set).count() as f64 / q_all.len() as f64);
        }
        fv.insert("hops".into(), hops(program) as f64);
        for op in operators(program) {
            fv.insert(op.into(), 1.0);
        }
        let linked = question.entity_ids();
        let matched = program.entities().iter().filter(|e| linked.contains(&e.as_str())).count();
        fv.insert("entity_match".into(), matched as f64);

        if let Some(emb) = self.embedder {
            if let (Ok(a), Ok(b)) = (emb.embed(&question.text), emb.embed(&verbalized)) {
                if let Ok(c) = cosine(&a, &b) {
                    fv.insert("embed_cos".into(), c);
                }
            }
        }

        let words: BTreeSet<&str> = rel_words.iter().flatten().map(String::as_str).collect();
        let class_ids = classes(program);
        let class_words: BTreeSet<String> = class_ids.iter().flat_map(|c| relation_words(c)).collect();
        let skeleton = extract_template(program).canonical().to_owned();
        fv.insert(format!("skel:{skeleton}"), 1.0);
        for q in &content {
            for w in &words {
                fv.insert(format!("lex:{q}|{w}"), 1.0);
            }
            for w in &class_words {
                fv.insert(format!("cls:{q}|{w}"), 1.0);
            }
            fv.insert(format!("shape:{q}|{skeleton}"), 1.0);
        }
        fv
    }
}
