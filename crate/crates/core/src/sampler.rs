//! Program templates and step-wise grounding.
//!
//! A template is a program whose entity, class, relation and comparison
//! value constants were replaced by variables named `entK`, `relK` and
//! `valK`. Grounding binds one variable at a time: each step runs the
//! template (converted to SPARQL) with the earlier variables substituted
//! and samples candidate values for the next variable from the solutions.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kb::{Datatype, KnowledgeBase, Literal, TYPE_PREDICATE};
use crate::query::sexpr::SExpr;
use crate::query::sparql::{Filter, Slot, SparqlQuery, TriplePattern, ValuesClause};
use crate::query::{convert_sexpr, solutions, Ast, Atom, Lang, ParseError, Program, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    Entity,
    Relation,
    Class,
    Value,
}

impl VarKind {
    fn prefix(self) -> &'static str {
        match self {
            VarKind::Entity | VarKind::Class => "ent",
            VarKind::Relation => "rel",
            VarKind::Value => "val",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match (self, v) {
            (VarKind::Entity, Value::Entity(_)) | (VarKind::Class, Value::Class(_)) => true,
            (VarKind::Relation, Value::Relation(r)) => r != TYPE_PREDICATE,
            (VarKind::Value, Value::Literal(l)) => l.datatype.is_numeric() || l.datatype == Datatype::Date,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("template variables are not dense: {0}")]
    NotDense(String),
    #[error("unknown template variable ?{0}")]
    UnknownVariable(String),
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("no program could be grounded from the templates")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramTemplate {
    pub program: Program,
    pub var_kinds: BTreeMap<String, VarKind>,
    /// Canonical text of the program the template was extracted from.
    pub origin: String,
}

impl ProgramTemplate {
    /// Parses template text using `?entK` / `?relK` / `?valK` variables.
    pub fn parse(text: &str) -> Result<ProgramTemplate, TemplateError> {
        let program = Program::parse_any(text).map_err(|source| TemplateError::Parse { line: 1, source })?;
        let mut occ = Vec::new();
        collect(&program, &mut |kind, atom| {
            if let Atom::Var(v) = atom {
                occ.push((v.clone(), kind));
            }
        });
        let mut var_kinds = BTreeMap::new();
        for (v, kind) in occ {
            if !is_template_var(&v) {
                if program.lang() == Lang::Sexpr {
                    return Err(TemplateError::UnknownVariable(v));
                }
                continue;
            }
            if !v.starts_with(kind.prefix()) {
                return Err(TemplateError::UnknownVariable(v));
            }
            var_kinds.entry(v).or_insert(kind);
        }
        check_dense(&var_kinds)?;
        let origin = program.canonical().to_owned();
        Ok(ProgramTemplate { program, var_kinds, origin })
    }

    pub fn canonical(&self) -> &str {
        self.program.canonical()
    }
}

fn is_template_var(v: &str) -> bool {
    ["ent", "rel", "val"]
        .iter()
        .any(|p| v.strip_prefix(p).is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())))
}

fn check_dense(kinds: &BTreeMap<String, VarKind>) -> Result<(), TemplateError> {
    for prefix in ["ent", "rel", "val"] {
        let mut nums: Vec<usize> =
            kinds.keys().filter_map(|k| k.strip_prefix(prefix)).filter_map(|n| n.parse().ok()).collect();
        nums.sort_unstable();
        if nums.iter().enumerate().any(|(i, n)| i != *n) {
            return Err(TemplateError::NotDense(format!("{prefix}: {nums:?}")));
        }
    }
    Ok(())
}

/// Parses a template file: one template per line, `#` comments and blank lines ignored.
pub fn load_templates(text: &str) -> Result<Vec<ProgramTemplate>, TemplateError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(ProgramTemplate::parse(line).map_err(|e| match e {
            TemplateError::Parse { source, .. } => TemplateError::Parse { line: i + 1, source },
            other => other,
        })?);
    }
    Ok(out)
}

// Uniform view over the templatable positions of both program languages.

fn collect(program: &Program, f: &mut dyn FnMut(VarKind, &Atom<Value>)) {
    let _ = rewrite(program, &mut |kind, atom| {
        f(kind, &atom);
        atom
    });
}

fn to_value_atom(a: &Atom<String>, wrap: fn(String) -> Value) -> Atom<Value> {
    match a {
        Atom::Const(c) => Atom::Const(wrap(c.clone())),
        Atom::Var(v) => Atom::Var(v.clone()),
    }
}

fn to_string_atom(a: Atom<Value>) -> Atom<String> {
    match a {
        Atom::Const(Value::Entity(s) | Value::Class(s) | Value::Relation(s)) => Atom::Const(s),
        Atom::Const(Value::Literal(l)) => Atom::Const(l.lexical),
        Atom::Var(v) => Atom::Var(v),
    }
}

type Rewriter<'a> = dyn FnMut(VarKind, Atom<Value>) -> Atom<Value> + 'a;

fn rewrite_sexpr(e: &SExpr, f: &mut Rewriter<'_>) -> SExpr {
    match e {
        SExpr::Entity(a) => SExpr::Entity(to_string_atom(f(VarKind::Entity, to_value_atom(a, Value::Entity)))),
        SExpr::Class(a) => SExpr::Class(to_string_atom(f(VarKind::Class, to_value_atom(a, Value::Class)))),
        SExpr::Literal(l) => SExpr::Literal(l.clone()),
        SExpr::Join { relation, reverse, child } => {
            let relation = to_string_atom(f(VarKind::Relation, to_value_atom(relation, Value::Relation)));
            SExpr::Join { relation, reverse: *reverse, child: Box::new(rewrite_sexpr(child, f)) }
        }
        SExpr::And(a, b) => {
            let a = rewrite_sexpr(a, f);
            SExpr::And(Box::new(a), Box::new(rewrite_sexpr(b, f)))
        }
        SExpr::Superlative { kind, set, relation } => {
            let set = Box::new(rewrite_sexpr(set, f));
            let relation = to_string_atom(f(VarKind::Relation, to_value_atom(relation, Value::Relation)));
            SExpr::Superlative { kind: *kind, set, relation }
        }
        SExpr::Compare { op, relation, value } => {
            let relation = to_string_atom(f(VarKind::Relation, to_value_atom(relation, Value::Relation)));
            let v = match value {
                Atom::Const(l) => Atom::Const(Value::Literal(l.clone())),
                Atom::Var(v) => Atom::Var(v.clone()),
            };
            let value = match f(VarKind::Value, v) {
                Atom::Const(Value::Literal(l)) => Atom::Const(l),
                Atom::Const(other) => Atom::Const(Literal::string(other.to_string())),
                Atom::Var(v) => Atom::Var(v),
            };
            SExpr::Compare { op: *op, relation, value }
        }
        SExpr::Count(c) => SExpr::Count(Box::new(rewrite_sexpr(c, f))),
    }
}

fn slot_atom(s: &Slot) -> Atom<Value> {
    match s {
        Slot::Const(c) => Atom::Const(c.clone()),
        Slot::Var(v) => Atom::Var(v.clone()),
    }
}

fn atom_slot(a: Atom<Value>) -> Slot {
    match a {
        Atom::Const(c) => Slot::Const(c),
        Atom::Var(v) => Slot::Var(v),
    }
}

fn rewrite_sparql(q: &SparqlQuery, f: &mut Rewriter<'_>) -> SparqlQuery {
    let node = |s: &Slot, f: &mut Rewriter<'_>, object_of_type: bool| -> Slot {
        match s {
            Slot::Const(Value::Literal(_)) | Slot::Const(Value::Relation(_)) => s.clone(),
            Slot::Const(Value::Class(_)) => atom_slot(f(VarKind::Class, slot_atom(s))),
            Slot::Var(_) if object_of_type => atom_slot(f(VarKind::Class, slot_atom(s))),
            _ => atom_slot(f(VarKind::Entity, slot_atom(s))),
        }
    };
    let patterns = q
        .patterns
        .iter()
        .map(|p| {
            let typed = matches!(&p.predicate, Slot::Const(Value::Relation(r)) if r == TYPE_PREDICATE);
            let subject = node(&p.subject, f, false);
            let predicate = match &p.predicate {
                Slot::Const(Value::Relation(r)) if r == TYPE_PREDICATE => p.predicate.clone(),
                other => atom_slot(f(VarKind::Relation, slot_atom(other))),
            };
            let object = node(&p.object, f, typed);
            TriplePattern { subject, predicate, object }
        })
        .collect();
    let values = q
        .values
        .iter()
        .map(|v| ValuesClause { var: v.var.clone(), items: v.items.iter().map(|i| node(i, f, false)).collect() })
        .collect();
    let filters = q
        .filters
        .iter()
        .map(|flt| {
            let right = match &flt.right {
                Slot::Const(Value::Literal(_)) => atom_slot(f(VarKind::Value, slot_atom(&flt.right))),
                Slot::Var(v) if v.starts_with("val") && is_template_var(v) => {
                    atom_slot(f(VarKind::Value, slot_atom(&flt.right)))
                }
                other => other.clone(),
            };
            Filter { left: flt.left.clone(), op: flt.op, right }
        })
        .collect();
    SparqlQuery { projection: q.projection.clone(), patterns, values, filters, order: q.order.clone() }
}

fn rewrite(program: &Program, f: &mut Rewriter<'_>) -> Program {
    match program.ast() {
        Ast::Sexpr(e) => Program::from_sexpr(rewrite_sexpr(e, f)),
        Ast::Sparql(q) => Program::from_sparql(rewrite_sparql(q, f)),
    }
}

/// Replaces every templatable constant with a variable; equal constants share a variable.
pub fn extract_template(program: &Program) -> ProgramTemplate {
    let mut seen: Vec<(VarKind, Value)> = Vec::new();
    collect(program, &mut |kind, atom| {
        if let Atom::Const(c) = atom {
            if !seen.iter().any(|(k, v)| *k == kind && v == c) {
                seen.push((kind, c.clone()));
            }
        }
    });
    // entities are numbered before classes, which share the `ent` prefix
    let mut names: Vec<((VarKind, Value), String)> = Vec::new();
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    for kind in [VarKind::Entity, VarKind::Class, VarKind::Relation, VarKind::Value] {
        for (k, v) in seen.iter().filter(|(k, _)| *k == kind) {
            let n = counters.entry(kind.prefix()).or_default();
            names.push(((*k, v.clone()), format!("{}{n}", kind.prefix())));
            *n += 1;
        }
    }
    let templ = rewrite(program, &mut |kind, atom| match &atom {
        Atom::Const(c) => match names.iter().find(|((k, v), _)| *k == kind && v == c) {
            Some((_, name)) => Atom::Var(name.clone()),
            None => atom,
        },
        Atom::Var(_) => atom,
    });
    let var_kinds = names.into_iter().map(|((k, _), n)| (n, k)).collect();
    ProgramTemplate { program: templ, var_kinds, origin: program.canonical().to_owned() }
}

/// Order in which template variables are bound, plus the query each step runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingPlan {
    pub order: Vec<String>,
    /// The template as a SPARQL query; `None` when it has no SPARQL encoding.
    pub query: Option<SparqlQuery>,
}

impl GroundingPlan {
    /// Query for step `step`: earlier variables replaced by `bound`, later ones left free.
    /// Filters on still-free value variables and the order modifier are dropped.
    pub fn step_query(&self, step: usize, bound: &[Value]) -> Option<SparqlQuery> {
        let q = self.query.as_ref()?;
        let lookup = |v: &str| self.order[..step].iter().position(|x| x == v).map(|i| bound[i].clone());
        let mut q = q.substitute(&lookup);
        let free: HashSet<&str> = self.order[step..].iter().map(String::as_str).collect();
        q.filters.retain(|f| !matches!(&f.right, Slot::Var(v) if free.contains(v.as_str())));
        q.order = None;
        Some(q)
    }
}

pub fn plan_grounding(template: &ProgramTemplate) -> GroundingPlan {
    let mut first: Vec<String> = Vec::new();
    collect(&template.program, &mut |_, atom| {
        if let Atom::Var(v) = atom {
            if template.var_kinds.contains_key(v) && !first.contains(v) {
                first.push(v.clone());
            }
        }
    });
    let mut order = first.clone();
    order.sort_by_key(|v| (template.var_kinds[v], first.iter().position(|x| x == v)));
    let query = match template.program.ast() {
        Ast::Sparql(q) => Some(q.clone()),
        Ast::Sexpr(e) => convert_sexpr(e).ok(),
    };
    GroundingPlan { order, query }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub max_programs: usize,
    pub per_step_fanout: usize,
    pub seed_entities: Option<Vec<String>>,
    pub rng_seed: u64,
    pub require_nonempty: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { max_programs: 1000, per_step_fanout: 32, seed_entities: None, rng_seed: 0, require_nonempty: true }
    }
}

struct Frame {
    candidates: Vec<Value>,
    next: usize,
}

/// Depth-first grounding of one template; yields programs lazily.
pub struct Grounder<'a> {
    template: &'a ProgramTemplate,
    plan: GroundingPlan,
    kb: &'a KnowledgeBase,
    config: SampleConfig,
    rng: ChaCha8Rng,
    stack: Vec<Frame>,
    binding: Vec<Value>,
    started: bool,
}

pub fn ground<'a>(template: &'a ProgramTemplate, kb: &'a KnowledgeBase, config: &SampleConfig) -> Grounder<'a> {
    Grounder {
        template,
        plan: plan_grounding(template),
        kb,
        config: config.clone(),
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        stack: Vec::new(),
        binding: Vec::new(),
        started: false,
    }
}

impl Grounder<'_> {
    fn candidates(&mut self, step: usize) -> Vec<Value> {
        let var = &self.plan.order[step];
        let kind = self.template.var_kinds[var];
        let Some(q) = self.plan.step_query(step, &self.binding) else {
            return Vec::new();
        };
        // a value variable takes the observed values of the variable it is compared with
        let column = if kind == VarKind::Value {
            let compared = self.plan.query.as_ref().and_then(|full| {
                full.filters.iter().find(|f| matches!(&f.right, Slot::Var(v) if v == var)).map(|f| f.left.clone())
            });
            match compared {
                Some(c) => c,
                None => return Vec::new(),
            }
        } else {
            var.clone()
        };
        let mut cands = match solutions(&q, self.kb) {
            Ok(sol) => sol.distinct_values(&column),
            Err(e) => {
                tracing::debug!(template = %self.template.canonical(), step, error = %e, "step query failed");
                return Vec::new();
            }
        };
        let used: Vec<&Value> = self.plan.order[..step]
            .iter()
            .zip(&self.binding)
            .filter(|(v, _)| self.template.var_kinds[*v] == kind)
            .map(|(_, b)| b)
            .collect();
        cands.retain(|c| kind.accepts(c) && !used.contains(&c));
        if kind == VarKind::Entity {
            if let Some(seeds) = &self.config.seed_entities {
                let seeded: Vec<Value> =
                    cands.iter().filter(|c| c.as_entity().is_some_and(|e| seeds.iter().any(|s| s == e))).cloned().collect();
                if !seeded.is_empty() {
                    cands = seeded;
                }
            }
        }
        cands.shuffle(&mut self.rng);
        cands.truncate(self.config.per_step_fanout);
        cands
    }

    fn emit(&self) -> Option<Program> {
        let mut lookup = |_: VarKind, atom: Atom<Value>| -> Atom<Value> {
            match &atom {
                Atom::Var(v) => match self.plan.order.iter().position(|x| x == v) {
                    Some(i) => Atom::Const(self.binding[i].clone()),
                    None => atom,
                },
                Atom::Const(_) => atom,
            }
        };
        let program = rewrite(&self.template.program, &mut lookup);
        match program.execute(self.kb) {
            Ok(a) if !(self.config.require_nonempty && a.is_empty()) => Some(program),
            Ok(_) => None,
            Err(e) => {
                tracing::debug!(program = %program, error = %e, "grounded program failed");
                None
            }
        }
    }
}

impl Iterator for Grounder<'_> {
    type Item = Program;

    fn next(&mut self) -> Option<Program> {
        let depth_total = self.plan.order.len();
        if !self.started {
            self.started = true;
            if depth_total == 0 {
                return self.emit();
            }
            if self.plan.query.is_none() {
                tracing::warn!(template = %self.template.canonical(), "template has no SPARQL encoding, skipped");
                return None;
            }
            let first = self.candidates(0);
            if first.is_empty() {
                tracing::debug!(template = %self.template.canonical(), step = 0, "StepExhausted");
                return None;
            }
            self.stack.push(Frame { candidates: first, next: 0 });
        }
        loop {
            let depth = self.stack.len();
            let frame = self.stack.last_mut()?;
            self.binding.truncate(depth - 1);
            if frame.next >= frame.candidates.len() {
                self.stack.pop();
                continue;
            }
            let v = frame.candidates[frame.next].clone();
            frame.next += 1;
            self.binding.push(v);
            if depth == depth_total {
                if let Some(p) = self.emit() {
                    return Some(p);
                }
                continue;
            }
            let cands = self.candidates(depth);
            if cands.is_empty() {
                tracing::debug!(template = %self.template.canonical(), step = depth, "StepExhausted");
                continue;
            }
            self.stack.push(Frame { candidates: cands, next: 0 });
        }
    }
}

/// Independent per-item seed derived from a base seed.
pub fn derived_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Round-robin over the templates' grounding streams, deduplicated by canonical text.
pub fn sample_corpus(
    templates: &[ProgramTemplate],
    kb: &KnowledgeBase,
    config: &SampleConfig,
) -> Result<Vec<Program>, SampleError> {
    let mut streams: Vec<Grounder<'_>> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| ground(t, kb, &SampleConfig { rng_seed: derived_seed(config.rng_seed, i), ..config.clone() }))
        .collect();
    let mut live: Vec<bool> = vec![true; streams.len()];
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < config.max_programs && live.iter().any(|l| *l) {
        for (i, s) in streams.iter_mut().enumerate() {
            if !live[i] || out.len() >= config.max_programs {
                continue;
            }
            match s.next() {
                Some(p) => {
                    if seen.insert(p.canonical().to_owned()) {
                        out.push(p);
                    }
                }
                None => live[i] = false,
            }
        }
    }
    if out.is_empty() {
        return Err(SampleError::EmptyCorpus);
    }
    Ok(out)
}
